import json
import math

import mpmath
import numpy as np
import pytest
from scipy import special as sp, stats

from logpoisson import oracle
from logpoisson.exceptions import DomainError
from logpoisson.oracle import DensityGrid, MomentSet
from logpoisson.priors import PriorSpec

GAMMA = PriorSpec.gamma(2, 1)
BIMODAL = PriorSpec.bimodal()


def nb_log_marginal(a, b, y):
    """Negative-binomial marginal of a Gamma(a, rate b) prior with unit-gain Poisson."""
    return (sp.gammaln(a + y) - sp.gammaln(a) - sp.gammaln(y + 1)
            + a * math.log(b / (b + 1)) - y * math.log(b + 1))


def test_gamma_marginal_at_three():
    assert oracle.marginal_log(GAMMA, 3.0) == pytest.approx(math.log(0.125), abs=1e-7)


def test_gamma_marginal_matches_closed_form_over_y():
    err = max(abs(oracle.marginal_log(GAMMA, y) - nb_log_marginal(2, 1, y)) for y in range(21))
    assert err <= 1e-6


def test_point_mass_marginal_at_zero():
    assert oracle.marginal_log(PriorSpec.point_mass(2.0), 0.0) == pytest.approx(-2.0, abs=1e-14)


def test_marginal_for_non_integer_y_uses_gamma_extension():
    y = 2.5
    want = math.log(float(mpmath.quad(
        lambda x: mpmath.exp(y * mpmath.log(x) - x - mpmath.loggamma(y + 1)) * x * mpmath.exp(-x)
        / (1 - mpmath.gammainc(2, 60, mpmath.inf, regularized=True)), [1e-10, 5, 60])))
    assert oracle.marginal_log(GAMMA, y) == pytest.approx(want, abs=1e-7)


def test_gamma_posterior_density_is_conjugate():
    grid = np.linspace(0.01, 20, 4000)
    dens = oracle.posterior_density(GAMMA, 3.0, grid=grid)
    want = stats.gamma(a=5, scale=0.5).pdf(grid)
    assert np.max(np.abs(dens.values - want)) <= 1e-6


@pytest.mark.parametrize("prior", [GAMMA, BIMODAL, PriorSpec.lognormal_mixture([1], [1], [0.5])])
@pytest.mark.parametrize("y", [0.0, 1.0, 4.0, 17.5])
def test_posterior_densities_normalised(prior, y):
    d = oracle.posterior_density(prior, y)
    assert np.all(d.values >= 0)
    assert d.integral() == pytest.approx(1.0, abs=1e-6)


def test_point_mass_posterior_is_point_mass():
    p = PriorSpec.point_mass(2.0)
    for y in (0.0, 3.0, 10.0):
        d = oracle.posterior_density(p, y, grid=np.linspace(0.01, 20, 2000))
        assert np.count_nonzero(d.values) == 1
        assert d.grid[np.argmax(d.values)] == pytest.approx(2.0, abs=0.01)
        assert d.integral() == pytest.approx(1.0)


def test_bimodal_posterior_at_four_has_two_modes():
    d = oracle.posterior_density(BIMODAL, 4.0, grid=np.linspace(0.01, 20, 2000))
    v = d.values
    peaks = np.flatnonzero((v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:]))
    assert len(peaks) == 2


def test_point_mass_moments():
    ms = oracle.posterior_central_moments(PriorSpec.point_mass(2.0), 3.0, K=4)
    assert ms.mu1 == pytest.approx(math.log(2))
    assert ms.central == [0.0, 0.0, 0.0]


def test_gamma_moments_at_three():
    ms = oracle.posterior_central_moments(GAMMA, 3.0, K=4)
    assert ms.mu1 == pytest.approx(0.8129705, abs=1e-6)
    assert ms.central[0] == pytest.approx(0.2213230, abs=1e-6)
    assert ms.central[1] == pytest.approx(-0.0487897, abs=1e-6)
    assert ms.central[2] == pytest.approx(0.1683791, abs=1e-6)


@pytest.mark.parametrize("y", [0.0, 1.0, 3.0, 7.5, 20.0])
def test_gamma_conjugacy_all_orders(y):
    got = oracle.posterior_central_moments(GAMMA, y, K=6)
    want = oracle.gamma_conjugate_moments(2, 1, y, K=6)
    assert got.mu1 == pytest.approx(want.mu1, abs=1e-5)
    np.testing.assert_allclose(got.central, want.central, atol=1e-5)


def test_conjugate_closed_form_against_mpmath_moments():
    # central moments of log X with X ~ Gamma(5, rate 2), by direct integration
    pdf = lambda x: 2 ** 5 * x ** 4 * mpmath.exp(-2 * x) / 24
    m1 = mpmath.quad(lambda x: mpmath.log(x) * pdf(x), [0, 2.5, mpmath.inf])
    want = [float(mpmath.quad(lambda x: (mpmath.log(x) - m1) ** k * pdf(x), [0, 2.5, mpmath.inf]))
            for k in range(2, 7)]
    ms = oracle.gamma_conjugate_moments(2, 1, 3.0, K=6)
    assert ms.mu1 == pytest.approx(float(m1), abs=1e-12)
    np.testing.assert_allclose(ms.central, want, rtol=1e-9)


def test_x_domain_moments_for_gamma():
    ms = oracle.posterior_central_moments(GAMMA, 3.0, K=3, domain="x")
    assert ms.mu1 == pytest.approx(2.5, abs=1e-6)  # (a + y) / (b + 1)
    assert ms.central[0] == pytest.approx(1.25, abs=1e-6)
    assert ms.central[1] == pytest.approx(2 * 5 / 8, abs=1e-5)


def test_moment_order_bounds():
    with pytest.raises(DomainError):
        oracle.posterior_central_moments(GAMMA, 1.0, K=7)
    with pytest.raises(DomainError):
        oracle.posterior_central_moments(GAMMA, -1.0, K=2)


def test_marginal_score_gamma():
    want = sp.digamma(5) - sp.digamma(4) - math.log(2)
    assert oracle.marginal_score(GAMMA, 3.0) == pytest.approx(want, abs=1e-5)
    assert want == pytest.approx(-0.4431472, abs=1e-7)


def test_marginal_score_point_mass():
    y = 2.7
    want = math.log(3.0) - sp.digamma(y + 1)
    assert oracle.marginal_score(PriorSpec.point_mass(3.0), y) == pytest.approx(want, abs=1e-6)


def test_marginal_score_needs_y_above_step():
    with pytest.raises(DomainError):
        oracle.marginal_score(GAMMA, 5e-4)


def test_likelihood_log_derivative_identity():
    rng = np.random.default_rng(0)
    h = 1e-5
    for x, y in zip(rng.uniform(0.05, 15, 20), rng.uniform(0.5, 30, 20)):
        p = lambda t: math.exp(oracle.log_likelihood(t, x))
        num = (p(y + h) - p(y - h)) / (2 * h)
        want = p(y) * (math.log(x) - sp.digamma(y + 1))
        assert num == pytest.approx(want, rel=1e-6, abs=1e-300)


def test_density_grid_csv_round_trip(tmp_path):
    d = oracle.posterior_density(BIMODAL, 4.0, grid_size=200)
    path = tmp_path / "post.csv"
    d.to_csv(path)
    back = DensityGrid.from_csv(path)
    assert np.array_equal(back.grid, d.grid) and np.array_equal(back.values, d.values)
    assert path.read_text().splitlines()[0] == "support,density"


def test_density_grid_rejects_bad_grid():
    with pytest.raises(DomainError):
        DensityGrid([0.0, 1.0, 1.0], [1, 1, 1])


def test_moment_set_json_round_trip():
    ms = oracle.posterior_central_moments(BIMODAL, 4.0, K=4)
    d = json.loads(ms.to_json())
    assert set(d) == {"y", "domain", "K", "mu1", "central"} and d["K"] == 4
    back = MomentSet.from_dict(d)
    assert back.mu1 == ms.mu1 and back.central == ms.central
