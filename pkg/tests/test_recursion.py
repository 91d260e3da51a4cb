import math
import warnings

import numpy as np
import pytest
from scipy import special as sp

from logpoisson import oracle, recursion
from logpoisson.exceptions import DomainError
from logpoisson.priors import PriorSpec
from logpoisson.recursion import FdConfig, FdNoiseWarning, Mu1Estimator


def psi(n, x):
    return float(sp.polygamma(n, x))


@pytest.mark.parametrize("order,acc", [(1, 2), (1, 4), (2, 4), (3, 4), (4, 6), (5, 4)])
def test_central_stencil_exact_on_polynomials(order, acc):
    offs, w = recursion.central_stencil(order, acc)
    # exact for monomials up to degree order + acc - 1
    for deg in range(order + acc):
        got = w @ offs.astype(float) ** deg
        want = math.factorial(order) if deg == order else 0.0
        assert got == pytest.approx(want, abs=1e-9)


def test_fornberg_matches_classic_weights():
    c = recursion.fornberg_weights([-1, 0, 1], 2)
    np.testing.assert_allclose(c[:, 1], [-0.5, 0, 0.5], atol=1e-15)
    np.testing.assert_allclose(c[:, 2], [1, -2, 1], atol=1e-15)


def test_symbolic_polynomials_are_cumulant_relations():
    text = recursion.describe_polynomials(6)
    assert text[0] == "mu2 = d1"
    assert text[2] == "mu4 = d3 + 3*d1^2"
    assert text[4] == "mu6 = d5 + 10*d2^2 + 15*d1*d3 + 15*d1^3"
    # with d_m = kappa_{m+1} the recursion must reproduce central moments from cumulants
    kappa = [None, 0.3, 0.7, -0.2, 0.5, 0.11, -0.4]
    derivs = kappa[2:]
    got = recursion.evaluate_moments(derivs, 6)
    want = [oracle._central_from_cumulants(kappa, k) for k in range(2, 7)]
    np.testing.assert_allclose(got, want, rtol=1e-14)


@pytest.mark.parametrize("y", range(11))
def test_conjugate_exact_callback(y):
    est = Mu1Estimator.gamma_conjugate(2.0, 1.0)
    ms = recursion.recursion_scalar(est, float(y), K=4)
    a = 2.0 + y
    assert ms.central[0] == pytest.approx(psi(1, a), abs=1e-8)
    assert ms.central[1] == pytest.approx(psi(2, a), abs=1e-8)
    assert ms.central[2] == pytest.approx(psi(3, a) + 3 * psi(1, a) ** 2, abs=1e-8)


def test_conjugate_values_at_three():
    ms = recursion.recursion_scalar(Mu1Estimator.gamma_conjugate(2, 1), 3.0, K=4)
    assert ms.mu1 == pytest.approx(0.8129705, abs=1e-7)
    np.testing.assert_allclose(ms.central, [0.2213230, -0.0487897, 0.1683791], atol=1e-6)


def test_conjugate_finite_difference_agrees_with_callback():
    exact = Mu1Estimator.gamma_conjugate(2, 1)
    fd_only = Mu1Estimator(exact.evaluator)
    for y in (1.0, 3.0, 8.0):
        a = recursion.recursion_scalar(exact, y, K=3)
        b = recursion.recursion_scalar(fd_only, y, K=3, fd=FdConfig(step=1e-2))
        np.testing.assert_allclose(b.central, a.central, atol=1e-4)


def test_constant_mu1_gives_zero_moments():
    est = Mu1Estimator(lambda y: math.log(2.0))
    ms = recursion.recursion_scalar(est, 4.0, K=6, fd=FdConfig(step=1e-2, max_order=5))
    assert np.allclose(ms.central, 0.0, atol=1e-12)
    assert ms.mu1 == pytest.approx(math.log(2.0))


def test_order_prefix_consistency():
    est = Mu1Estimator.from_oracle(PriorSpec.bimodal())
    k3 = recursion.recursion_scalar(est, 4.0, K=3)
    k4 = recursion.recursion_scalar(est, 4.0, K=4)
    np.testing.assert_allclose(k4.central[:2], k3.central, rtol=1e-12)


@pytest.mark.parametrize("y", [1.0, 4.0, 10.0])
def test_oracle_backed_recursion_matches_quadrature(y):
    prior = PriorSpec.bimodal()
    ms = recursion.recursion_scalar(Mu1Estimator.from_oracle(prior), y, K=4)
    q = oracle.posterior_central_moments(prior, y, K=4)
    for got, want in zip(ms.central, q.central):
        assert abs(got - want) <= max(1e-3, 0.01 * abs(want))


def test_baseline_on_gamma_is_not_the_posterior_variance():
    ms = recursion.baseline_x_recursion(Mu1Estimator.gamma_conjugate(2, 1, domain="x"), 3.0, K=2)
    assert ms.central[0] == pytest.approx(0.5)
    true_var = oracle.posterior_central_moments(PriorSpec.gamma(2, 1), 3.0, 2, "x").central[0]
    assert true_var == pytest.approx(1.25, abs=1e-6)
    assert ms.domain == "x"


def test_baseline_point_mass_is_zero():
    est = Mu1Estimator.from_oracle(PriorSpec.point_mass(2.0), domain="x")
    ms = recursion.baseline_x_recursion(est, 3.0, K=4)
    assert np.allclose(ms.central, 0.0, atol=1e-10)


def test_tweedie_examples():
    y = 2.0
    assert recursion.tweedie_eta(-psi(0, y + 1), y) == pytest.approx(0.0, abs=1e-15)
    assert recursion.tweedie_eta(-0.4431472, 3.0) == pytest.approx(0.8129705, abs=1e-6)
    x0 = 3.3
    assert recursion.tweedie_eta(math.log(x0) - psi(0, y + 1), y) == pytest.approx(math.log(x0))
    with pytest.raises(DomainError):
        recursion.tweedie_eta(0.0, -1.0)


def test_noise_warning_on_noisy_estimator():
    rng = np.random.default_rng(0)
    est = Mu1Estimator(lambda y: math.log(y) + 1e-6 * rng.standard_normal())
    with pytest.warns(FdNoiseWarning):
        recursion.recursion_scalar(est, 4.0, K=4, fd=FdConfig(step=1e-3))


def test_no_warning_for_smooth_estimator():
    est = Mu1Estimator(Mu1Estimator.gamma_conjugate(2, 1).evaluator)
    with warnings.catch_warnings():
        warnings.simplefilter("error", FdNoiseWarning)
        recursion.recursion_scalar(est, 4.0, K=4, fd=FdConfig(step=1e-2))


def test_recursion_validates_order():
    est = Mu1Estimator.gamma_conjugate(2, 1)
    with pytest.raises(DomainError):
        recursion.recursion_scalar(est, 1.0, K=7)
    with pytest.raises(DomainError):
        recursion.recursion_scalar(Mu1Estimator(est.evaluator), 1.0, K=6,
                                   fd=FdConfig(max_order=3))
    with pytest.raises(DomainError):
        FdConfig(step=0.0)


def _coordinatewise_gamma(shape, rate):
    def f(y):
        return sp.digamma(shape + np.asarray(y)) - math.log(rate + 1)
    return Mu1Estimator(f, batch=f, fd_step=1e-3)


def test_multivariate_product_prior_is_diagonal():
    y = np.array([0.5, 1.0, 3.0, 7.0, 12.0])
    ms = recursion.recursion_multivariate(_coordinatewise_gamma(2, 1), y, third=True)
    cov = ms.central[0]
    off = cov - np.diag(np.diag(cov))
    assert np.max(np.abs(off)) <= 1e-3
    for i, yi in enumerate(y):
        scalar = recursion.recursion_scalar(Mu1Estimator.gamma_conjugate(2, 1), yi, K=3)
        assert cov[i, i] == pytest.approx(scalar.central[0], abs=1e-4)
        assert ms.central[1][i] == pytest.approx(scalar.central[1], abs=1e-4)


def test_multivariate_coupled_jacobian_and_symmetrize():
    a = np.array([[2.0, 0.3, 0.0], [0.1, 1.0, -0.4], [0.0, 0.2, 0.5]])
    f = lambda y: np.tanh(np.asarray(y) @ a.T)
    y = np.array([0.2, -0.1, 0.3])
    ms = recursion.recursion_multivariate(Mu1Estimator(f, batch=f, fd_step=1e-3), y)
    want = (1 - np.tanh(a @ y) ** 2)[:, None] * a
    np.testing.assert_allclose(ms.central[0], want, atol=1e-9)
    sym = recursion.recursion_multivariate(Mu1Estimator(f, batch=f, fd_step=1e-3), y,
                                           symmetrize=True).central[0]
    np.testing.assert_allclose(sym, 0.5 * (want + want.T), atol=1e-9)


def test_multivariate_rejects_long_vectors():
    with pytest.raises(DomainError):
        recursion.recursion_multivariate(_coordinatewise_gamma(2, 1), np.ones(1025))
