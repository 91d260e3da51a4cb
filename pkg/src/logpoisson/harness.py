"""End-to-end experiments: toy posterior recovery and the 1-D denoising benchmark."""
import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._io import atomic_write, write_json
from .exceptions import DomainError
from .nn.model import ArchSpec, build_model, forward, predict_denoised
from .nn.train import PriorTask, SignalTask, TrainConfig, psnr, train
from .oracle import DensityGrid, posterior_central_moments, posterior_density
from .priors import PriorSpec, SignalConfig, generate_signals, poisson_counts, trapezoid_weights
from .reconstruction import (ReconstructionConfig, count_interior_maxima, cumulative_sq_error,
                             eta_to_x, gram_charlier, gram_charlier_eta, write_curves_csv)
from .recursion import FdConfig, Mu1Estimator, baseline_x_recursion, recursion_scalar

log = logging.getLogger(__name__)

THREADS_ENV = "POISSON_POSTERIOR_THREADS"
VARIANCE_FLOOR = 1e-12


def metrics(x_hat, x):
    """``(psnr, mse)`` for signals with peak value 1; PSNR is capped at 100 dB."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape:
        raise DomainError(f"length mismatch: {x_hat.shape} vs {x.shape}")
    mse = float(np.mean((x_hat - x) ** 2))
    return psnr(mse), mse


def worker_count(jobs):
    env = os.environ.get(THREADS_ENV)
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, jobs))


# -- toy posterior -------------------------------------------------------------

@dataclass(frozen=True)
class ToyConfig:
    prior: PriorSpec = field(default_factory=PriorSpec.bimodal)
    y: float = 4.0
    K: int = 4
    recon: ReconstructionConfig = ReconstructionConfig()
    oracle_fd: FdConfig = FdConfig(step=1e-3)
    network_fd: FdConfig = FdConfig(step=0.05)
    train_networks: bool = True
    arch: ArchSpec = ArchSpec.mlp()
    train: TrainConfig = TrainConfig(batch_size=256, max_steps=6000, val_every=100,
                                     patience=20, val_size=4096)
    seed: int = 0


@dataclass
class RouteResult:
    moments: object
    density: object
    curve: np.ndarray
    total: float
    maxima: int

    def summary(self):
        return {"moments": self.moments.to_dict(), "total_sq_error": self.total,
                "interior_maxima": self.maxima}


@dataclass
class ToyReport:
    prior: dict
    y: float
    grid: np.ndarray
    truth: object
    routes: dict
    moment_table: dict
    training: dict = field(default_factory=dict)

    def to_dict(self):
        return {"prior": self.prior, "y": self.y, "grid_points": int(self.grid.size),
                "grid_range": [float(self.grid[0]), float(self.grid[-1])],
                "routes": {k: r.summary() for k, r in self.routes.items()},
                "moment_table": self.moment_table, "training": self.training}

    def write(self, out_dir):
        write_json(os.path.join(out_dir, "toy_report.json"), self.to_dict())
        write_curves_csv(os.path.join(out_dir, "toy_curves.csv"),
                         [(name, r.density, self.truth) for name, r in self.routes.items()])


def spike(location, grid):
    """Unit mass in the trapezoid cell of the grid point nearest ``location``."""
    vals = np.zeros_like(grid)
    i = int(np.argmin(np.abs(grid - location)))
    vals[i] = 1.0 / trapezoid_weights(grid)[i]
    return DensityGrid(grid, vals, "x")


def _reconstruct(moments, cfg, truth):
    rc = cfg.recon
    xg = truth.grid
    if not moments.moment(2) > VARIANCE_FLOOR:
        # degenerate posterior: no spread to expand around
        loc = math.exp(moments.mu1) if moments.domain == "eta" else moments.mu1
        dens = spike(loc, xg)
    elif moments.domain == "eta":
        dens = eta_to_x(gram_charlier_eta(moments, rc.eta_grid(moments), rc.order, rc.negativity), xg)
    else:
        dens = gram_charlier(moments, xg, rc.order, rc.negativity)
    curve, total = cumulative_sq_error(dens, truth)
    return RouteResult(moments, dens, curve, total, count_interior_maxima(dens))


def model_estimator(model, fd_step):
    """Wrap a scalar-input network as a first-moment estimator for the recursion."""
    domain = "eta" if model.target_domain == "log-x" else "x"
    return Mu1Estimator(lambda y: forward(model, y),
                        batch=lambda ys: forward(model, np.asarray(ys, dtype=np.float64)),
                        fd_step=fd_step, domain=domain)


def train_toy_networks(cfg):
    """Train the x- and log-x MLPs on ``(y, x)`` pairs from the prior; return both."""
    task = PriorTask(cfg.prior, gain=1.0)
    ys, _ = task.sample(np.random.default_rng(cfg.seed + 10_000), 100_000)
    shift, scale = float(np.mean(ys)), float(np.std(ys))
    tcfg = replace(cfg.train, task=task, data_seed=cfg.seed + 1, val_seed=cfg.seed + 2)
    nets = {}
    for domain in ("x", "log-x"):
        model = build_model(cfg.arch, cfg.seed, domain, input_shift=shift, input_scale=scale)
        nets[domain] = train(model, tcfg)
    return nets


def run_toy_posterior(cfg=ToyConfig()):
    """Oracle truth, recursion-based reconstructions, and their squared errors."""
    if cfg.recon.order > cfg.K:
        raise DomainError("reconstruction order exceeds the number of recovered moments")
    xg = cfg.recon.x_grid()
    truth = posterior_density(cfg.prior, cfg.y, grid=xg).normalized()
    routes = {}
    oracle_eta = Mu1Estimator.from_oracle(cfg.prior, "eta")
    oracle_x = Mu1Estimator.from_oracle(cfg.prior, "x")
    routes["oracle-eta"] = _reconstruct(recursion_scalar(oracle_eta, cfg.y, cfg.K, cfg.oracle_fd),
                                        cfg, truth)
    routes["oracle-x"] = _reconstruct(baseline_x_recursion(oracle_x, cfg.y, cfg.K, cfg.oracle_fd),
                                      cfg, truth)
    training = {}
    if cfg.train_networks:
        nets = train_toy_networks(cfg)
        for domain, (model, history) in nets.items():
            est = model_estimator(model, cfg.network_fd.step)
            if domain == "log-x":
                ms = recursion_scalar(est, cfg.y, cfg.K, cfg.network_fd)
                routes["network-eta"] = _reconstruct(ms, cfg, truth)
            else:
                ms = baseline_x_recursion(est, cfg.y, cfg.K, cfg.network_fd)
                routes["network-x"] = _reconstruct(ms, cfg, truth)
            training[domain] = {"steps": history[-1]["step"] if history else 0,
                                "best_val_psnr": model.meta.get("best_val_psnr"),
                                "rounds": len(history)}
    table = {"quadrature-eta": posterior_central_moments(cfg.prior, cfg.y, cfg.K, "eta").to_dict(),
             "quadrature-x": posterior_central_moments(cfg.prior, cfg.y, cfg.K, "x").to_dict()}
    for name, r in routes.items():
        table[name] = r.moments.to_dict()
    return ToyReport(cfg.prior.to_dict(), float(cfg.y), xg, truth, routes, table, training)


# -- denoising benchmark ---------------------------------------------------------

@dataclass(frozen=True)
class BenchConfig:
    zetas: tuple = (16.0, 32.0, 64.0)
    domains: tuple = ("log-x", "x")
    seeds: tuple = (0, 1, 2)
    signal: SignalConfig = SignalConfig()
    arch: ArchSpec = ArchSpec.conv1d(channels=32)
    train: TrainConfig = TrainConfig(batch_size=32, max_steps=800, val_every=50, patience=10,
                                     val_size=64)
    test_size: int = 256
    test_seed: int = 987_654
    trace_examples: int = 4


@dataclass
class BenchmarkTable:
    rows: list
    runs: list
    traces: dict = field(default_factory=dict)

    def row(self, zeta, domain):
        for r in self.rows:
            if r["zeta"] == zeta and r["domain"] == domain:
                return r
        raise KeyError((zeta, domain))

    def write(self, out_dir):
        cols = ["zeta", "domain", "seeds", "psnr_mean", "psnr_std", "mse_mean", "mse_std"]

        def table(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
        atomic_write(os.path.join(out_dir, "benchmark_table.csv"), table)
        if self.traces:
            def traces(fh):
                w = csv.writer(fh, lineterminator="\n")
                names = sorted(k for k in self.traces if k not in ("clean", "noisy", "zeta"))
                w.writerow(["zeta", "example", "index", "clean", "noisy"] + names)
                clean, noisy = self.traces["clean"], self.traces["noisy"]
                for e in range(clean.shape[0]):
                    for i in range(clean.shape[1]):
                        w.writerow([repr(self.traces["zeta"]), e, i, repr(float(clean[e, i])),
                                    repr(float(noisy[e, i]))]
                                   + [repr(float(self.traces[k][e, i])) for k in names])
            atomic_write(os.path.join(out_dir, "denoise_traces.csv"), traces)


def test_set(signal, gain, size, seed):
    """Held-out ``(y, x)`` pairs; the seed is shared by every model at this gain."""
    rng = np.random.default_rng([seed, int(round(gain * 1000))])
    x = generate_signals(signal, size, rng)
    return poisson_counts(x, gain, rng) / gain, x


def run_seeds(seed, gain):
    """Independent initialisation, training and validation seeds for one run."""
    ss = np.random.SeedSequence([seed, int(round(gain * 1000))])
    init, data, val = (int(c.generate_state(1)[0]) for c in ss.spawn(3))
    return init, data, val


def train_denoiser(signal, gain, domain, seed, arch, tcfg):
    init, data, val = run_seeds(seed, gain)
    model = build_model(arch, init, domain, floor=signal.floor)
    cfg = replace(tcfg, task=SignalTask(signal, gain), data_seed=data, val_seed=val)
    return train(model, cfg)


def evaluate(model, y, x):
    return metrics(predict_denoised(model, y), x)


def _bench_job(args):
    cfg, gain, domain, seed = args
    model, history = train_denoiser(cfg.signal, gain, domain, seed, cfg.arch, cfg.train)
    y, x = test_set(cfg.signal, gain, cfg.test_size, cfg.test_seed)
    p, m = evaluate(model, y, x)
    log.info("zeta=%g domain=%s seed=%d psnr=%.3f mse=%.5f steps=%d", gain, domain, seed, p, m,
             history[-1]["step"] if history else 0)
    return {"zeta": gain, "domain": domain, "seed": seed, "psnr": p, "mse": m,
            "steps": history[-1]["step"] if history else 0}, model


def run_denoise_benchmark(cfg=BenchConfig(), workers=None):
    """Train every (gain, domain, seed) model, test it, and aggregate over seeds."""
    jobs = [(cfg, float(z), d, s) for z in cfg.zetas for d in cfg.domains for s in cfg.seeds]
    workers = worker_count(len(jobs)) if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_bench_job, jobs))
    else:
        results = [_bench_job(j) for j in jobs]
    runs = [r for r, _ in results]
    rows = []
    for z in cfg.zetas:
        for d in cfg.domains:
            sel = [r for r in runs if r["zeta"] == float(z) and r["domain"] == d]
            p = np.array([r["psnr"] for r in sel])
            m = np.array([r["mse"] for r in sel])
            rows.append({"zeta": float(z), "domain": d, "seeds": len(sel),
                         "psnr_mean": float(p.mean()), "psnr_std": float(p.std()),
                         "mse_mean": float(m.mean()), "mse_std": float(m.std())})
    top = float(max(cfg.zetas))
    traces = {}
    if cfg.trace_examples > 0:
        y, x = test_set(cfg.signal, top, cfg.test_size, cfg.test_seed)
        k = min(cfg.trace_examples, len(x))
        traces = {"zeta": top, "clean": x[:k], "noisy": y[:k]}
        first = min(cfg.seeds)
        for (job, (_, model)) in zip(jobs, results):
            if job[1] == top and job[3] == first:
                name = "log_net" if job[2] == "log-x" else "x_net"
                traces[name] = predict_denoised(model, y[:k])
    return BenchmarkTable(rows, runs, traces)


def psnr_is_monotone(table, domain):
    vals = [table.row(float(z), domain)["psnr_mean"] for z in sorted({r["zeta"] for r in table.rows})]
    return all(b > a for a, b in zip(vals, vals[1:]))


PAPER_TABLE = {16.0: {"log-x": 24.12, "x": 24.17}, 32.0: {"log-x": 25.92, "x": 25.91},
               64.0: {"log-x": 28.08, "x": 28.32}}


def isclose_db(a, b, tol):
    return math.isfinite(a) and abs(a - b) <= tol


def bench_manifest_seeds(cfg):
    """Every seed a benchmark run consumes, keyed for the manifest."""
    runs = {}
    for z in cfg.zetas:
        for s in cfg.seeds:
            init, data, val = run_seeds(s, float(z))
            runs[f"zeta={float(z):g},seed={s}"] = {"init": init, "data": data, "validation": val}
    return {"seeds": list(cfg.seeds), "test_seed": cfg.test_seed, "runs": runs}
