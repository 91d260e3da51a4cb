"""MSE training with Adam, on-the-fly synthetic data, early stopping on validation PSNR."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DomainError, NumericalError
from ..priors import PriorSpec, SignalConfig, _sample, generate_signals, poisson_counts
from .model import forward, loss_and_grad, mse_loss, predict_denoised

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SignalTask:
    """Smooth synthetic signals corrupted at a fixed gain; the network sees y."""

    signal: SignalConfig = SignalConfig()
    gain: float = 64.0
    peak = 1.0

    def sample(self, rng, count):
        x = generate_signals(self.signal, count, rng)
        return poisson_counts(x, self.gain, rng) / self.gain, x

    def estimate(self, model, y):
        return predict_denoised(model, y)


@dataclass(frozen=True)
class PriorTask:
    """Scalar pairs ``x ~ prior``, ``y ~ Poisson(gain x) / gain``."""

    prior: PriorSpec = field(default_factory=PriorSpec.bimodal)
    gain: float = 1.0

    @property
    def peak(self):
        return self.prior.support[1]

    def sample(self, rng, count):
        x = _sample(self.prior, count, rng)
        return poisson_counts(x, self.gain, rng) / self.gain, x

    def estimate(self, model, y):
        out = np.asarray(forward(model, y))
        if model.target_domain == "log-x":
            out = np.exp(out)
        return np.clip(out, *self.prior.support)


@dataclass(frozen=True)
class TrainConfig:
    task: object = SignalTask()
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    batch_size: int = 64
    max_steps: int = 20000
    val_every: int = 50
    patience: int = 20
    val_size: int = 64
    data_seed: int = 1
    val_seed: int = 2

    def __post_init__(self):
        if not self.lr > 0:
            raise DomainError("learning rate must be positive")
        if self.patience < 1 or self.val_every < 1 or self.batch_size < 1:
            raise DomainError("patience, val_every and batch_size must be >= 1")
        if self.max_steps < 0:
            raise DomainError("max_steps must be >= 0")


def targets_for(model, x):
    if model.target_domain == "log-x":
        return np.log(np.clip(x, model.floor, None))
    return x


def psnr(mse, peak=1.0):
    if mse < 1e-10:
        return 100.0
    return 10.0 * math.log10(peak * peak / mse)


class Adam:
    def __init__(self, size, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def validation_psnr(model, task, y, x):
    est = task.estimate(model, y)
    return psnr(float(np.mean((est - x) ** 2)), task.peak)


class TrainingDiverged(NumericalError):
    def __init__(self, message, checkpoint):
        super().__init__(message)
        self.checkpoint = checkpoint


def train(model, cfg):
    """Train a copy of ``model``; return ``(best_model, history)``.

    ``history`` holds one record per validation round with the step, the
    mean training loss since the previous round and the validation PSNR.
    The returned weights are those with the highest validation PSNR.
    """
    model = model.copy()
    history = []
    if cfg.max_steps == 0:
        return model, history
    task = cfg.task
    val_y, val_x = task.sample(np.random.default_rng(cfg.val_seed), cfg.val_size)
    rng = np.random.default_rng(cfg.data_seed)
    opt = Adam(model.params.size, cfg.lr, cfg.betas, cfg.adam_eps)
    best = model.copy()
    best_psnr = -math.inf
    stale = 0
    running = []
    last_good = model.copy()
    for step in range(1, cfg.max_steps + 1):
        y, x = task.sample(rng, cfg.batch_size)
        # overflow is detected explicitly below, so numpy's warnings are noise here
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grad = loss_and_grad(model, y, targets_for(model, x))
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise TrainingDiverged(f"training loss became non-finite at step {step}",
                                       last_good)
            opt.step(model.params, grad)
        running.append(loss)
        if step % cfg.val_every == 0 or step == cfg.max_steps:
            if not np.all(np.isfinite(model.params)):
                raise TrainingDiverged(f"weights became non-finite at step {step}", last_good)
            last_good = model.copy()
            vp = validation_psnr(model, task, val_y, val_x)
            history.append({"step": step, "train_loss": float(np.mean(running)), "val_psnr": vp})
            running = []
            if vp > best_psnr:
                best_psnr, best, stale = vp, model.copy(), 0
            else:
                stale += 1
            log.debug("step %d loss %.6g val_psnr %.3f", step, history[-1]["train_loss"], vp)
            if stale >= cfg.patience:
                break
    best.meta = dict(best.meta, best_val_psnr=best_psnr, steps=history[-1]["step"])
    return best, history


def grad_check_report(model, inputs, targets, fd_step=1e-5, n_params=200, seed=0, floor=1e-7):
    """Worst parameter of a gradient check, with one-sided differences.

    Returns a dict with the largest relative error ``max_rel_error`` between
    backprop and the central difference (``|a - n| / max(|a|, |n|, floor)``;
    the floor sits above the central-difference roundoff, roughly
    ``eps * loss / fd_step``) and, for the worst parameter, its index, the
    analytic and central values, and the forward and backward one-sided
    differences. When the one-sided values disagree the loss has a kink
    (a ReLU switching) within ``fd_step`` of the parameter, and the
    central difference there is not a derivative.
    """
    _, grad = loss_and_grad(model, inputs, targets)
    rng = np.random.default_rng(seed)
    size = model.params.size
    idx = rng.choice(size, size=min(n_params, size), replace=False)
    probe = model.copy()

    def loss_at(i, delta):
        orig = probe.params[i]
        probe.params[i] = orig + delta
        val = mse_loss(probe, inputs, targets)
        probe.params[i] = orig
        return val

    worst = {"max_rel_error": 0.0, "index": None}
    for i in idx:
        up, down = loss_at(i, fd_step), loss_at(i, -fd_step)
        num = (up - down) / (2 * fd_step)
        err = abs(grad[i] - num) / max(abs(grad[i]), abs(num), floor)
        if err > worst["max_rel_error"] or worst["index"] is None:
            base = loss_at(i, 0.0)
            worst = {"max_rel_error": float(err), "index": int(i), "analytic": float(grad[i]),
                     "central": float(num), "forward": float((up - base) / fd_step),
                     "backward": float((base - down) / fd_step)}
    return worst


def grad_check(model, inputs, targets, fd_step=1e-5, n_params=200, seed=0, floor=1e-7):
    """Largest relative error between backprop and central-difference gradients
    over ``n_params`` randomly drawn parameters; see :func:`grad_check_report`."""
    return grad_check_report(model, inputs, targets, fd_step, n_params, seed,
                             floor)["max_rel_error"]
