"""Fixed denoiser architectures with hand-derived backpropagation.

Two architectures exist: a scalar-input MLP for the toy posterior problem
and a 1-D convolutional net (five ``kernel``-wide convolutions with reflect
padding, then a 1x1 convolution to one channel) for signal denoising.

Parameters live in one flat float64 vector. Layout, layer by layer in
forward order: the weight array in C order, then the bias vector. Dense
weights have shape ``(out, in)``; convolution weights ``(out, in, kernel)``.
"""
import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .._io import atomic_write
from ..exceptions import DomainError
from . import kernels

ACTIVATIONS = ("relu", "leaky_relu", "tanh", "identity")
LEAKY_SLOPE = 0.01
FORMAT_VERSION = 1
MAGIC = b"LOGPOISSON-MODEL\n"


@dataclass(frozen=True)
class ArchSpec:
    kind: str = "conv1d"
    widths: tuple = (1, 64, 64, 1)
    channels: int = 64
    conv_layers: int = 5
    kernel: int = 7
    activation: str = "relu"
    padding: str = "reflect"

    def __post_init__(self):
        if self.kind not in ("mlp", "conv1d"):
            raise DomainError(f"unknown architecture kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")
        if self.padding != "reflect":
            raise DomainError("only reflect padding is supported")
        if self.kind == "mlp":
            object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
            if len(self.widths) < 2 or min(self.widths) < 1:
                raise DomainError("MLP needs >= 2 widths, all >= 1")
        else:
            if self.kernel < 1 or self.kernel % 2 == 0:
                raise DomainError("kernel size must be odd")
            if self.channels < 1 or self.conv_layers < 1:
                raise DomainError("channels and conv_layers must be >= 1")

    @classmethod
    def mlp(cls, widths=(1, 64, 64, 1), activation="tanh"):
        return cls(kind="mlp", widths=tuple(widths), activation=activation)

    @classmethod
    def conv1d(cls, channels=64, kernel=7, activation="relu", conv_layers=5):
        return cls(kind="conv1d", channels=channels, kernel=kernel, activation=activation,
                   conv_layers=conv_layers)

    def layer_shapes(self):
        """``(weight_shape, bias_len)`` per layer, in forward order."""
        if self.kind == "mlp":
            return [((o, i), o) for i, o in zip(self.widths[:-1], self.widths[1:])]
        shapes = []
        cin = 1
        for _ in range(self.conv_layers):
            shapes.append(((self.channels, cin, self.kernel), self.channels))
            cin = self.channels
        shapes.append(((1, cin, 1), 1))
        return shapes

    def n_params(self):
        return sum(math.prod(w) + b for w, b in self.layer_shapes())

    def to_dict(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "widths" in d:
            d["widths"] = tuple(d["widths"])
        return cls(**d)


@dataclass
class DenoiserModel:
    """Architecture, flat weights, and target domain (``"x"`` or ``"log-x"``).

    Network inputs are ``(y - input_shift) / input_scale``.
    """

    arch: ArchSpec
    params: np.ndarray
    target_domain: str = "x"
    input_shift: float = 0.0
    input_scale: float = 1.0
    floor: float = 1e-3
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.target_domain not in ("x", "log-x"):
            raise DomainError(f"target_domain must be 'x' or 'log-x', got {self.target_domain!r}")
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (self.arch.n_params(),):
            raise DomainError(f"expected {self.arch.n_params()} parameters, got {self.params.shape}")
        if not np.all(np.isfinite(self.params)):
            raise DomainError("model weights must be finite")
        if not self.input_scale > 0:
            raise DomainError("input_scale must be positive")

    def copy(self):
        return DenoiserModel(self.arch, self.params.copy(), self.target_domain, self.input_shift,
                             self.input_scale, self.floor, dict(self.meta))

    def header(self):
        return {"format": "logpoisson-model", "version": FORMAT_VERSION,
                "arch": self.arch.to_dict(), "target_domain": self.target_domain,
                "input_shift": self.input_shift, "input_scale": self.input_scale,
                "floor": self.floor, "n_params": int(self.params.size), "dtype": "<f8",
                "meta": self.meta}


def save_model(model, path):
    """Write ``MAGIC``, a little-endian uint64 header length, the JSON header,
    then the weights as little-endian float64."""
    header = json.dumps(model.header(), sort_keys=True).encode("utf-8")

    def write(fh):
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(model.params.astype("<f8").tobytes())
    atomic_write(path, write, mode="wb")


def load_model(path):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise DomainError(f"{path} is not a logpoisson model file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("version") != FORMAT_VERSION:
            raise DomainError(f"unsupported model file version {header.get('version')}")
        params = np.frombuffer(fh.read(8 * header["n_params"]), dtype="<f8").astype(np.float64)
    return DenoiserModel(ArchSpec.from_dict(header["arch"]), params, header["target_domain"],
                         header["input_shift"], header["input_scale"], header["floor"],
                         header.get("meta", {}))


def init_params(arch, seed, zero=False):
    """Fan-in scaled uniform init ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
    rng = np.random.default_rng(seed)
    chunks = []
    for wshape, blen in arch.layer_shapes():
        fan_in = math.prod(wshape[1:])
        bound = 1.0 / math.sqrt(fan_in)
        if zero:
            chunks += [np.zeros(math.prod(wshape)), np.zeros(blen)]
        else:
            chunks += [rng.uniform(-bound, bound, math.prod(wshape)),
                       rng.uniform(-bound, bound, blen)]
    return np.concatenate(chunks)


def build_model(arch, seed, target_domain="x", zero=False, **kwargs):
    return DenoiserModel(arch, init_params(arch, seed, zero), target_domain, **kwargs)


def _views(arch, params):
    out = []
    pos = 0
    for wshape, blen in arch.layer_shapes():
        nw = math.prod(wshape)
        out.append((params[pos:pos + nw].reshape(wshape), params[pos + nw:pos + nw + blen]))
        pos += nw + blen
    return out


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _act_grad(z, a, kind):
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    if kind == "leaky_relu":
        return np.where(z > 0, 1.0, LEAKY_SLOPE)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def _prepare(model, inputs):
    x = np.asarray(inputs, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError("network input must be finite")
    return (x - model.input_shift) / model.input_scale


def _tap_major(w):
    """``(out, in, k)`` weights as the ``(out, k * in)`` matrix matching im2col."""
    cout, cin, k = w.shape
    return w.transpose(0, 2, 1).reshape(cout, k * cin)


def raw_forward(arch, params, inputs, keep=False):
    """Forward pass on normalised inputs.

    ``inputs`` is ``(batch,)`` for the MLP or ``(batch, length)`` for the
    conv net. Returns the output of matching shape and, with ``keep``, the
    cache needed by :func:`raw_backward`.
    """
    layers = _views(arch, params)
    cache = []
    if arch.kind == "mlp":
        h = inputs.reshape(-1, 1)
        for i, (w, b) in enumerate(layers):
            z = h @ w.T + b
            a = z if i == len(layers) - 1 else _act(z, arch.activation)
            if keep:
                cache.append((h, z, a))
            h = a
        return h[:, 0], cache
    bsz, n = inputs.shape
    kernels.check_length(n, arch.kernel)
    h = inputs[:, :, None]
    for i, (w, b) in enumerate(layers):
        cout, cin, k = w.shape
        cols = kernels.im2col(np.ascontiguousarray(h), k) if k > 1 else h.reshape(bsz * n, cin)
        z = (cols @ _tap_major(w).T + b).reshape(bsz, n, cout)
        a = z if i == len(layers) - 1 else _act(z, arch.activation)
        if keep:
            cache.append((cols, z, a))
        h = a
    return h[:, :, 0], cache


def raw_backward(arch, params, cache, dout):
    """Gradient of a scalar loss w.r.t. the flat parameters, given ``dL/d output``."""
    layers = _views(arch, params)
    grads = [None] * len(layers)
    if arch.kind == "mlp":
        g = dout.reshape(-1, 1)
        for i in range(len(layers) - 1, -1, -1):
            w, _ = layers[i]
            h, z, a = cache[i]
            if i != len(layers) - 1:
                g = g * _act_grad(z, a, arch.activation)
            grads[i] = (g.T @ h, g.sum(axis=0))
            g = g @ w
    else:
        bsz, n = dout.shape
        g = dout[:, :, None]
        for i in range(len(layers) - 1, -1, -1):
            w, _ = layers[i]
            cout, cin, k = w.shape
            cols, z, a = cache[i]
            if i != len(layers) - 1:
                g = g * _act_grad(z, a, arch.activation)
            g2 = g.reshape(bsz * n, cout)
            grads[i] = ((g2.T @ cols).reshape(cout, k, cin).transpose(0, 2, 1), g2.sum(axis=0))
            if i == 0:
                break
            dcols = g2 @ _tap_major(w)
            if k > 1:
                g = kernels.col2im(np.ascontiguousarray(dcols), bsz, n, cin, k)
            else:
                g = dcols.reshape(bsz, n, cin)
    return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])


def forward(model, inputs):
    """Network output for a single input or a batch.

    For the MLP a scalar gives a scalar and a vector is treated as a batch.
    For the conv net a 1-D signal gives a 1-D output and a 2-D array is a
    batch of signals.
    """
    x = _prepare(model, inputs)
    if model.arch.kind == "mlp":
        out, _ = raw_forward(model.arch, model.params, np.atleast_1d(x).ravel())
        return float(out[0]) if x.ndim == 0 else out.reshape(x.shape)
    if x.ndim == 1:
        return raw_forward(model.arch, model.params, x[None, :])[0][0]
    return raw_forward(model.arch, model.params, x)[0]


def loss_and_grad(model, inputs, targets):
    """Mean squared error and its gradient with respect to ``model.params``."""
    x = _prepare(model, inputs)
    if model.arch.kind == "mlp":
        x = x.ravel()
    out, cache = raw_forward(model.arch, model.params, x, keep=True)
    diff = out - np.asarray(targets, dtype=np.float64).reshape(out.shape)
    loss = float(np.mean(diff * diff))
    grad = raw_backward(model.arch, model.params, cache, 2.0 * diff / diff.size)
    return loss, grad


def mse_loss(model, inputs, targets):
    out = forward(model, inputs)
    diff = np.asarray(out) - np.asarray(targets, dtype=np.float64).reshape(np.shape(out))
    return float(np.mean(diff * diff))


def predict_denoised(model, y):
    """Point estimate of x: the clamped output, or ``exp`` of it for log-x models."""
    out = np.asarray(forward(model, y))
    if model.target_domain == "log-x":
        return np.clip(np.exp(out), model.floor, 1.0)
    return np.clip(out, 0.0, 1.0)
