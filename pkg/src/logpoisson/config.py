"""Run configuration: JSON schema, dotted overrides, and construction of run objects.

A config is one JSON object. Omitted sections take the defaults of the
experiment being run, so ``{"version": 1}`` is a complete config.
"""
import hashlib
import json
from dataclasses import replace

import jsonschema

from .exceptions import ConfigError, DomainError
from .harness import BenchConfig, ToyConfig
from .nn.model import ArchSpec
from .priors import PriorSpec, SignalConfig
from .reconstruction import ReconstructionConfig
from .recursion import FdConfig

SCHEMA_VERSION = 1
EXPERIMENTS = ("toy-posterior", "denoise-bench", "train", "eval", "oracle-dump")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer"}
_nums = {"type": "array", "items": _num}


def _obj(props, **extra):
    return {"type": "object", "properties": props, "additionalProperties": False, **extra}


SCHEMA = _obj({
    "version": {"const": SCHEMA_VERSION},
    "experiment": {"enum": list(EXPERIMENTS)},
    "seed": {"type": "integer", "minimum": 0},
    "out": {"type": "string"},
    "y": {"type": "number", "minimum": 0},
    "K": {"type": "integer", "minimum": 2, "maximum": 6},
    "domain": {"enum": ["eta", "x", "log-x"]},
    "gain": _pos,
    "model": {"type": "string"},
    "prior": _obj({
        "kind": {"enum": ["log-normal-mixture", "gamma", "point-mass", "tabulated"]},
        "weights": _nums, "locs": _nums, "scales": _nums,
        "shape": _pos, "rate": _pos, "atom": _pos,
        "grid": _nums, "values": _nums,
        "support": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
    }),
    "signal": _obj({"length": {"type": "integer", "minimum": 8}, "shape": _pos, "rate": _pos,
                    "smoothing_std": {"type": "number", "minimum": 0}, "floor": _pos}),
    "arch": _obj({"kind": {"enum": ["mlp", "conv1d"]},
                  "widths": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                  "channels": {"type": "integer", "minimum": 1},
                  "conv_layers": {"type": "integer", "minimum": 1},
                  "kernel": {"type": "integer", "minimum": 1},
                  "activation": {"enum": ["relu", "leaky_relu", "tanh", "identity"]},
                  "padding": {"const": "reflect"}}),
    "train": _obj({"lr": _pos, "betas": {"type": "array", "items": _num, "minItems": 2,
                                         "maxItems": 2},
                   "adam_eps": _pos, "batch_size": {"type": "integer", "minimum": 1},
                   "max_steps": {"type": "integer", "minimum": 0},
                   "val_every": {"type": "integer", "minimum": 1},
                   "patience": {"type": "integer", "minimum": 1},
                   "val_size": {"type": "integer", "minimum": 1}}),
    "recon": _obj({"order": {"type": "integer", "minimum": 2, "maximum": 6},
                   "eta_halfwidth": _pos, "eta_points": _int, "x_lo": _pos, "x_hi": _pos,
                   "x_points": _int, "negativity": {"enum": ["clamp-renormalize", "leave"]}}),
    "fd": _obj({"oracle_step": _pos, "network_step": _pos,
                "accuracy": {"type": "integer", "minimum": 2}}),
    "bench": _obj({"zetas": {"type": "array", "items": _pos, "minItems": 1},
                   "domains": {"type": "array", "items": {"enum": ["x", "log-x"]},
                               "minItems": 1},
                   "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0},
                             "minItems": 1},
                   "test_size": {"type": "integer", "minimum": 1},
                   "test_seed": {"type": "integer", "minimum": 0},
                   "trace_examples": {"type": "integer", "minimum": 0}}),
    "toy": _obj({"train_networks": {"type": "boolean"}}),
}, required=["version"])

_validator = jsonschema.Draft202012Validator(SCHEMA)


def load_file(path):
    """Parse a JSON config file; errors name the path and the position."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def parse_override(text):
    """``"a.b=value"`` to ``(["a", "b"], value)``; values are JSON, else plain strings."""
    key, sep, raw = text.partition("=")
    if not sep or not key or any(not p for p in key.split(".")):
        raise ConfigError(f"override must look like key.path=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_override(cfg, path, value):
    node = cfg
    for part in path[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"cannot set {'.'.join(path)}: {part!r} is not a section")
        node = child
    node[path[-1]] = value


def validate(cfg):
    errors = sorted(_validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.absolute_path) or "<top level>"
        raise ConfigError(f"config field {where}: {e.message}")


def resolve(experiment, base=None, seed=None, overrides=()):
    """Merge file contents, ``--seed`` and ``--set`` overrides, then validate."""
    cfg = {"version": SCHEMA_VERSION}
    cfg.update(json.loads(json.dumps(base or {})))
    if cfg.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for {cfg['experiment']!r}, not {experiment!r}")
    cfg["experiment"] = experiment
    if seed is not None:
        cfg["seed"] = seed
    for text in overrides:
        apply_override(cfg, *parse_override(text))
    validate(cfg)
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _build(what, fn):
    try:
        return fn()
    except (DomainError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid {what} section: {exc}") from None


def prior_from(cfg):
    return _build("prior", lambda: PriorSpec.from_dict(cfg.get("prior", {})))


def signal_from(cfg):
    return _build("signal", lambda: SignalConfig(**cfg.get("signal", {})))


def arch_from(cfg, default):
    d = cfg.get("arch")
    if not d:
        return default
    return _build("arch", lambda: ArchSpec.from_dict({**default.to_dict(), **d}))


def train_from(cfg, default):
    d = dict(cfg.get("train", {}))
    if "betas" in d:
        d["betas"] = tuple(d["betas"])
    return _build("train", lambda: replace(default, **d))


def fd_from(cfg, key, default_step):
    d = cfg.get("fd", {})
    return _build("fd", lambda: FdConfig(step=d.get(key, default_step),
                                         accuracy=d.get("accuracy", 4)))


def toy_config(cfg):
    base = ToyConfig()
    return _build("toy", lambda: ToyConfig(
        prior=prior_from(cfg) if "prior" in cfg else base.prior,
        y=float(cfg.get("y", base.y)), K=cfg.get("K", base.K),
        recon=ReconstructionConfig(**cfg.get("recon", {})),
        oracle_fd=fd_from(cfg, "oracle_step", base.oracle_fd.step),
        network_fd=fd_from(cfg, "network_step", base.network_fd.step),
        train_networks=cfg.get("toy", {}).get("train_networks", True),
        arch=arch_from(cfg, base.arch), train=train_from(cfg, base.train),
        seed=cfg.get("seed", base.seed)))


def bench_config(cfg):
    base = BenchConfig()
    b = cfg.get("bench", {})
    seeds = tuple(b["seeds"]) if "seeds" in b else (
        (cfg["seed"],) if "seed" in cfg else base.seeds)
    return _build("bench", lambda: BenchConfig(
        zetas=tuple(float(z) for z in b.get("zetas", base.zetas)),
        domains=tuple(b.get("domains", base.domains)), seeds=seeds,
        signal=signal_from(cfg), arch=arch_from(cfg, base.arch),
        train=train_from(cfg, base.train), test_size=b.get("test_size", base.test_size),
        test_seed=b.get("test_seed", base.test_seed),
        trace_examples=b.get("trace_examples", base.trace_examples)))
