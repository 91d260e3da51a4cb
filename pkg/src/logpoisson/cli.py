"""Command-line entry point.

    logpoisson toy-posterior --config toy.json --out runs/toy
    logpoisson denoise-bench --set bench.seeds=[0] --out runs/bench
    logpoisson oracle-dump --set prior.kind=gamma --set y=3

Exit status: 0 on success, 1 for configuration or input errors, 2 when a
computation fails numerically.
"""
import argparse
import csv
import logging
import os
import sys

from . import __version__
from . import config as C
from ._accel import BACKEND
from ._io import atomic_write, write_json
from .exceptions import ConfigError, DomainError, NumericalError
from .harness import (bench_manifest_seeds, evaluate, run_denoise_benchmark,
                      run_seeds, run_toy_posterior, test_set, train_denoiser)
from .nn.model import load_model, save_model
from .oracle import posterior_central_moments, posterior_density

log = logging.getLogger("logpoisson")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def build_parser():
    p = argparse.ArgumentParser(prog="logpoisson",
                                description="Log-domain Poisson posterior tools.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("toy-posterior", "posterior recovery on a scalar prior"),
                        ("denoise-bench", "train and test x- and log-x denoisers"),
                        ("train", "train one conv denoiser"),
                        ("eval", "evaluate a saved denoiser on the held-out test set"),
                        ("oracle-dump", "print quadrature posterior moments")]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", metavar="PATH", help="JSON run configuration")
        s.add_argument("--seed", type=int, help="base seed (overrides the config)")
        s.add_argument("--out", metavar="DIR", help="output directory")
        s.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="dotted-path override, value parsed as JSON")
    return p


def manifest(cfg, args, seeds):
    return {"experiment": cfg["experiment"], "config": cfg, "config_sha256": C.config_hash(cfg),
            "seeds": seeds, "overrides": list(args.overrides), "version": __version__,
            "backend": BACKEND}


def _out_dir(cfg, args, required):
    out = args.out or cfg.get("out")
    if out is None and required:
        out = os.path.join("runs", cfg["experiment"])
    if out is not None:
        os.makedirs(out, exist_ok=True)
    return out


def cmd_toy(cfg, args):
    tcfg = C.toy_config(cfg)
    out = _out_dir(cfg, args, True)
    report = run_toy_posterior(tcfg)
    report.write(out)
    write_json(os.path.join(out, "manifest.json"), manifest(cfg, args, {"seed": tcfg.seed}))
    for name, r in report.routes.items():
        print(f"{name:12s} total_sq_error={r.total:.6g} interior_maxima={r.maxima}")


def cmd_bench(cfg, args):
    bcfg = C.bench_config(cfg)
    out = _out_dir(cfg, args, True)
    table = run_denoise_benchmark(bcfg)
    table.write(out)
    write_json(os.path.join(out, "manifest.json"),
               manifest(cfg, args, bench_manifest_seeds(bcfg)))
    for r in table.rows:
        print(f"zeta={r['zeta']:g} {r['domain']:5s} psnr={r['psnr_mean']:.2f}"
              f"+-{r['psnr_std']:.2f} mse={r['mse_mean']:.5f}")


def _train_domain(cfg):
    d = cfg.get("domain", "x")
    return "log-x" if d == "eta" else d


def cmd_train(cfg, args):
    bcfg = C.bench_config(cfg)
    seed = cfg.get("seed", 0)
    gain = float(cfg.get("gain", 64.0))
    domain = _train_domain(cfg)
    out = _out_dir(cfg, args, True)
    model, history = train_denoiser(bcfg.signal, gain, domain, seed, bcfg.arch, bcfg.train)
    model.meta = dict(model.meta, gain=gain, seed=seed, signal=bcfg.signal.to_dict())
    save_model(model, os.path.join(out, "model.lpm"))

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "train_loss", "val_psnr"])
        for h in history:
            w.writerow([h["step"], repr(h["train_loss"]), repr(h["val_psnr"])])
    atomic_write(os.path.join(out, "history.csv"), write)
    init, data, val = run_seeds(seed, gain)
    write_json(os.path.join(out, "manifest.json"), manifest(
        cfg, args, {"seed": seed, "init": init, "data": data, "validation": val}))
    print(f"best validation psnr {model.meta['best_val_psnr']:.3f} dB "
          f"after {model.meta['steps']} steps")


def cmd_eval(cfg, args):
    if "model" not in cfg:
        raise ConfigError("eval needs a model file: --set model=PATH")
    try:
        model = load_model(cfg["model"])
    except FileNotFoundError:
        raise ConfigError(f"model file not found: {cfg['model']}") from None
    bcfg = C.bench_config(cfg)
    gain = float(cfg.get("gain", model.meta.get("gain", 64.0)))
    y, x = test_set(bcfg.signal, gain, bcfg.test_size, bcfg.test_seed)
    p, m = evaluate(model, y, x)
    result = {"model": cfg["model"], "target_domain": model.target_domain, "gain": gain,
              "test_size": bcfg.test_size, "test_seed": bcfg.test_seed, "psnr": p, "mse": m}
    out = _out_dir(cfg, args, False)
    if out:
        write_json(os.path.join(out, "eval.json"), result)
        write_json(os.path.join(out, "manifest.json"),
                   manifest(cfg, args, {"test_seed": bcfg.test_seed}))
    print(f"psnr {p:.4f} dB  mse {m:.6g}")


def cmd_oracle(cfg, args):
    prior = C.prior_from(cfg)
    y = float(cfg.get("y", 4.0))
    K = cfg.get("K", 4)
    domain = "x" if cfg.get("domain", "eta") == "x" else "eta"
    ms = posterior_central_moments(prior, y, K, domain)
    print(f"mu1 = {ms.mu1!r}")
    for k, v in enumerate(ms.central, start=2):
        print(f"mu{k} = {v!r}")
    out = _out_dir(cfg, args, False)
    if out:
        write_json(os.path.join(out, "oracle_moments.json"), ms.to_dict())
        posterior_density(prior, y).to_csv(os.path.join(out, "posterior_density.csv"))
        write_json(os.path.join(out, "manifest.json"), manifest(cfg, args, {}))


COMMANDS = {"toy-posterior": cmd_toy, "denoise-bench": cmd_bench, "train": cmd_train,
            "eval": cmd_eval, "oracle-dump": cmd_oracle}


def dispatch(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        base = C.load_file(args.config) if args.config else None
        cfg = C.resolve(args.command, base, args.seed, args.overrides)
        COMMANDS[args.command](cfg, args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main():
    sys.exit(dispatch())
