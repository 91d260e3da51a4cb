import json
import subprocess
import sys

import pytest
from scipy import special as sp

from logpoisson import cli, config
from logpoisson.exceptions import ConfigError

TOY = {"version": 1, "experiment": "toy-posterior", "y": 4, "toy": {"train_networks": False}}
TINY_TRAIN = ["--set", "signal.length=32", "--set", "arch.channels=4", "--set",
              "train.max_steps=20", "--set", "train.val_every=10", "--set", "train.batch_size=4",
              "--set", "train.val_size=4", "--set", "bench.test_size=8"]


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_oracle_dump_gamma(capsys):
    assert cli.dispatch(["oracle-dump", "--set", "prior.kind=gamma", "--set", "y=3"]) == 0
    out = dict(line.split(" = ") for line in capsys.readouterr().out.strip().splitlines())
    a = 5.0
    want = {"mu1": sp.digamma(a) - 0.6931471805599453, "mu2": sp.polygamma(1, a),
            "mu3": sp.polygamma(2, a), "mu4": sp.polygamma(3, a) + 3 * sp.polygamma(1, a) ** 2}
    assert set(out) == set(want)
    for k, v in want.items():
        assert float(out[k]) == pytest.approx(v, abs=1e-6)


def test_oracle_dump_files(tmp_path):
    assert cli.dispatch(["oracle-dump", "--out", str(tmp_path), "--set", "K=3"]) == 0
    ms = json.loads((tmp_path / "oracle_moments.json").read_text())
    assert ms["K"] == 3 and ms["domain"] == "eta"
    assert (tmp_path / "posterior_density.csv").read_text().startswith("support,density\n")


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert cli.dispatch(["toy-posterior", "--config", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_malformed_json_reports_position(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"version": 1,\n  "y": }\n')
    assert cli.dispatch(["toy-posterior", "--config", str(p)]) == 1
    assert f"{p}:2:" in capsys.readouterr().err


@pytest.mark.parametrize("cfg,field", [
    ({"version": 1, "bogus": 1}, "<top level>"),
    ({"version": 1, "train": {"lr": -1}}, "train.lr"),
    ({"version": 2}, "version"),
    ({"version": 1, "prior": {"kind": "cauchy"}}, "prior.kind"),
])
def test_schema_errors_name_the_field(tmp_path, capsys, cfg, field):
    assert cli.dispatch(["oracle-dump", "--config", write(tmp_path / "c.json", cfg)]) == 1
    assert field in capsys.readouterr().err


def test_experiment_mismatch_is_config_error(tmp_path):
    p = write(tmp_path / "c.json", {"version": 1, "experiment": "train"})
    assert cli.dispatch(["oracle-dump", "--config", p]) == 1


def test_bad_override_syntax():
    with pytest.raises(ConfigError):
        config.parse_override("noequals")
    with pytest.raises(ConfigError):
        config.parse_override("a..b=1")
    assert config.parse_override("train.lr=0.01") == (["train", "lr"], 0.01)
    assert config.parse_override("prior.kind=gamma") == (["prior", "kind"], "gamma")


def test_invalid_values_caught_before_running(capsys):
    code = cli.dispatch(["oracle-dump", "--set", "prior.weights=[0.2,0.2]"])
    assert code == 1 and "prior" in capsys.readouterr().err


def test_toy_posterior_run_and_rerun(tmp_path):
    cfg = write(tmp_path / "toy.json", TOY)
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.dispatch(["toy-posterior", "--config", cfg, "--out", str(out),
                             "--set", "recon.x_points=500"]) == 0
    names = ["toy_report.json", "toy_curves.csv", "manifest.json"]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    assert man["overrides"] == ["recon.x_points=500"]
    assert man["config"]["recon"] == {"x_points": 500}
    assert man["config_sha256"] == config.config_hash(man["config"])
    report = json.loads((a / "toy_report.json").read_text())
    assert report["routes"]["oracle-eta"]["total_sq_error"] < \
        report["routes"]["oracle-x"]["total_sq_error"]
    assert not list(a.glob("*.tmp*"))


def test_train_then_eval(tmp_path, capsys):
    run = tmp_path / "run"
    assert cli.dispatch(["train", "--out", str(run), "--seed", "3", "--set", "gain=16",
                         "--set", "domain=log-x"] + TINY_TRAIN) == 0
    assert (run / "model.lpm").exists()
    hist = (run / "history.csv").read_text().splitlines()
    assert hist[0] == "step,train_loss,val_psnr" and len(hist) == 3
    man = json.loads((run / "manifest.json").read_text())
    assert man["seeds"]["seed"] == 3 and man["config"]["seed"] == 3
    capsys.readouterr()
    ev = tmp_path / "ev"
    assert cli.dispatch(["eval", "--out", str(ev), "--set", f"model={run / 'model.lpm'}",
                         "--set", "signal.length=32", "--set", "bench.test_size=8"]) == 0
    res = json.loads((ev / "eval.json").read_text())
    assert res["gain"] == 16.0 and res["target_domain"] == "log-x" and res["psnr"] > 0
    assert "psnr" in capsys.readouterr().out


def test_eval_without_model_is_config_error(tmp_path):
    assert cli.dispatch(["eval"]) == 1
    assert cli.dispatch(["eval", "--set", f"model={tmp_path / 'none.lpm'}"]) == 1


def test_denoise_bench_small(tmp_path):
    out = tmp_path / "bench"
    args = ["denoise-bench", "--out", str(out), "--set", "bench.zetas=[8,64]",
            "--set", "bench.seeds=[0]", "--set", "bench.trace_examples=1"] + TINY_TRAIN
    assert cli.dispatch(args) == 0
    first = {n: (out / n).read_bytes() for n in ("benchmark_table.csv", "denoise_traces.csv",
                                                  "manifest.json")}
    assert cli.dispatch(args) == 0
    for n, b in first.items():
        assert (out / n).read_bytes() == b
    man = json.loads(first["manifest.json"])
    assert set(man["seeds"]["runs"]) == {"zeta=8,seed=0", "zeta=64,seed=0"}


def test_numerical_failure_exit_code(tmp_path):
    code = cli.dispatch(["train", "--out", str(tmp_path), "--set", "train.lr=1e300",
                         "--set", "arch.activation=identity"] + TINY_TRAIN)
    assert code == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "logpoisson", "oracle-dump", "--set", "y=1"],
                       capture_output=True, text=True, cwd=tmp_path)
    assert r.returncode == 0 and r.stdout.startswith("mu1 = ")
