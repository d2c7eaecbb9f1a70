import csv
import json
import warnings
from importlib import resources

import jsonschema
import numpy as np
import pytest

from sg_lab.cli import main
from sg_lab.errors import ConfigError
from sg_lab.experiment import compare_regimes, emit_plots, load_config, parse_config, run_experiment

SMALL = {"horizon": 5000, "stride": 50, "excitation": {"alpha": 0.5}}


def _schema():
    return json.loads(resources.files("sg_lab").joinpath("schemas/summary.schema.json").read_text())


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return p


def _column(path, name):
    with open(path) as fh:
        return [float(row[name]) for row in csv.DictReader(fh)]


# ---------------------------------------------------------------- config


def test_config_defaults_roundtrip():
    cfg = parse_config({})
    assert cfg.mode == "direct-regressor" and cfg.horizon == 100_000
    assert parse_config(cfg.to_dict()) == cfg


@pytest.mark.parametrize("doc, path", [
    ({"horizn": 100}, "horizn"),
    ({"excitation": {"alpa": 1}}, "excitation.alpa"),
    ({"noise": {"kind": "cauchy"}}, "noise.kind"),
    ({"horizon": "many"}, "horizon"),
    ({"horizon": 10}, "horizon"),
    ({"seed": 1.5}, "seed"),
    ({"emit": {"plots": 1}}, "emit.plots"),
    ({"mode": "armax"}, "system"),
    ({"excitation": {"beta": 2.0}}, "excitation.beta"),
    ({"spr_policy": "maybe"}, "spr_policy"),
])
def test_config_errors_carry_path(doc, path):
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    assert info.value.path == path
    assert str(info.value).startswith(path)


def test_load_config_malformed(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "c.json", "{not json"))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


# ---------------------------------------------------------------- run_experiment


def test_run_writes_outputs_and_valid_summary(tmp_path):
    s = run_experiment(parse_config(SMALL), tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    for f in ["estimator.csv", "phi_norm.csv", "kappa.csv", "schedule.csv", "criterion.csv", "ledger.csv",
              "ledger.json", "block_bounds.csv", "summary.json"]:
        assert f in names
    summary = json.loads((tmp_path / "summary.json").read_text())
    jsonschema.validate(summary, _schema())
    assert summary["final_phi_norm"] == s.final_phi_norm
    assert all(v is not None for v in summary.values())
    assert s.ledger_fail == 0 and s.block_bound_violations == 0
    head = (tmp_path / "estimator.csv").read_text().splitlines()[0]
    assert head == "n,r_n,theta_err,residual_norm"


def test_reruns_are_byte_identical(tmp_path):
    cfg = parse_config(SMALL)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert len(csvs) >= 7
    for name in csvs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_output(tmp_path):
    run_experiment(parse_config(SMALL), tmp_path / "a")
    run_experiment(parse_config({**SMALL, "seed": 1}), tmp_path / "b")
    assert (tmp_path / "a" / "estimator.csv").read_bytes() != (tmp_path / "b" / "estimator.csv").read_bytes()


def test_scalar_alpha_half_phi_norm():
    s = run_experiment(parse_config({"horizon": 100_000, "stride": 1000, "excitation": {"dim": 1, "alpha": 0.5},
                                     "theta": [[1.0]], "noise": {"kind": "zero"}}))
    assert s.final_phi_norm < 0.1


def test_zero_noise_pe_run():
    # phi_0 = 0 then unit energy: theta_err = |theta| prod_{n=1}^{N-1} (1 - 1/(n+1)) = |theta| / N
    s = run_experiment(parse_config({"horizon": 10_000, "excitation": {"dim": 1, "alpha": 0.0},
                                     "theta": [[2.0]], "noise": {"kind": "zero"}}))
    assert s.final_theta_err == pytest.approx(2.0 / 10_000, rel=1e-9)
    assert s.final_phi_norm == pytest.approx(1.0 / 10_000, rel=1e-9)


def test_armax_run_and_trace(tmp_path):
    cfg = parse_config({"mode": "armax", "horizon": 3000, "stride": 100, "noise": {"c0": 0.1},
                        "system": {"A": [[[-0.5]]], "B": [[[1.0]]], "C": [[[0.3]]]},
                        "emit": {"trace": True}})
    s = run_experiment(cfg, tmp_path)
    assert s.spr_ok and s.final_theta_err < 0.5
    rows = list(csv.reader(open(tmp_path / "trace.csv")))
    assert rows[0] == ["n", "y0", "u0", "w0"] and len(rows) == 3002


def test_spr_policy(tmp_path):
    doc = {"mode": "armax", "horizon": 500, "system": {"B": [[[1.0]]], "C": [[[0.7]]]}}
    with pytest.warns(RuntimeWarning, match="SPR"):
        s = run_experiment(parse_config(doc))
    assert not s.spr_ok
    with pytest.raises(ConfigError):
        run_experiment(parse_config({**doc, "spr_policy": "gate"}))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        run_experiment(parse_config({**doc, "spr_policy": "ignore"}))


def test_numeric_failure_leaves_error_record(tmp_path):
    cfg = parse_config({"mode": "armax", "horizon": 2000, "system": {"A": [[[-50.0]]], "B": [[[1.0]]]}})
    with np.errstate(all="ignore"), pytest.raises(Exception):
        run_experiment(cfg, tmp_path)
    err = json.loads((tmp_path / "error.json").read_text())
    assert err["stage"] == "simulate" and err["type"] == "DataError"


# ---------------------------------------------------------------- plots


def test_emit_plots_full_dir(tmp_path):
    run_experiment(parse_config({**SMALL, "emit": {"plots": False}}), tmp_path)
    scripts = emit_plots(tmp_path)
    assert len(scripts) == 4
    local = {p.name for p in tmp_path.iterdir()}
    for script in scripts:
        text = script.read_text()
        assert "/" not in "".join(line for line in text.splitlines() if "'" in line and "plot" in line)
        for ref in [tok.strip("'") for tok in text.replace(",", " ").split() if tok.startswith("'") and tok.endswith(".csv'")]:
            assert ref in local


def test_emit_plots_empty_dir(tmp_path):
    with pytest.warns(RuntimeWarning):
        assert emit_plots(tmp_path) == []
    assert list(tmp_path.iterdir()) == []


# ---------------------------------------------------------------- compare


def _regime(alpha, horizon=100_000):
    return parse_config({"horizon": horizon, "stride": 1000, "excitation": {"alpha": alpha},
                         "noise": {"kind": "zero"}, "emit": {"plots": False}})


def test_compare_rejects_bad_batches():
    with pytest.raises(ConfigError):
        compare_regimes([_regime(0.5)])
    other = _regime(0.9)
    other.seed = 5
    with pytest.raises(ConfigError):
        compare_regimes([_regime(0.5), other])


def test_compare_convergent_pair(tmp_path):
    table = compare_regimes([_regime(0.3), _regime(0.9)], tmp_path, workers=2)
    assert [row["alpha"] for row in table] == [0.3, 0.9]
    for d in sorted(p for p in tmp_path.iterdir() if p.is_dir()):
        norms = _column(d / "phi_norm.csv", "phi_norm")
        assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))
        assert norms[-1] < norms[0]
    assert (tmp_path / "comparison.csv").exists()


def test_compare_dichotomy_pair():
    lo, hi = compare_regimes([_regime(0.5), _regime(2.0)], workers=1)
    assert lo["criterion_last_increment"] > 10 * hi["criterion_last_increment"]
    assert lo["final_phi_norm"] < hi["final_phi_norm"]


def test_compare_respects_thread_cap(monkeypatch):
    monkeypatch.setenv("SG_LAB_THREADS", "1")
    a = compare_regimes([_regime(0.0, 2000), _regime(1.5, 2000)])
    b = compare_regimes([_regime(0.0, 2000), _regime(1.5, 2000)], workers=2)
    assert a == b


# ---------------------------------------------------------------- entry point


def test_main_exit_codes(tmp_path, capsys):
    good = _write(tmp_path, "good.json", SMALL)
    assert main(["simulate", "--config", str(good), "--out", str(tmp_path / "sim")]) == 0
    assert main(["verify-bounds", "--config", str(good), "--out", str(tmp_path / "vb"), "--seed", "3"]) == 0
    assert json.loads((tmp_path / "vb" / "summary.json").read_text())["seed"] == 3

    bad = _write(tmp_path, "bad.json", '{"horizon": 5000,')
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "nope")]) == 2
    assert not (tmp_path / "nope").exists()

    unknown = _write(tmp_path, "unknown.json", {"horizon": 5000, "colour": 1})
    assert main(["simulate", "--config", str(unknown), "--out", str(tmp_path / "nope2")]) == 2
    assert "colour" in capsys.readouterr().err

    blowup = _write(tmp_path, "blow.json", {"mode": "armax", "horizon": 2000,
                                            "system": {"A": [[[-50.0]]], "B": [[[1.0]]]}})
    with np.errstate(all="ignore"):
        assert main(["simulate", "--config", str(blowup), "--out", str(tmp_path / "blow")]) == 1
    assert (tmp_path / "blow" / "error.json").exists()


def test_main_design_schedule_compare(tmp_path):
    good = _write(tmp_path, "good.json", SMALL)
    assert main(["design", "--config", str(good), "--out", str(tmp_path / "d"), "--stride", "10"]) == 0
    rows = list(csv.reader(open(tmp_path / "d" / "regressors.csv")))
    assert rows[0] == ["n", "phi0", "phi1"] and len(rows) == 5002
    assert main(["schedule", "--config", str(good), "--out", str(tmp_path / "s")]) == 0
    t = [int(r["t_k"]) for r in csv.DictReader(open(tmp_path / "s" / "schedule.csv"))]
    assert t == [0, 1, 5, 23, 119, 719]
    other = _write(tmp_path, "other.json", {**SMALL, "excitation": {"alpha": 2.0}})
    assert main(["compare", "--config", str(good), "--config", str(other), "--out", str(tmp_path / "c")]) == 0
    assert main(["compare", "--config", str(good), "--out", str(tmp_path / "c1")]) == 2
    assert main(["simulate", "--config", str(good), "--out", str(tmp_path / "x"), "--stride", "0"]) == 2
