import csv
import io
import json
import subprocess
import sys

import pytest

from dataprice.core import NumericalError
from dataprice.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, EXIT_VERIFY_FAILED, SEED_ENV, main

PRICE_DOC = {
    "utility": {"kind": "power", "p": 0.5, "lambda": 0.2, "rho": 0.1},
    "market": {"r": 0.04, "T": 1.0},
    "x": 1.0,
    "b1": {"family": "box", "mu_low": 0.05, "mu_high": 0.3, "var_low": 0.02, "var_high": 0.09},
    "b2": {"family": "box", "mu_low": 0.1, "mu_high": 0.25, "var_low": 0.03, "var_high": 0.05},
}

SWEEP_DOC = {"n2_values": [2000, 6000], "m_reps": 12, "seed": 7}


def _run(tmp_path, command, doc, *extra, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    out = tmp_path / f"{name}.out"
    code = main([command, "-c", str(path), "-o", str(out), *extra])
    return code, out.read_text() if out.exists() else None


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_price_csv_and_json(tmp_path):
    code, text = _run(tmp_path, "price", PRICE_DOC)
    assert code == EXIT_OK
    (row,) = _rows(text)
    assert row["formula"] == "power_utility"
    assert 0 < float(row["price"]) < 1
    code, text = _run(tmp_path, "price", PRICE_DOC, "-f", "json")
    payload = json.loads(text)
    assert payload["schema_version"] == 1 and payload["command"] == "price"
    assert payload["rows"][0]["price"] == pytest.approx(float(row["price"]), rel=1e-16)


def test_price_bisection_method_agrees(tmp_path):
    _, a = _run(tmp_path, "price", PRICE_DOC)
    _, b = _run(tmp_path, "price", dict(PRICE_DOC, method="bisection"))
    assert abs(float(_rows(a)[0]["price"]) - float(_rows(b)[0]["price"])) < 1e-10


def test_missing_key_reports_path(tmp_path, capsys):
    doc = dict(PRICE_DOC, market={"T": 1.0})
    code, _ = _run(tmp_path, "price", doc)
    assert code == EXIT_VALIDATION
    assert "market.r" in capsys.readouterr().err


def test_unknown_key_and_bad_values(tmp_path, capsys):
    assert _run(tmp_path, "price", dict(PRICE_DOC, colour="red"))[0] == EXIT_VALIDATION
    assert "colour" in capsys.readouterr().err
    bad = dict(PRICE_DOC, b1=PRICE_DOC["b2"], b2=PRICE_DOC["b1"])
    assert _run(tmp_path, "price", bad)[0] == EXIT_VALIDATION
    bad = dict(PRICE_DOC, utility={"kind": "power", "p": 1.5})
    assert _run(tmp_path, "price", bad)[0] == EXIT_VALIDATION
    assert "utility" in capsys.readouterr().err


def test_argument_errors_and_unreadable_config(tmp_path):
    assert main(["no-such-command"]) == EXIT_VALIDATION
    assert main(["price"]) == EXIT_VALIDATION
    assert main(["price", "-c", str(tmp_path / "missing.json")]) == EXIT_VALIDATION
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["price", "-c", str(bad)]) == EXIT_VALIDATION


def test_numerical_error_exit_code(tmp_path, monkeypatch):
    import dataprice.cli as cli

    def boom(*a, **k):
        raise NumericalError("forced")

    monkeypatch.setattr(cli, "price_general", boom)
    assert _run(tmp_path, "price", PRICE_DOC)[0] == EXIT_NUMERICAL


def test_k_index_lists_sets(tmp_path):
    doc = {
        "market": {"r": 0.04, "T": 1.0},
        "p": 0.5,
        "sets": [PRICE_DOC["b1"], {"family": "sample_ci", "mu_hat": 0.1, "s2": 0.04, "N": 1000, "alpha_conf": 0.05}],
    }
    code, text = _run(tmp_path, "k-index", doc)
    rows = _rows(text)
    assert code == EXIT_OK and [r["family"] for r in rows] == ["box", "sample_ci"]


def test_turning_point_shapes(tmp_path):
    base = {"T": 20.0, "k1": 0.04, "k2": 0.06}
    _, text = _run(tmp_path, "turning-point", dict(base, utility={"kind": "log", "lambda": 0.1, "rho": 0.5}))
    row = _rows(text)[0]
    assert row["shape"] == "rise_then_fall" and 0 < float(row["turning_point"]) < 20
    _, text = _run(tmp_path, "turning-point", dict(base, utility={"kind": "log", "lambda": 0.2, "rho": 0.05}))
    row = _rows(text)[0]
    assert row["shape"] == "decreasing" and row["turning_point"] == ""


def test_sweep_bytes_identical_across_runs_and_workers(tmp_path):
    _, a = _run(tmp_path, "sweep", SWEEP_DOC, name="a.json")
    _, b = _run(tmp_path, "sweep", SWEEP_DOC, name="b.json")
    _, c = _run(tmp_path, "sweep", SWEEP_DOC, "--workers", "3", name="c.json")
    assert a == b == c
    assert "\r" not in a and a.splitlines()[0] == "n2,mean_price,std_error,m_effective"


def test_seed_precedence(tmp_path, monkeypatch):
    doc = {k: v for k, v in SWEEP_DOC.items() if k != "seed"}
    monkeypatch.setenv(SEED_ENV, "7")
    _, from_env = _run(tmp_path, "sweep", doc, name="env.json")
    _, from_cfg = _run(tmp_path, "sweep", SWEEP_DOC, name="cfg.json")
    assert from_env == from_cfg
    _, flag = _run(tmp_path, "sweep", SWEEP_DOC, "--seed", "8", name="flag.json")
    assert flag != from_cfg
    monkeypatch.setenv(SEED_ENV, "seven")
    assert _run(tmp_path, "sweep", doc, name="badenv.json")[0] == EXIT_VALIDATION


def test_simulate_rows(tmp_path):
    code, text = _run(tmp_path, "simulate", dict(SWEEP_DOC, m_reps=4, grid_index=1))
    rows = _rows(text)
    assert code == EXIT_OK and [int(r["rep"]) for r in rows] == [0, 1, 2, 3]
    assert all(r["grid_index"] == "1" for r in rows)
    assert _run(tmp_path, "simulate", dict(SWEEP_DOC, grid_index=5))[0] == EXIT_VALIDATION


def test_verify_pass_and_perturbed_failure(tmp_path, capsys):
    doc = {"counts": {"minimax": 3, "g1": 5, "indifference": 5}}
    code, text = _run(tmp_path, "verify", doc)
    assert code == EXIT_OK
    assert {r["suite"] for r in _rows(text)} == {"minimax", "g1", "indifference"}
    code, text = _run(tmp_path, "verify", doc, "--perturb", "-f", "json")
    assert code == EXIT_VERIFY_FAILED
    assert json.loads(text)["first_failure"]["suite"]
    assert "first failing instance" in capsys.readouterr().err


def test_console_script_subprocess(tmp_path):
    cfg = tmp_path / "v.json"
    cfg.write_text(json.dumps({"suites": ["indifference"], "counts": {"indifference": 3}}))
    ok = subprocess.run([sys.executable, "-m", "dataprice.cli", "verify", "-c", str(cfg)], capture_output=True, text=True)
    assert ok.returncode == 0 and ok.stdout.startswith("suite,")
    bad = subprocess.run(
        [sys.executable, "-m", "dataprice.cli", "verify", "-c", str(cfg), "--perturb"], capture_output=True, text=True
    )
    assert bad.returncode == 1 and "first failing instance" in bad.stderr


def test_price_equal_sets_is_zero(tmp_path):
    code, text = _run(tmp_path, "price", dict(PRICE_DOC, b2=PRICE_DOC["b1"]))
    assert code == EXIT_OK and float(_rows(text)[0]["price"]) == 0.0


def test_k_index_straddling_drift_gives_rate(tmp_path):
    doc = {
        "market": {"r": 0.04, "T": 1.0},
        "p": 0.5,
        "ambiguity": {"family": "box", "mu_low": 0.0, "mu_high": 0.1, "var_low": 0.02, "var_high": 0.05},
    }
    code, text = _run(tmp_path, "k-index", doc)
    assert code == EXIT_OK and float(_rows(text)[0]["k"]) == 0.04


def test_verify_failure_serialization_is_seeded(tmp_path):
    doc = {"suites": ["g1"], "counts": {"g1": 4}, "perturb": True}
    _, a = _run(tmp_path, "verify", doc, "--seed", "11", "-f", "json", name="a.json")
    _, b = _run(tmp_path, "verify", doc, "--seed", "11", "-f", "json", name="b.json")
    _, c = _run(tmp_path, "verify", doc, "--seed", "12", "-f", "json", name="c.json")
    assert json.loads(a)["first_failure"] == json.loads(b)["first_failure"] != json.loads(c)["first_failure"]
