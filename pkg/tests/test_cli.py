import json
import math
import warnings

import pytest

from charval.cli import main
from charval.output import read_csv

MAGNETIC = {
    "model": {"b": 2.0, "q": 0, "sign": 1,
              "potential": {"class": "A2-gaussian", "amplitude": 1.0, "N": 2.0, "beta": 1.0, "mu": 1.0},
              "j_max": 3, "ell_range": [0, 1, 2], "n_x3": 40},
    "r_lo": 1e-3, "r_hi": 0.8,
}


def run(tmp_path, command, cfg, *flags):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    return main([command, str(path), "--out", str(out), *flags]), out


def test_charvals_counterexample_ii(tmp_path, capsys):
    cfg = {"model": {"kind": "counterexample-ii", "alphas": {"base": 2, "count": 5}},
           "region": {"kind": "rectangle", "x0": 1e-4, "x1": 2, "y0": -0.1, "y1": 0.1},
           "resolution": 1e-10}
    code, out = run(tmp_path, "charvals", cfg)
    assert code == 0
    rows = read_csv(out / "charvals.csv")
    got = sorted(float(r["re"]) for r in rows)
    assert got == pytest.approx(sorted(4.0 ** -k for k in range(5)), rel=1e-8)
    assert all(r["multiplicity"] == "1" for r in rows)
    summary = json.loads(capsys.readouterr().out)
    assert summary["found"] == 5


def test_charvals_empty_region(tmp_path):
    cfg = {"model": {"kind": "constant", "eigenvalues": [0.5, 0.25]},
           "region": {"kind": "rectangle", "x0": 1.0, "x1": 2.0, "y0": 0.5, "y1": 1.5}}
    code, out = run(tmp_path, "charvals", cfg)
    assert code == 0
    doc = json.loads((out / "charvals.json").read_text())
    assert doc["charvals"] == []
    assert read_csv(out / "charvals.csv") == []


def test_config_embedded(tmp_path):
    cfg = {"model": {"kind": "constant", "eigenvalues": [0.5]},
           "region": {"kind": "annulus", "r_in": 0.1, "r_out": 1.0}}
    code, out = run(tmp_path, "charvals", cfg)
    first = (out / "charvals.csv").read_text().splitlines()[0]
    assert first.startswith("# config: ")
    embedded = json.loads(first[len("# config: "):])
    assert embedded["model"] == cfg["model"] and embedded["resolution"] == 1e-8
    assert json.loads((out / "charvals.json").read_text())["config"] == embedded


def test_malformed_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["charvals", str(path), "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and err["exit_code"] == 2


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = {"model": {"kind": "constant", "eigenvalues": [0.5]},
           "region": {"kind": "annulus", "r_in": 0.1, "r_out": 1.0}, "tolerance": 1}
    code, _ = run(tmp_path, "charvals", cfg)
    assert code == 2
    assert "tolerance" in capsys.readouterr().err


@pytest.mark.parametrize("patch", [{"r_lo": 0}, {"r_hi": 2.5}, {"r_lo": 0.5, "r_hi": 0.4}])
def test_magnetic_bad_radii(tmp_path, patch):
    code, _ = run(tmp_path, "magnetic", {**MAGNETIC, **patch})
    assert code == 2


def test_count_constant_family(tmp_path):
    cfg = {"mode": "sector", "model": {"kind": "constant", "eigenvalues": [2.0 ** -k for k in range(12)]},
           "theta": 0.3, "r_grid": {"lo": 1e-3, "hi": 0.3, "num": 8}}
    code, out = run(tmp_path, "count", cfg)
    assert code == 0
    rows = read_csv(out / "counting.csv")
    assert [float(r["ratio"]) for r in rows] == [1.0] * 8
    assert [r["N"] for r in rows] == [r["n"] for r in rows]


def test_count_power_law(tmp_path, capsys):
    cfg = {"mode": "sector", "model": {"kind": "synthetic", "dim": 300,
                                        "eig_law": {"kind": "power", "gamma": 0.5},
                                        "perturbation_scale": 0.2, "seed": 8},
           "theta": 0.5, "r_grid": {"lo": 2e-5, "hi": 1e-2, "num": 15}}
    code, out = run(tmp_path, "count", cfg)
    assert code == 0
    law = json.loads(capsys.readouterr().out)["fitted_law"]
    assert law["form"] == "power" and law["gamma"] == pytest.approx(0.5, rel=0.1)
    assert read_csv(out / "plot.csv")[0].keys() == {"r", "N", "n", "predicted"}


def test_count_small_domain(tmp_path):
    cfg = {"mode": "small-domain", "model": {"kind": "constant", "eigenvalues": [2.0 ** -k for k in range(10)]},
           "region": {"kind": "rectangle", "x0": 0.7, "x1": 1.9, "y0": -0.5, "y1": 0.5},
           "s_grid": [0.5, 0.25, 0.125]}
    code, out = run(tmp_path, "count", cfg)
    assert code == 0
    rows = read_csv(out / "counting.csv")
    assert [r["N"] for r in rows] == [r["n"] for r in rows] == ["1", "1", "1"]


@pytest.fixture(scope="module")
def magnetic_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("mag")
    with warnings.catch_warnings():
        # three channels on purpose; the truncation is reported in law.json
        warnings.simplefilter("ignore", RuntimeWarning)
        code, out = run(tmp, "magnetic", MAGNETIC, "--check-generic")
    return code, out


def test_magnetic_law(magnetic_run):
    code, out = magnetic_run
    assert code == 0
    doc = json.loads((out / "law.json").read_text())
    assert doc["predicted"]["form"] == "log-power"
    assert doc["predicted"]["C"] == pytest.approx(1 / math.log(2), rel=1e-15)
    assert doc["predicted"]["gamma"] == 1.0
    assert 0 < doc["generic_condition"] <= 1
    assert doc["config"]["check_generic"] is True
    assert any("ell_range too small" in w for w in doc["warnings"])


def test_magnetic_outputs(magnetic_run):
    _, out = magnetic_run
    res = read_csv(out / "resonances.csv")
    assert res and all(float(r["k_im"]) <= 1e-6 for r in res)
    counts = read_csv(out / "counting.csv")
    assert list(counts[0]) == ["r", "resonances", "n_plus", "predicted"]
    n = [int(r["resonances"]) for r in counts]
    assert all(a >= b for a, b in zip(n, n[1:]))


def test_zero_potential_cli(tmp_path):
    cfg = json.loads(json.dumps(MAGNETIC))
    cfg["model"]["potential"]["amplitude"] = 0.0
    code, out = run(tmp_path, "magnetic", cfg)
    assert code == 0
    assert read_csv(out / "resonances.csv") == []
    assert json.loads((out / "law.json").read_text())["notes"] == ["zero potential"]


def test_deterministic_output(tmp_path):
    cfg = {"model": {"kind": "synthetic", "dim": 20, "eig_law": {"kind": "power", "gamma": 1.0}, "seed": 3},
           "region": {"kind": "sector", "theta": 0.5, "a": 0.01, "b": 1.0}}
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    _, a = run(tmp_path / "a", "charvals", cfg)
    _, b = run(tmp_path / "b", "charvals", cfg, "--threads", "2")
    assert (a / "charvals.csv").read_text().splitlines()[1:] == (b / "charvals.csv").read_text().splitlines()[1:]
