"""Config validation, the run pipeline and the command line."""
import json

import pytest

from geolgp import cli, config, pipeline
from geolgp.errors import InvalidInput, NoConvergence

SMALL = {
    "domain": {"kind": "circle", "radius": 1.0},
    "weight": {"family": "constant", "a": 1.0},
    "boundary_datum": {
        "pieces": [{"from": 0.0, "to": 3.141592653589793, "kind": "constant", "params": {"value": 1.0}},
                   {"from": 3.141592653589793, "to": 6.283185307179586, "kind": "constant",
                    "params": {"value": 0.0}}],
        "jumps": [{"at": 0.0, "height": 1.0}, {"at": 3.141592653589793, "height": -1.0}],
    },
    "grid": {"n": 64},
    "atoms": {"n_source": 1, "n_target": 1},
    "checks": ["duality", "noncrossing_cost", "ray_crossings", "mass_balance", "divergence", "lipschitz",
               "reconstruction", "level_sets", "lp_norms"],
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_validate_accepts_good_config(tmp_path, capsys):
    assert cli.main(["validate", _write(tmp_path, SMALL)]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_validate_names_the_bad_field(tmp_path, capsys):
    bad = json.loads(json.dumps(SMALL))
    bad["weight"]["family"] = "constnt"
    bad["grid"] = {"h": -0.1}
    assert cli.main(["validate", _write(tmp_path, bad)]) == 2
    err = capsys.readouterr().err
    assert "weight.family" in err and "constnt" in err
    assert "grid.h" in err


def test_unknown_keys_and_defaults():
    extra = dict(SMALL, colour="red")
    assert any("colour" in e for e in config.validate(extra))
    cfg = config.with_defaults(SMALL)
    assert cfg["rays"] == {"n_points": 256, "mode": "direct"} and cfg["solver"] == "noncrossing"


def test_missing_file_is_invalid_input(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.json")]) == 2
    assert cli.main(["report", str(tmp_path)]) == 2
    with pytest.raises(InvalidInput):
        (tmp_path / "x.json").write_text("{not json")
        config.load(str(tmp_path / "x.json"))


def test_run_writes_artifacts_and_report(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", _write(tmp_path, SMALL), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert text.count("PASS") == len(SMALL["checks"]) and "FAIL" not in text
    for name in ("report.json", "plan.json", "rays.json", "sigma.csv", "sigma.pgm", "sigma_plus.csv",
                 "sigma_minus.csv", "u.csv", "u.pgm", "u_levels.json", "psi.csv"):
        assert (out / name).exists(), name
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "ok" and [c["name"] for c in rep["checks"]] == SMALL["checks"]
    assert rep["plan_cost"] == pytest.approx(2.0, abs=1e-12)
    assert cli.main(["report", str(out)]) == 0
    assert cli.main(["report", str(out), "--json"]) == 0
    assert json.loads(capsys.readouterr().out.split("\n", len(SMALL["checks"]) + 1)[-1]) == rep


def test_empty_checks_still_writes_artifacts(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", _write(tmp_path, dict(SMALL, checks=[])), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["checks"] == [] and (out / "sigma.csv").exists()


def test_rerun_is_byte_identical(tmp_path):
    path = _write(tmp_path, SMALL)
    for d in ("a", "b"):
        assert cli.main(["run", path, "--out", str(tmp_path / d)]) == 0
    for f in sorted(p.name for p in (tmp_path / "a").iterdir()):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_solver_failure_writes_partial_report(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NoConvergence("geodesic shooting did not converge")

    monkeypatch.setattr(pipeline, "build_rays", boom)
    out = tmp_path / "out"
    assert cli.main(["run", _write(tmp_path, SMALL), "--out", str(out)]) == 3
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "solver_failure" and "NoConvergence" in rep["error"]
    assert (out / "plan.json").exists()
    assert {c["name"] for c in rep["checks"]} == {"duality", "noncrossing_cost"}
    assert cli.main(["report", str(out)]) == 3


def test_failing_check_gives_exit_one(tmp_path):
    cfg = dict(SMALL, weight={"family": "radial-bump", "a": 1.0, "b": 0.5, "center": [0.2, 0.1], "width": 0.4},
               checks=["dual_field"], atoms={"n_source": 8, "n_target": 8},
               boundary_datum={"pieces": [{"from": 0.0, "to": 6.283185307179586, "kind": "sinusoid",
                                           "params": {"amp": 1.0}}]})
    # the fast-marching potential overshoots |grad psi| <= k on too many cells
    assert cli.main(["run", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1
