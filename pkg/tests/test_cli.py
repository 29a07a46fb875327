import json
import os

import pytest

from conftest import fixture_path, preset_path
from qbrownian.cli import main


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


BASE_CONFIG = {
    "model": {"d": 1, "L": 14, "u": 1.0, "lambda": 2.0, "g": 0.5},
    "kernel": {"preset": "cosine"},
    "disorder": {"dist": "uniform", "seeds": [0, 1, 2, 3]},
    "evolution": {"t_max": 4.0, "n_times": 9, "tol": 1e-7},
    "analysis": {"methods": ["resolvent"], "fiber_L": 10,
                 "fiber_seeds": [0, 1]},
    "output": {"dir": "PLACEHOLDER"},
    "workers": 2,
}


def test_validate_kernel_presets_pass(capsys):
    for name in ("uniform.json", "cosine.json"):
        assert main(["validate-kernel", preset_path(name)]) == 0
    assert main(["validate-kernel", preset_path("boson_beta0.json"),
                 "--radius", "12"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out


def test_validate_kernel_by_preset_name():
    assert main(["validate-kernel", "--preset", "cosine"]) == 0


def test_validate_kernel_fixture_fails(capsys):
    rc = main(["validate-kernel", fixture_path("violation_negative.json"),
               "--lossy-tol", "10"])
    assert rc == 1
    assert "FAIL" in capsys.readouterr().out


def test_validate_kernel_parity_fixture_fails():
    assert main(["validate-kernel", fixture_path("violation_parity.json"),
                 "--lossy-tol", "10"]) == 1


def test_unknown_config_field_exit_2(tmp_path, capsys):
    doc = dict(BASE_CONFIG)
    doc["model"] = dict(doc["model"], typo_field=3)
    doc["output"] = {"dir": str(tmp_path / "out")}
    rc = main(["diffusion", "--config", write_config(tmp_path, doc)])
    assert rc == 2
    assert "model.typo_field" in capsys.readouterr().err


def test_diffusion_resolvent_pipeline(tmp_path):
    doc = dict(BASE_CONFIG)
    doc["output"] = {"dir": str(tmp_path / "out")}
    rc = main(["diffusion", "--config", write_config(tmp_path, doc)])
    assert rc == 0
    with open(tmp_path / "out" / "diffusion.json") as fh:
        res = json.load(fh)
    assert res["estimates"][0]["method"] == "resolvent"
    assert res["estimates"][0]["extras"]["bounds_ok"]
    with open(tmp_path / "out" / "manifest.json") as fh:
        man = json.load(fh)
    assert man["config"]["model"]["L"] == 14
    assert "gap" in man["kernel_certificate"]


def test_msd_writes_csv(tmp_path):
    doc = dict(BASE_CONFIG)
    doc["output"] = {"dir": str(tmp_path / "out")}
    rc = main(["msd", "--config", write_config(tmp_path, doc)])
    assert rc == 0
    lines = (tmp_path / "out" / "msd.csv").read_text().splitlines()
    assert lines[0] == "t,M_11,err_11"
    assert len(lines) == 10


def test_run_pipeline_and_determinism(tmp_path):
    doc = dict(BASE_CONFIG)
    doc["pipeline"] = ["validate-kernel", "msd", "diffusion"]
    doc["output"] = {"dir": str(tmp_path / "out1")}
    cfg1 = write_config(tmp_path, doc, "c1.json")
    assert main(["run", cfg1]) == 0
    doc["output"] = {"dir": str(tmp_path / "out2")}
    cfg2 = write_config(tmp_path, doc, "c2.json")
    assert main(["run", cfg2]) == 0
    for name in ("msd.csv", "diffusion.json", "kernel_report.json"):
        b1 = (tmp_path / "out1" / name).read_bytes()
        b2 = (tmp_path / "out2" / name).read_bytes()
        assert b1 == b2, f"{name} differs between identical runs"


def test_appendix_checks_cli(tmp_path):
    out = str(tmp_path / "rep.json")
    assert main(["appendix-checks", "--n", "5", "--dim", "10",
                 "--json", out]) == 0
    with open(out) as fh:
        assert json.load(fh)["passed"]


def test_env_var_output_override(tmp_path, monkeypatch):
    doc = dict(BASE_CONFIG)
    doc.pop("output")
    monkeypatch.setenv("QBROWNIAN_OUT", str(tmp_path / "envout"))
    rc = main(["msd", "--config", write_config(tmp_path, doc)])
    assert rc == 0
    assert os.path.exists(tmp_path / "envout" / "msd.csv")


def test_localization_cli(tmp_path):
    doc = {
        "model": {"d": 1, "L": 12, "boundary": "periodic", "u": 1.0,
                  "lambda": 8.0, "g": 0.1},
        "kernel": {"preset": "cosine"},
        "disorder": {"dist": "uniform", "seeds": list(range(24))},
        "analysis": {"loc_t_max": 200.0},
        "output": {"dir": str(tmp_path / "out")},
        "workers": 2,
    }
    rc = main(["localization", "--config", write_config(tmp_path, doc)])
    assert rc == 0
    with open(tmp_path / "out" / "localization.json") as fh:
        loc = json.load(fh)
    assert loc["ell2"] > 0
