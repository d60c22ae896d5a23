import json
import math
import subprocess
import sys

import numpy as np
import pytest

from hn_spectra import cli
from hn_spectra.finite import read_cloud

FREE = {"base": {"kind": "rotation"}, "potential": {"form": "constant", "c": 0.0}}
COS2 = {"base": {"kind": "rotation"}, "potential": {"form": "cosine", "lam": 2.0}}


def write_cfg(path, **kw):
    path.write_text(json.dumps(kw))
    return str(path)


def outputs(d):
    return {f.name: f.read_bytes() for f in d.iterdir() if f.name != "manifest.json"}


def test_eig_circulant(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", task="eig", output=str(tmp_path / "out"),
                    model={**FREE, "g": 1.0}, numeric={"n": 64})
    assert cli.main(["run", cfg]) == 0
    w = read_cloud(tmp_path / "out" / "eigenvalues.csv")
    th = 2 * np.pi * np.arange(64) / 64
    ref = -2 * math.cosh(1) * np.cos(th) - 2j * math.sinh(1) * np.sin(th)
    assert len(w) == 64
    assert max(np.min(np.abs(ref - z)) for z in w) < 1e-9
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert set(man["outputs"]) == {"eigenvalues.csv", "eigenvalues.json"}
    # every numeric default is spelled out
    assert man["config"]["numeric"]["lyapunov"]["n_steps"] == 10_000
    assert man["config"]["numeric"]["uh"]["angle_floor"] == 1e-3
    assert {"config_sha256", "versions", "wall_time_s"} <= set(man)


def test_dirichlet_check(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", task="dirichlet-check", output=str(tmp_path / "out"),
                    model=FREE, numeric={"n": 32, "g1": 0.0, "g2": 1.0})
    assert cli.main(["run", cfg]) == 0
    rep = json.loads((tmp_path / "out" / "dirichlet.json").read_text())
    assert rep["max_matched_distance"] < 1e-8 and rep["passed"]


def test_dirichlet_failure_exit3(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", task="dirichlet-check", output=str(tmp_path / "out"),
                    model=COS2, numeric={"n": 64, "g1": 0.0, "g2": 1.7, "match_tol": 1e-300})
    assert cli.main(["run", cfg]) == 3
    err = json.loads(capsys.readouterr().err)
    assert err["report"]["module"] == "finite_spectra"
    assert (tmp_path / "out" / "failure.json").exists()
    assert (tmp_path / "out" / "manifest.json").exists()


@pytest.mark.parametrize("numeric", [{"grid": {"nx": 0}}, {"n": 2}, {"bogus": 1}])
def test_invalid_config_exit2(tmp_path, capsys, numeric):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path / "c.json", task="field", output=str(out), model=FREE,
                    numeric=numeric)
    assert cli.main(["run", cfg]) == 2
    assert "numeric" in capsys.readouterr().err
    assert not out.exists()
    assert list(tmp_path.iterdir()) == [tmp_path / "c.json"]


def test_malformed_json_exit2(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text('{"task": "eig",\n "output": }')
    assert cli.main(["run", str(p)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_regime_error_exit3(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", task="green", output=str(tmp_path / "out"),
                    model={**FREE, "g": 0.5},
                    numeric={"E": 1.0, "green_regime": "hyperbolic"})
    assert cli.main(["run", cfg]) == 3


def test_compare_identical_and_manifest_roundtrip(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", task="spectrum", output=str(tmp_path / "a"),
                    model={**COS2, "g": 1.2},
                    numeric={"grid": {"re_min": -6, "re_max": 6, "im_min": -3, "im_max": 3,
                                      "nx": 41, "ny": 21},
                             "lyapunov": {"n_steps": 2000}})
    assert cli.main(["run", cfg]) == 0
    # re-run from the manifest's embedded config into a new directory
    assert cli.main(["run", str(tmp_path / "a" / "manifest.json"),
                     "--output", str(tmp_path / "b")]) == 0
    a, b = outputs(tmp_path / "a"), outputs(tmp_path / "b")
    assert a == b
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["outputs"] == mb["outputs"]
    mb["config"]["output"] = ma["config"]["output"]
    assert cli.config_hash(mb["config"]) == ma["config_sha256"]
    capsys.readouterr()
    assert cli.main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["diffs"] == []


def test_compare_kind_mismatch(tmp_path, capsys):
    for name, task in (("a", "eig"), ("b", "dos")):
        cfg = write_cfg(tmp_path / f"{name}.json", task=task, output=str(tmp_path / name),
                        model=FREE, numeric={"n": 16})
        assert cli.main(["run", cfg]) == 0
    assert cli.main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == 2


def test_compare_dos_bl_line(tmp_path, capsys):
    for name, n in (("a", 128), ("b", 256)):
        cfg = write_cfg(tmp_path / f"{name}.json", task="dos", output=str(tmp_path / name),
                        model={**COS2, "g": 0.5}, numeric={"n": n})
        assert cli.main(["run", cfg]) == 0
    capsys.readouterr()
    assert cli.main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert 0 < rep["bounded_lipschitz"]["distance"] < 1
    assert rep["bounded_lipschitz"]["n_functions"] == 200


def test_compare_field_resolutions(tmp_path, capsys):
    for name, nx in (("a", 21), ("b", 41)):
        cfg = write_cfg(tmp_path / f"{name}.json", task="field", output=str(tmp_path / name),
                        model=FREE, numeric={"grid": {"nx": nx, "ny": 11},
                                             "lyapunov": {"n_steps": 4000}})
        assert cli.main(["run", cfg]) == 0
    capsys.readouterr()
    assert cli.main(["compare", str(tmp_path / "a"), str(tmp_path / "b"),
                     "--tolerance", "0.05"]) == 0
    rep = json.loads(capsys.readouterr().out)
    dev = rep["field_interpolated_max_deviation"]
    assert 0 < dev < 0.05
    assert not [d for d in rep["diffs"] if d["file"] == "field.bin"]


def test_threads_knob_deterministic(tmp_path, monkeypatch):
    cfg = dict(task="field", model=COS2,
               numeric={"grid": {"nx": 9, "ny": 5}, "lyapunov": {"n_steps": 1000}})
    cli.run({**cfg, "output": str(tmp_path / "a")})
    monkeypatch.setenv("HN_SPECTRA_THREADS", "2")
    cli.run({**cfg, "output": str(tmp_path / "b")})
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert mb["config"]["numeric"]["threads"] == 2
    assert outputs(tmp_path / "a") == outputs(tmp_path / "b")
    monkeypatch.setenv("HN_SPECTRA_THREADS", "zero")
    with pytest.raises(cli.ConfigError):
        cli.run({**cfg, "output": str(tmp_path / "c")})


def test_set_override(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", task="eig", output=str(tmp_path / "out"),
                    model=FREE, numeric={"n": 8})
    assert cli.main(["run", cfg, "--set", "numeric.n=12", "--set", "model.g=0.5"]) == 0
    assert len(read_cloud(tmp_path / "out" / "eigenvalues.csv")) == 12


def test_all_tasks_run(tmp_path):
    small = {"grid": {"re_min": -6, "re_max": 6, "im_min": -3, "im_max": 3, "nx": 21, "ny": 11},
             "lyapunov": {"n_steps": 1000}, "n": 64, "probes": [[0.0, 3.0], 5.0], "E": 6.0,
             "sigma0": {"step": 0.05}, "g_values": [0.3, 1.2]}
    for task in cli.TASKS:
        out = cli.run({"task": task, "output": str(tmp_path / task),
                       "model": {**COS2, "g": 0.4}, "numeric": small})
        man = json.loads((out / "manifest.json").read_text())
        assert man["outputs"] and "failure.json" not in man["outputs"], task


def test_schema_and_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "hn_spectra", "schema"], capture_output=True,
                       text=True, check=True)
    schema = json.loads(r.stdout)
    assert schema["properties"]["task"]["enum"] == list(cli.TASKS)
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps({"task": "field", "output": str(tmp_path / "o"), "model": FREE,
                               "numeric": {"grid": {"nx": 0}}}))
    r = subprocess.run([sys.executable, "-m", "hn_spectra", "run", str(bad)],
                       capture_output=True, text=True)
    assert r.returncode == 2 and not (tmp_path / "o").exists()
