import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linfcurves.cli import main, read_trajectory_csv
from linfcurves.config import PRESETS, RunConfig, preset, validate
from linfcurves.integrator import ExtremalState, integrate
from linfcurves.manifolds import ManifoldId


def _run(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--out", str(out)])
    return code, out


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg.to_dict() if isinstance(cfg, RunConfig) else cfg))
    return str(p)


def test_presets_validate():
    for name in PRESETS:
        assert validate(preset(name)) == []


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(sorted(PRESETS)), st.floats(0, 10), st.integers(2, 10_000),
       st.floats(1e-14, 1e-6))
def test_config_json_round_trip(name, z, n, rtol):
    cfg = preset(name)
    cfg.z, cfg.sample_count, cfg.rtol = z, n, rtol
    assert RunConfig.from_json(cfg.to_json()) == cfg


def test_validate_reports_every_error():
    cfg = preset("sphere-example")
    cfg.span = [5, 5]
    cfg.initial["x"] = [0.9, 0.0, 0.0]
    cfg.z = None
    cfg.sample_count = 1
    errs = validate(cfg)
    assert "span not increasing" in errs
    assert "x not on sphere (tolerance 1e-9)" in errs
    assert "z is required" in errs
    assert "sample_count must be an integer >= 2" in errs


def test_validate_mode_and_system_mismatches():
    cfg = preset("so3-example-short")
    cfg.mode = "bvp"
    assert any("not available in mode" in e for e in validate(cfg))
    cfg = preset("sphere-example")
    cfg.C = [1.0, 0.0, 0.0]
    assert "C only applies to so3_reduced" in validate(cfg)
    with pytest.raises(ValueError, match="unknown config keys"):
        RunConfig.from_dict({**preset("sphere-example").to_dict(), "colour": 1})


def test_sphere_preset_csv(tmp_path):
    code, out = _run(tmp_path, "ivp", "--preset", "sphere-example")
    assert code == 0
    cols, table = read_trajectory_csv(out / "trajectory.csv")
    assert cols[:4] == ["t", "x0", "x1", "x2"] and cols[-2:] == ["phi", "acc_norm"]
    assert np.allclose(table[-1, 1:4], [-0.433207, 0.898726, 0.0679917], atol=1e-3)
    assert np.allclose(table[:, -1], 1.2)
    # 17 significant digits make the file lossless
    first = (out / "trajectory.csv").read_text().splitlines()[-1].split(",")[1]
    assert float(first) == table[-1, 1]
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] and report["version"] == 1


def test_so3_short_preset(tmp_path):
    code, out = _run(tmp_path, "ivp", "--preset", "so3-example-short")
    assert code == 0
    _, table = read_trajectory_csv(out / "trajectory.csv")
    assert np.allclose(table[-1, 1:4], [1.77133, 4.50895, 7.05963], atol=1e-4)


def test_byte_identical_outputs(tmp_path):
    a = main(["ivp", "--preset", "so3-example-short", "--out", str(tmp_path / "a")])
    b = main(["ivp", "--preset", "so3-example-short", "--out", str(tmp_path / "b")])
    assert a == b == 0
    for f in ("trajectory.csv", "report.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_validation_exit_code_and_no_files(tmp_path, capsys):
    cfg = preset("sphere-example").to_dict()
    del cfg["z"]
    code, out = _run(tmp_path, "ivp", "--config", _write(tmp_path, cfg))
    assert code == 2
    assert not out.exists()
    msg = json.loads(capsys.readouterr().out)
    assert msg == {"error": "validation", "messages": ["z is required"]}


def test_config_mode_must_match_subcommand(tmp_path):
    code, _ = _run(tmp_path, "bvp", "--config", _write(tmp_path, preset("sphere-example")))
    assert code == 2


def test_event_exit_code(tmp_path):
    cfg = RunConfig(manifold={"kind": "euclidean", "dim": 2}, mode="ivp",
                    system="sphere_extremal", span=[0.0, 2.0], z=1.0,
                    initial={"x": [0, 0], "xdot": [1, 0], "X": [1, 0], "Xdot": [-1, 0]},
                    sample_count=21)
    code, out = _run(tmp_path, "ivp", "--config", _write(tmp_path, cfg))
    assert code == 4
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "event" and report["events"] == pytest.approx([1.0])


def test_bvp_euclid_and_sphere(tmp_path):
    cfg = RunConfig(manifold={"kind": "euclidean", "dim": 2}, mode="bvp",
                    system="euclid_closed_form", span=[0.0, 1.5],
                    boundary={"x0": [0, 0], "x1": [1, 0.3], "v0": [0, 1], "v1": [1, 0]},
                    sample_count=151)
    code, out = _run(tmp_path, "bvp", "--config", _write(tmp_path, cfg))
    assert code == 0
    sol = json.loads((out / "solution.json").read_text())
    assert sol["branch"]["tag"] == "generic"

    gen = integrate(ExtremalState(ManifoldId.sphere(2), [1, 0, 0], [0, 1, 0], [0, 0.5, 1.0],
                                  [0.3, -0.2, 0.4], 1.2), (0, 1.5), n_samples=2)
    y = gen.final_state
    cfg = RunConfig(manifold={"kind": "sphere", "dim": 2}, mode="bvp",
                    system="sphere_extremal", span=[0.0, 1.5],
                    boundary={"x0": [1, 0, 0], "x1": y[:3].tolist(), "v0": [0, 1, 0],
                              "v1": y[3:6].tolist()},
                    sample_count=101)
    code, out = _run(tmp_path, "bvp", "--config", _write(tmp_path, cfg, "s.json"))
    assert code == 0
    sol = json.loads((out / "solution.json").read_text())
    assert sol["converged"] and sol["unknowns"]["z"] == pytest.approx(1.2)


def test_bvp_nonconvergence_exit_code(tmp_path):
    # slowing down and speeding up along a great circle forces an interior
    # zero of the field, which shooting treats as a penalty
    s = 1 / np.sqrt(2)
    cfg = RunConfig(manifold={"kind": "sphere", "dim": 2}, mode="bvp",
                    system="sphere_extremal", span=[0.0, 1.0],
                    boundary={"x0": [1, 0, 0], "x1": [s, s, 0], "v0": [0, 1, 0],
                              "v1": [-s, s, 0.0]},
                    restarts=2, sample_count=11)
    code, out = _run(tmp_path, "bvp", "--config", _write(tmp_path, cfg))
    assert code == 3
    assert not json.loads((out / "solution.json").read_text())["converged"]


def test_check_and_baseline(tmp_path):
    cfg = preset("sphere-example")
    cfg.mode = "check"
    cfg.knots = {"times": [0.0, 4.0, 8.0]}
    code, out = _run(tmp_path, "check", "--config", _write(tmp_path, cfg))
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["multipoint"]["any_segment_passes"]

    cfg = RunConfig(manifold={"kind": "euclidean", "dim": 2}, mode="baseline",
                    system="riemannian_cubic", span=[0.0, 2.0],
                    knots={"times": [0, 1, 2], "points": [[0, 0], [1, 1], [2, 0]]},
                    sample_count=201, output="json")
    code, out = _run(tmp_path, "baseline", "--config", _write(tmp_path, cfg, "b.json"))
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert not rep["verdicts"]["z_constant"]["pass"]
    assert rep["J2"] == pytest.approx(3.0)
    doc = json.loads((out / "trajectory.json").read_text())
    assert doc["columns"][:3] == ["t", "x0", "x1"] and len(doc["rows"]) == 201


def test_presets_list_console_script():
    out = subprocess.run([sys.executable, "-m", "linfcurves.cli", "presets", "list"],
                         capture_output=True, text=True, check=True).stdout
    assert [line.split("\t")[0] for line in out.splitlines()] == sorted(PRESETS)
