import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from invfem.cli import locate, main, strip_wall_times
from invfem.mesh import generate_unit_cube

ROOT = Path(__file__).resolve().parents[1]
BEAM = ROOT / "configs" / "beam.json"
TET = ROOT / "configs" / "tet_inverse.json"


def report(path):
    return json.loads(Path(path).read_text())


@pytest.mark.parametrize("command", ["forward", "inverse", "iga"])
def test_solve_commands_write_outputs(tmp_path, command):
    assert main([command, "--config", str(TET), "--output", str(tmp_path)]) == 0
    r = report(tmp_path / "tet_report.json")
    assert r["status"] == "converged" and r["direction"] == command
    for key in ("record", "errors", "probes", "wall_time"):
        assert key in r
    assert (tmp_path / "tet.vtk").exists() and (tmp_path / "tet_geometry.vtk").exists()
    if command == "iga":
        assert r["errors"]["iga_history"][-1] <= 1e-6


def test_beam_config_reports_tip(tmp_path):
    code = main(["forward", "--config", str(BEAM), "--output", str(tmp_path),
                 "--set", "mesh.axial_divisions=4", "--set", "mesh.radial_layers=1"])
    assert code == 0
    r = report(tmp_path / "beam_report.json")
    tip = r["probes"]["tip"]
    assert tip["value"] is not None and 0.05 < tip["magnitude"] < 0.3
    assert tip["value"][1] < 0
    text = (tmp_path / "beam.vtk").read_text()
    assert "VECTORS displacement double" in text and "SCALARS pressure double 1" in text


def test_schema_error_exit_code(tmp_path, capsys):
    assert main(["forward", "--config", str(TET), "--set", "material.kind=rubber", "--output", str(tmp_path)]) == 2
    assert "material.kind" in capsys.readouterr().err
    assert not (tmp_path / "tet_report.json").exists()


def test_missing_config_exit_code(tmp_path, capsys):
    assert main(["forward", "--config", str(tmp_path / "nope.json")]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_divergence_exit_code_still_writes_report(tmp_path):
    code = main(["forward", "--config", str(TET), "--output", str(tmp_path),
                 "--set", "solver.max_iter=1", "--set", "solver.max_bisections=1"])
    assert code == 3
    r = report(tmp_path / "tet_report.json")
    assert r["status"] == "diverged" and r["record"]["steps"]


def test_iga_not_converged_exit_code(tmp_path):
    code = main(["iga", "--config", str(TET), "--output", str(tmp_path), "--set", "iga.max_iterations=1", "--set", "iga.epsilon=1e-12"])
    assert code == 3
    assert report(tmp_path / "tet_report.json")["status"] == "not_converged"


def test_iga_failure_exit_code(tmp_path):
    code = main(["iga", "--config", str(TET), "--output", str(tmp_path), "--set", "solver.max_iter=1", "--set", "solver.max_bisections=1"])
    assert code == 3
    assert report(tmp_path / "tet_report.json")["status"] == "diverged"


def test_bench_tet(tmp_path, capsys):
    assert main(["bench", "tet", "--seed", "42", "--set", "draws=4", "--output", str(tmp_path)]) == 0
    r = report(tmp_path / "bench_tet.json")
    s = r["result"]["summary"]["part1"]
    for col in ("pb", "iga1", "iga2"):
        assert {"average", "sd", "minimum", "maximum"} <= set(s[col])
    assert {"avg_iterations", "avg_time_ratio"} <= set(s["iga1"])
    assert r["result"]["suite"]["seed"] == 42
    assert "PASS" in capsys.readouterr().out


def test_bench_failed_check_exit_code(tmp_path):
    # an unreachable epsilon pushes IGA past the iteration window
    assert main(["bench", "tet", "--set", "draws=2", "--set", "epsilon=1e-15", "--set", "max_iterations=10", "--output", str(tmp_path)]) == 1


def test_study_parameter_errors(tmp_path):
    assert main(["bench", "tet", "--set", "drawz=3", "--output", str(tmp_path)]) == 2
    assert main(["bench", "cube", "--output", str(tmp_path)]) == 2
    assert main(["verify", "shear", "--set", "ks=oops", "--output", str(tmp_path)]) == 2
    assert main(["bench", "tet", "--set", "draws=2.5", "--output", str(tmp_path)]) == 2


def test_verify_shear_small(tmp_path):
    code = main(["verify", "shear", "--set", "ks=[0.5]", "--set", "constants=[[1.0,1.0]]", "--set", "divisions=[1]",
                 "--set", "generalized_divisions=[1,2]", "--output", str(tmp_path)])
    assert code == 0
    r = report(tmp_path / "verify_shear.json")
    assert r["checks"]["simple_shear_error_le_1e-10"]


def test_report_deterministic(tmp_path, monkeypatch):
    outs = []
    for i, threads in enumerate(("1", "3")):
        monkeypatch.setenv("INVFEM_THREADS", threads)
        out = tmp_path / str(i)
        assert main(["inverse", "--config", str(TET), "--seed", "5", "--output", str(out)]) == 0
        outs.append(strip_wall_times(report(out / "tet_report.json")))
    outs[0].pop("outputs")
    outs[1].pop("outputs")
    assert outs[0] == outs[1]


def test_bench_deterministic(tmp_path):
    outs = []
    for i in range(2):
        main(["bench", "tet", "--seed", "3", "--set", "draws=2", "--output", str(tmp_path / str(i))])
        outs.append(strip_wall_times(report(tmp_path / str(i) / "bench_tet.json")))
    assert outs[0] == outs[1]


def test_locate():
    cube = generate_unit_cube(2)
    c, ref = locate(cube, (0.3, 0.6, 0.9))
    v = cube.vertices[cube.cells[c]]
    assert np.allclose(v[0] + (v[1:] - v[0]).T @ ref, (0.3, 0.6, 0.9))
    assert locate(cube, (2.0, 0, 0)) is None


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "invfem.cli", "forward", "--config", str(TET), "--output", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    bad = subprocess.run([sys.executable, "-m", "invfem.cli", "forward"], capture_output=True, text=True)
    assert bad.returncode == 2
