import csv
import io
import json
import math
import os
import subprocess
import sys
from pathlib import Path

import pytest

from pathlift.cli import main

SCENES = Path(__file__).resolve().parent.parent / "scenes"

# one representative scene per subcommand
COMMANDS = [
    ("transport", "tensor_full.scene"),
    ("transport", "scalar_product.scene"),
    ("solve-section", "diag_coefficients.scene"),
    ("lpath", "sphere_geodesic.scene"),
    ("lpath", "polar_geodesic.scene"),
    ("frame", "rotation_generator.scene"),
    ("holonomy", "sphere_latitude.scene"),
    ("check", "diag_generator.scene"),
    ("check", "sphere_wobble.json"),
]


def run_cli(*args, seed=None):
    env = dict(os.environ)
    env.pop("PATHLIFT_SEED", None)
    if seed is not None:
        env["PATHLIFT_SEED"] = str(seed)
    return subprocess.run([sys.executable, "-m", "pathlift", *args], capture_output=True, env=env, timeout=120)


def scene(name):
    return str(SCENES / name)


def write_scene(tmp_path, text, name="s.scene"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.mark.parametrize("command, name", COMMANDS)
def test_subcommands_are_byte_deterministic(command, name):
    first = run_cli(command, "--scene", scene(name), seed=7)
    second = run_cli(command, "--scene", scene(name), seed=7)
    assert first.returncode == 0, first.stderr.decode()
    assert first.stdout == second.stdout
    assert first.stdout


def test_check_on_diag_generator_reports_cocycle():
    out = run_cli("check", "--scene", scene("diag_generator.scene"))
    assert out.returncode == 0, out.stderr.decode()
    doc = json.loads(out.stdout)
    cocycle = next(law for law in doc["laws"] if law["name"] == "cocycle")
    assert cocycle["max_deviation"] <= 1e-12
    assert doc["seed"] == 42


def test_check_failure_names_the_law():
    out = run_cli("check", "--scene", scene("inconsistent_rule.scene"))
    assert out.returncode == 3
    err = out.stderr.decode()
    assert "law violated: contraction commutation" in err
    assert "law violated: mutually inverse slot matrices" in err
    assert "tensor product" not in err


def test_tolerance_override(tmp_path):
    out = run_cli("check", "--scene", scene("diag_generator.scene"), "--tolerance", "1e-30")
    assert out.returncode == 3
    out = run_cli("transport", "--scene", scene("diag_generator.scene"), "--tolerance", "1e-3")
    assert out.returncode == 1


def test_lpath_sphere_endpoint():
    out = run_cli("lpath", "--scene", scene("sphere_geodesic.scene"))
    rows = list(csv.reader(io.StringIO(out.stdout.decode())))
    assert rows[0] == ["s", "x1", "x2", "v1", "v2"]
    end = [float(v) for v in rows[-1]]
    assert end[0] == pytest.approx(math.pi / 2, abs=1e-12)
    assert end[1] == pytest.approx(math.pi / 2, abs=1e-6)
    assert end[2] == pytest.approx(math.pi / 2, abs=1e-6)


def test_transport_at_coincident_parameters_is_byte_identical(tmp_path):
    text = (SCENES / "tensor_full.scene").read_text()
    path = write_scene(tmp_path, text.replace("t = 1", "t = 0"))
    out = run_cli("transport", "--scene", path)
    assert out.returncode == 0, out.stderr.decode()
    doc = json.loads(out.stdout)
    assert doc["s"] == doc["t"] == 0.0
    original = json.loads(json.dumps([[1.0, 0.0], [0.0, 1.0]]))
    assert doc["tensor"]["components"] == original
    assert json.dumps(doc["tensor"]["components"]) == json.dumps(original)


def test_solve_section_closed_form():
    out = run_cli("solve-section", "--scene", scene("diag_coefficients.scene"), "--format", "json")
    doc = json.loads(out.stdout)
    assert doc["values"][-1] == pytest.approx([math.exp(-1), math.exp(-2)], abs=1e-8)


def test_holonomy_angle():
    doc = json.loads(run_cli("holonomy", "--scene", scene("sphere_latitude.scene")).stdout)
    assert doc["rotation_angle"] == pytest.approx(2 * math.pi * (1 - math.cos(math.pi / 4)), abs=1e-5)


def test_csv_uses_seventeen_digits():
    out = run_cli("transport", "--scene", scene("scalar_product.scene"), "--format", "csv")
    rows = list(csv.reader(io.StringIO(out.stdout.decode())))
    assert rows == [["value"], ["0.73575888234288467"]]


def test_out_option_writes_a_file(tmp_path):
    target = tmp_path / "frame.json"
    out = run_cli("frame", "--scene", scene("rotation_generator.scene"), "--out", str(target))
    assert out.returncode == 0 and out.stdout == b""
    doc = json.loads(target.read_text())
    assert doc["transport_deviation_from_identity"] <= 1e-8


def test_seed_changes_randomized_checks_only():
    a = json.loads(run_cli("check", "--scene", scene("diag_generator.scene"), seed=1).stdout)
    b = json.loads(run_cli("check", "--scene", scene("diag_generator.scene"), seed=2).stdout)
    assert a["seed"] == 1 and b["seed"] == 2
    assert all(law["passed"] for law in a["laws"] + b["laws"])


# -- exit statuses, in process -------------------------------------------------------


def test_invalid_scene_exits_1(tmp_path, capsys):
    path = write_scene(tmp_path, "chart { dim = 2 }\ntransport { kind = \"generator\" }")
    assert main(["transport", "--scene", path]) == 1
    assert "invalid input" in capsys.readouterr().err
    assert main(["transport", "--scene", str(tmp_path / "missing.scene")]) == 1
    assert main(["transport"]) == 1
    assert main(["frame", "--scene", scene("diag_generator.scene"), "--step", "-1"]) == 1


def test_dimension_mismatch_is_rejected_before_numerics(tmp_path, capsys):
    path = write_scene(tmp_path, """
chart { dim = 3 }
transport { kind = "coefficients"; matrix = [[1, 0], [0, 1]] }
task { domain = [0, 1]; vector = [1, 1] }
""")
    assert main(["solve-section", "--scene", path]) == 1
    assert "matrix" in capsys.readouterr().err


def test_singular_generator_exits_2(tmp_path, capsys):
    path = write_scene(tmp_path, """
chart { dim = 2 }
transport { kind = "generator"; matrix = [["s", 0], [0, 1]] }
task { domain = [0, 1]; s0 = 0; t = 1; vector = [1, 1] }
""")
    assert main(["transport", "--scene", path]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_truncated_lpath_exits_2(tmp_path, capsys):
    path = write_scene(tmp_path, """
chart { preset = "sphere" }
transport { kind = "connection"; preset = "sphere" }
task { domain = [0, 1]; s0 = 0; x0 = [0.5, 0]; velocity0 = [-1, 0] }
""")
    out_file = tmp_path / "partial.csv"
    assert main(["lpath", "--scene", path, "--out", str(out_file)]) == 2
    assert "truncated" in capsys.readouterr().err
    # the partial trajectory is still written
    assert len(out_file.read_text().splitlines()) > 10


def test_connection_check_needs_a_path(tmp_path, capsys):
    path = write_scene(tmp_path, """
chart { preset = "sphere" }
transport { kind = "connection"; preset = "sphere" }
task { domain = [0, 1] }
""")
    assert main(["check", "--scene", path]) == 1
