import json

import numpy as np
import pytest

from soundranging import cli, io
from soundranging.exceptions import SeriesUndetermined
from soundranging.scenarios import two_solutions_times


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def scenario_file(tmp_path, capsys, name, n=64):
    path = tmp_path / f"{name}.json"
    assert run(capsys, "scenario", name, "--truncate", n, "--output", path)[0] == 0
    return path


def test_scenario_listing(capsys):
    code, out, _ = run(capsys, "scenario")
    assert code == 0
    for name in ("two_solutions", "ellipsoid_dual", "orthonormal_basis", "sphere_orthonormal"):
        assert name in out


def test_solve_two_solutions_report(tmp_path, capsys):
    path = scenario_file(tmp_path, capsys, "two_solutions", 1024)
    out_path = tmp_path / "report.json"
    code, _, _ = run(capsys, "solve", "--input", path, "--output", out_path)
    assert code == 0
    report = io.load_report(out_path)
    assert [s["kind"] for s in report["solutions"]] == ["source", "source"]
    inst = io.load_instance(path).instance
    for reported, recomputed in io.verify_report(report, inst):
        assert recomputed <= 2.0 * max(reported, 1e-15)


def test_solve_ellipsoid_reports_dual(tmp_path, capsys):
    path = scenario_file(tmp_path, capsys, "ellipsoid_dual")
    code, out, _ = run(capsys, "solve", "--input", path, "--json")
    assert code == 0
    report = json.loads(out)
    assert sorted(s["kind"] for s in report["solutions"]) == ["dual", "source"]
    assert report["diagnostics"]["uniqueness"]["dual_exists"]


def test_sphere_report_round_trip(tmp_path, capsys):
    path = scenario_file(tmp_path, capsys, "sphere_orthonormal", 256)
    out_path = tmp_path / "report.json"
    assert run(capsys, "solve", "--input", path, "--output", out_path)[0] == 0
    report = io.load_report(out_path)
    assert report["case"] == "sph1a"
    for reported, recomputed in io.verify_report(report, io.load_instance(path).instance):
        assert recomputed <= 2.0 * max(reported, 1e-15)


def test_malformed_json_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"sensors": [[0, 0], [1, "x"]], "times": [0, 1]}')
    code, _, err = run(capsys, "solve", "--input", bad)
    assert code == 3
    assert "sensors[1][1]" in err
    bad.write_text('{"sensors": [[0, 0],')
    code, _, err = run(capsys, "solve", "--input", bad)
    assert code == 3 and "line 1" in err


def test_missing_file_and_bad_flags_exit_3(tmp_path, capsys):
    assert run(capsys, "solve", "--input", tmp_path / "nope.json")[0] == 3
    assert run(capsys, "solve")[0] == 3
    assert run(capsys, "frobnicate")[0] == 3


def test_dependent_sensors_exit_3(tmp_path, capsys):
    path = tmp_path / "dep.json"
    path.write_text(json.dumps({"sensors": [[0, 0], [1, 2], [2, 4]], "times": [0, 1, 2],
                                "finite": True}))
    assert run(capsys, "solve", "--input", path)[0] == 3


def test_no_solution_exit_2(tmp_path, capsys):
    path = tmp_path / "none.json"
    # arrival times differing by more than the sensor distance
    path.write_text(json.dumps({"sensors": [[0.0], [1.0]], "times": [0.0, 5.0]}))
    assert run(capsys, "solve", "--input", path)[0] == 2


def test_undetermined_exit_4_and_retry(tmp_path, capsys, monkeypatch):
    path = scenario_file(tmp_path, capsys, "two_solutions", 64)
    real = cli.solve_instance
    seen = []

    def flaky(instance, **kw):
        seen.append(instance.truncation)
        if instance.truncation < 256:
            raise SeriesUndetermined("too short")
        return real(instance, **kw)

    monkeypatch.setattr(cli, "solve_instance", flaky)
    code, out, _ = run(capsys, "solve", "--input", path, "--json")
    assert code == 0 and seen == [64, 128, 256]
    assert json.loads(out)["truncation"] == 256

    seen.clear()
    assert run(capsys, "solve", "--input", path, "--retry-doubling", 1)[0] == 4
    assert seen == [64, 128]


def test_env_tolerance(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SRP_DEFAULT_TOL", "1e-6")
    assert cli.default_tol() == 1e-6
    monkeypatch.setenv("SRP_DEFAULT_TOL", "abc")
    path = scenario_file(tmp_path, capsys, "ellipsoid_dual")
    assert run(capsys, "solve", "--input", path)[0] == 3
    monkeypatch.delenv("SRP_DEFAULT_TOL")
    assert cli.default_tol() == 1e-9


def test_simulate_scenario_matches_closed_form(tmp_path, capsys):
    out = tmp_path / "sim.json"
    assert run(capsys, "simulate", "--scenario", "two_solutions", "--truncate", 1024,
               "--output", out)[0] == 0
    inst = io.load_instance(out)
    np.testing.assert_array_equal(inst.instance.times[1:], two_solutions_times(np.arange(1, 1025)))
    assert inst.ground_truth is not None


def test_simulate_source_at_anchor_gives_distances(tmp_path, capsys):
    sensors = tmp_path / "sensors.json"
    sensors.write_text(json.dumps([[1.0, 2.0, 0.0], [0.0, 1.0, 1.0], [3.0, 0.0, 4.0]]))
    out = tmp_path / "sim.json"
    code, _, _ = run(capsys, "simulate", "--sensors-file", sensors, "--source", "1,2,0",
                     "--output", out)
    assert code == 0
    doc = json.loads(out.read_text())
    np.testing.assert_allclose(doc["times"], [0.0, np.sqrt(3.0), np.sqrt(24.0)], atol=1e-15)
    assert doc["ground_truth"]["t"] == 0.0


def test_simulate_sphere_is_tagged(tmp_path, capsys):
    out = tmp_path / "sph.json"
    assert run(capsys, "simulate", "--scenario", "sphere_orthonormal", "--truncate", 32,
               "--output", out)[0] == 0
    assert json.loads(out.read_text())["geometry"] == "sphere"


def diagnose(tmp_path, capsys, name, n=256):
    path = scenario_file(tmp_path, capsys, name, n)
    code, out, _ = run(capsys, "diagnose", "--input", path, "--json")
    assert code == 0
    return json.loads(out)


def test_diagnose_findings(tmp_path, capsys):
    u = diagnose(tmp_path, capsys, "orthonormal_basis")["uniqueness"]
    assert u["orthogonal_subsequence"]
    u = diagnose(tmp_path, capsys, "two_solutions")["uniqueness"]
    assert not any(u[k] for k in ("dual_exists", "sensor_coincident",
                                  "orthogonal_subsequence", "antipodal_pair"))
    ex = diagnose(tmp_path, capsys, "sphere_orthonormal")["exclusion_3b"]
    assert ex["excluded"]


def test_galerkin_table(tmp_path, capsys):
    path = scenario_file(tmp_path, capsys, "two_solutions", 256)
    code, out, _ = run(capsys, "galerkin", "--input", path, "--max-n", 64, "--json")
    assert code == 0
    doc = json.loads(out)
    err = [row["t_error"] for row in doc["table"]]
    assert len(err) == 64 and err[63] < err[7] < err[0]
    assert run(capsys, "galerkin", "--input", path, "--max-n", 257)[0] == 3


def test_solve_with_galerkin_block(tmp_path, capsys):
    path = scenario_file(tmp_path, capsys, "two_solutions", 256)
    code, out, _ = run(capsys, "solve", "--input", path, "--galerkin", 8, "--json")
    assert code == 0
    assert len(json.loads(out)["galerkin"]["table"]) == 8


def test_human_summary(tmp_path, capsys):
    path = scenario_file(tmp_path, capsys, "ellipsoid_dual")
    code, out, _ = run(capsys, "solve", "--input", path)
    assert code == 0
    assert "case" in out and "dual" in out and "source" in out


def test_module_entry_point():
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "soundranging", "scenario"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "two_solutions" in proc.stdout


@pytest.mark.parametrize("argv", [["solve", "--input", "x", "--truncate", "0"],
                                  ["galerkin", "--input", "x"]])
def test_argument_errors_exit_3(capsys, argv):
    assert run(capsys, *argv)[0] == 3
