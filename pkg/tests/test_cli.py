from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from triality.cli import DEFAULTS, main

FAST_SOLVER = {"R": 5.0, "grid_points": 500}


def _write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def _run(tmp_path, command, config=None, *extra, out="out"):
    args = [command, "--out", str(tmp_path / out)]
    if config is not None:
        args += ["--config", _write(tmp_path, f"{out}.json", config)]
    code = main(args + list(extra))
    report_path = tmp_path / out / "report.json"
    report = json.loads(report_path.read_text()) if report_path.exists() else None
    return code, report


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(x) for x in row] for row in rows[1:]])


def _strip_timings(report):
    report = json.loads(json.dumps(report))
    report["manifest"].pop("timings")
    report["manifest"].pop("input_digests")
    return report


def test_print_defaults(capsys):
    assert main(["solve", "--print-defaults"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["solver"]["eps"] == 1e-6
    assert printed["solver"]["rel_tol"] == 1e-9
    assert printed["solver"]["abs_tol"] == 1e-11
    assert printed["solver"]["grid_points"] == 2000
    assert printed == json.loads(json.dumps(DEFAULTS))


def test_solve_benchmark(tmp_path):
    code, report = _run(tmp_path, "solve")
    assert code == 0
    assert report["status"] == "ok"
    header, data = _read_csv(tmp_path / "out" / "solution.csv")
    assert header == ["r", "u", "u_prime", "logscale", "phi", "z", "p_mag"]
    assert data.shape == (2000, 7)
    assert all(c["status"] == "pass" for c in report["checks"].values())
    assert report["asymptotics"]["barrier_violations"] == 0
    assert report["manifest"]["command"] == "solve"
    assert report["manifest"]["config"]["solver"]["R"] == 10.0
    assert (tmp_path / "out" / "solution.gp").exists()
    assert not list((tmp_path / "out").glob(".*.tmp"))


def test_csv_has_seventeen_significant_digits(tmp_path):
    _run(tmp_path, "solve", {"solver": FAST_SOLVER})
    with open(tmp_path / "out" / "solution.csv") as fh:
        fh.readline()
        fh.readline()
        row = fh.readline().strip().split(",")
    for cell in row:
        assert float(cell) == float(format(float(cell), ".17g"))
    assert any(len(cell.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) >= 16 for cell in row)


def test_solve_zero_cost(tmp_path):
    code, report = _run(tmp_path, "solve", {"potential": {"kind": "monomial", "lambda": 0.0, "p": 2.0},
                                            "solver": FAST_SOLVER})
    assert report["checks"]["convexity"]["status"] == "warning"
    assert report["asymptotics"]["degenerate"]
    _, data = _read_csv(tmp_path / "out" / "solution.csv")
    assert not np.any(data[:, 4]) and not np.any(data[:, 5])
    # flat u has no curvature; the convexity checks do not apply and are only warnings
    assert code == 0


def test_solve_tabulated_matches_analytic(tmp_path):
    r = np.linspace(0.0, 5.0, 501)
    table = {"kind": "table", "points": [[float(x), float(x * x)] for x in r]}
    code, report = _run(tmp_path, "solve", {"potential": table, "solver": FAST_SOLVER}, out="table")
    assert code == 0
    assert report["series"]["seed_mode"] == "local_quadratic"
    _run(tmp_path, "solve", {"solver": FAST_SOLVER}, out="mono")
    _, tab = _read_csv(tmp_path / "table" / "solution.csv")
    _, mono = _read_csv(tmp_path / "mono" / "solution.csv")
    # PCHIP of r**2 on a 0.01 table is off by O(1e-5) in the first cells near the origin
    np.testing.assert_allclose(tab[:, 4], mono[:, 4], rtol=1e-4, atol=5e-6)


def test_validation_failure(tmp_path):
    code, report = _run(tmp_path, "solve", {"solver": {"sigma": -1.0}})
    assert code == 2
    assert report["status"] == "error"
    assert report["error"]["type"] == "validation"
    code, _ = _run(tmp_path, "solve", {"unknown": 1}, out="b")
    assert code == 2
    code, _ = _run(tmp_path, "solve", {"solver": {"eps": 6.0, "R": 5.0}}, out="c")
    assert code == 2


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


def test_solver_failure(tmp_path):
    code, report = _run(tmp_path, "solve", {"solver": {"max_steps": 5}})
    assert code == 3
    assert report["error"]["type"] == "solver"


def test_invariant_violation(tmp_path):
    code, report = _run(tmp_path, "solve", {"solver": FAST_SOLVER, "thresholds": {"riccati_residual": 1e-14}})
    assert code == 4
    assert report["checks"]["riccati_residual"]["status"] == "fail"
    assert report["error"]["type"] == "invariant"


def test_disabled_check_is_off(tmp_path):
    code, report = _run(tmp_path, "solve", {
        "solver": FAST_SOLVER,
        "thresholds": {"riccati_residual": 1e-14},
        "checks": {"riccati_residual": False},
    })
    assert code == 0
    assert report["checks"]["riccati_residual"]["status"] == "off"


def test_unmet_hypotheses_demote_to_warning(tmp_path):
    code, report = _run(tmp_path, "solve", {"potential": {"kind": "monomial", "lambda": 1.0, "p": 1.5},
                                            "solver": FAST_SOLVER})
    assert report["flags"]["hypothesis_unmet"]
    assert report["checks"]["barrier"]["status"] in ("pass", "warning")
    assert code == 0


def test_solve_is_deterministic_and_rerunnable(tmp_path):
    config = {"solver": FAST_SOLVER}
    _, first = _run(tmp_path, "solve", config, out="a")
    _, second = _run(tmp_path, "solve", config, out="b")
    assert _strip_timings(first) == _strip_timings(second)
    assert (tmp_path / "a" / "solution.csv").read_bytes() == (tmp_path / "b" / "solution.csv").read_bytes()
    code = main(["solve", "--config", str(tmp_path / "a" / "report.json"), "--out", str(tmp_path / "c")])
    assert code == 0
    assert (tmp_path / "a" / "solution.csv").read_bytes() == (tmp_path / "c" / "solution.csv").read_bytes()


def test_sweep(tmp_path):
    code, report = _run(tmp_path, "sweep-sigma", {"solver": {"R": 5.0, "grid_points": 400}})
    assert code == 0
    members = {m["sigma"]: m for m in report["sweep"]["members"]}
    assert members[10.0]["bound_holds"]
    assert report["sweep"]["approaching_target"]
    header, data = _read_csv(tmp_path / "out" / "sweep.csv")
    assert header == ["sigma", "r", "phi", "sigma2_phi", "target"]
    assert data.shape == (4 * 400, 5)


def test_sweep_empty_sigma_list(tmp_path):
    code, report = _run(tmp_path, "sweep-sigma", {"solver": FAST_SOLVER}, "--sigmas")
    assert code == 2
    assert report["error"]["type"] == "validation"
    code, _ = _run(tmp_path, "sweep-sigma", {"sweep": {"sigmas": []}}, out="b")
    assert code == 2


def test_sweep_single_sigma_matches_solve(tmp_path):
    config = {"solver": FAST_SOLVER}
    _run(tmp_path, "sweep-sigma", config, "--sigmas", "1.0", out="sw")
    _run(tmp_path, "solve", config, out="so")
    _, sweep = _read_csv(tmp_path / "sw" / "sweep.csv")
    _, sol = _read_csv(tmp_path / "so" / "solution.csv")
    np.testing.assert_array_equal(sweep[:, 2], sol[:, 4])


def test_sweep_parallel_matches_serial(tmp_path):
    base = {"solver": {"R": 5.0, "grid_points": 300}, "sweep": {"sigmas": [1.0, 0.7]}}
    _run(tmp_path, "sweep-sigma", base, out="serial")
    par = json.loads(json.dumps(base))
    par["sweep"]["workers"] = 2
    _run(tmp_path, "sweep-sigma", par, out="parallel")
    assert (tmp_path / "serial" / "sweep.csv").read_bytes() == (tmp_path / "parallel" / "sweep.csv").read_bytes()


@pytest.mark.parametrize("N", [2, 3])
def test_benchmark_kummer(tmp_path, N):
    code, report = _run(tmp_path, "benchmark-kummer", {"solver": {"N": N}})
    assert code == 0
    assert report["kummer"]["max_rel_dev"] < 1e-8


def test_benchmark_kummer_zero_weight(tmp_path):
    code, report = _run(tmp_path, "benchmark-kummer", {"kummer": {"lambda": 0.0}})
    assert code == 0
    assert report["kummer"]["integrated_u"] == [1.0, 1.0, 1.0]
    assert report["kummer"]["series_u"] == [1.0, 1.0, 1.0]


MC_SMALL = {"T": 0.2, "dt": 2e-3, "paths": 500, "r0": 1.0, "seed": 42}


def test_montecarlo_small(tmp_path):
    code, report = _run(tmp_path, "montecarlo", {"montecarlo": MC_SMALL})
    assert code == 0
    mc = report["montecarlo"]
    for key in ("gap", "stderr", "exit_fraction", "dt", "paths", "seed"):
        assert key in mc
    assert mc["within_envelope"] and mc["ladder_minimized_at_one"]


def test_montecarlo_sim_config_file(tmp_path):
    sim = _write(tmp_path, "sim.json", MC_SMALL)
    code, report = _run(tmp_path, "montecarlo", None, "--sim-config", sim)
    assert code == 0
    assert report["manifest"]["config"]["montecarlo"]["paths"] == 500
    assert "sim.json" in report["manifest"]["input_digests"]


def test_montecarlo_too_few_paths(tmp_path):
    code, report = _run(tmp_path, "montecarlo", {"montecarlo": {"paths": 1}})
    assert code == 2


def test_montecarlo_domain_exit(tmp_path):
    code, report = _run(tmp_path, "montecarlo", {
        "solver": {"R": 1.0, "grid_points": 100},
        "montecarlo": {"T": 1.0, "dt": 1e-2, "paths": 200, "r0": 0.9},
    })
    assert code == 5
    assert report["error"]["type"] == "domain_exit"


def test_montecarlo_repeat_is_identical(tmp_path):
    config = {"montecarlo": MC_SMALL}
    _run(tmp_path, "montecarlo", config, out="a")
    _run(tmp_path, "montecarlo", config, out="b")
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert _strip_timings(a) == _strip_timings(b)
