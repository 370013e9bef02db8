"""Command-line front end.

    triality solve|sweep-sigma|benchmark-kummer|montecarlo [--config PATH] [--out DIR] [--print-defaults]

Every command resolves a full configuration (defaults filled in), writes its
artifacts atomically into ``--out`` and embeds a run manifest in
``report.json``. Feeding that ``report.json`` back through ``--config``
reruns the same configuration.

Exit codes: 0 success, 2 invalid configuration, 3 solver failure,
4 invariant violation, 5 Monte Carlo paths left the domain.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import __version__
from .asymptotics import high_noise_bound_check
from .control import ControlModel, SimConfig, policy_ladder, simulate_feedback
from .errors import ConfigError, DomainExitError, TrialityError
from .integrator import SolverConfig
from .pipeline import CHECK_NAMES, DEFAULT_THRESHOLDS, diagnose, kummer_benchmark, solve
from .potential import potential_from_dict

log = logging.getLogger("triality")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_INVARIANT = 4
EXIT_DOMAIN_EXIT = 5

SOLUTION_COLUMNS = ("r", "u", "u_prime", "logscale", "phi", "z", "p_mag")
SWEEP_COLUMNS = ("sigma", "r", "phi", "sigma2_phi", "target")

DEFAULTS: dict[str, Any] = {
    "potential": {"kind": "monomial", "lambda": 1.0, "p": 2.0},
    "solver": asdict(SolverConfig()),
    "checks": {name: True for name in CHECK_NAMES},
    "thresholds": dict(DEFAULT_THRESHOLDS),
    "sweep": {"sigmas": [0.5, 1.0, 2.0, 10.0], "radius": 5.0, "workers": 1},
    "kummer": {"lambda": 1.0, "radii": [0.5, 1.0, 2.0], "rtol": 1e-8},
    "montecarlo": {
        "T": 0.5,
        "dt": 1e-3,
        "paths": 10_000,
        "r0": 1.0,
        "seed": 42,
        "model": "hjb_consistent",
        "scales": [0.0, 0.5, 1.0, 1.5, 2.0],
    },
}


class RunFailure(Exception):
    """Carries an exit code and a machine-readable error block."""

    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


# ---------------------------------------------------------------- config


def _schema() -> dict:
    text = resources.files("triality").joinpath("schema/config.schema.json").read_text("utf-8")
    return json.loads(text)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | None) -> tuple[dict, dict[str, str]]:
    """Resolved config plus sha256 digests of the files read.

    A ``report.json`` written by this tool is accepted as well; its
    manifest's resolved config is used.
    """
    digests: dict[str, str] = {}
    raw: dict = {}
    if path is not None:
        data = Path(path).read_bytes()
        digests[os.path.basename(path)] = hashlib.sha256(data).hexdigest()
        try:
            raw = json.loads(data)
        except json.JSONDecodeError as exc:
            raise RunFailure(EXIT_VALIDATION, "validation", f"{path}: {exc}") from exc
        if isinstance(raw, dict) and "manifest" in raw:
            raw = raw["manifest"].get("config", {})
    return validate_config(raw), digests


def validate_config(raw: Any) -> dict:
    try:
        jsonschema.validate(raw, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise RunFailure(EXIT_VALIDATION, "validation", f"{where}: {exc.message}") from exc
    config = _merge(DEFAULTS, raw)
    if "potential" in raw:
        config["potential"] = copy.deepcopy(raw["potential"])
    try:
        build_solver_config(config)
        potential_from_dict(config["potential"])
        if config["montecarlo"]:
            _sim_config(config)
    except (ConfigError, ValueError) as exc:
        raise RunFailure(EXIT_VALIDATION, "validation", str(exc)) from exc
    return config


def build_solver_config(config: dict) -> SolverConfig:
    return SolverConfig(**config["solver"])


def _sim_config(config: dict) -> SimConfig:
    mc = config["montecarlo"]
    return SimConfig(T=mc["T"], dt=mc["dt"], paths=mc["paths"], r0=mc["r0"], seed=mc["seed"])


# ---------------------------------------------------------------- output


def _clean(value: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return value


def dumps(obj: Any) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_atomic(path: Path, text: str) -> None:
    """Write ``text`` to a temporary file in the same directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _gnuplot_script(csv_name: str, title: str, columns: tuple[str, ...], plots: list[tuple[str, str]]) -> str:
    lines = [
        f"# {title}; data columns: {','.join(columns)}",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 'r'",
        "set grid",
    ]
    lines.append("plot " + ", \\\n     ".join(f"'{csv_name}' using {u} with lines title '{t}'" for u, t in plots))
    return "\n".join(lines) + "\n"


class Run:
    """Stage timer and report assembler for one command invocation."""

    def __init__(self, command: str, config: dict, digests: dict[str, str], out: Path):
        self.command = command
        self.config = config
        self.digests = digests
        self.out = out
        self.timings: dict[str, float] = {}
        self.artifacts: dict[str, str] = {}

    def stage(self, name: str, fn: Callable, *args, **kwargs):
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            self.timings[name] = time.perf_counter() - start

    def emit(self, name: str, text: str) -> None:
        write_atomic(self.out / name, text)
        self.artifacts[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()

    def manifest(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "input_digests": self.digests,
            "output_digests": dict(sorted(self.artifacts.items())),
            "version": __version__,
            "timings": self.timings,
        }

    def report(self, body: dict, status: str = "ok", error: dict | None = None) -> None:
        doc = {"status": status, **body}
        if error is not None:
            doc["error"] = error
        doc["manifest"] = self.manifest()
        write_atomic(self.out / "report.json", dumps(doc))


# ---------------------------------------------------------------- commands


def _solution_rows(result) -> np.ndarray:
    sol, fields = result.solution, result.fields
    return np.column_stack([sol.r, sol.u, sol.uprime, sol.logscale, fields.phi, fields.z, fields.pmag])


def cmd_solve(run: Run) -> tuple[dict, int]:
    config = run.config
    pot = potential_from_dict(config["potential"])
    cfg = build_solver_config(config)
    result = run.stage("solve", solve, pot, cfg)
    diag = run.stage("checks", diagnose, result, config["checks"], config["thresholds"])
    run.emit("solution.csv", _csv_text(SOLUTION_COLUMNS, _solution_rows(result)))
    run.emit(
        "solution.gp",
        _gnuplot_script(
            "solution.csv", "triality solve", SOLUTION_COLUMNS,
            [("1:5", "phi"), ("1:6", "z"), ("1:7", "|p*|")],
        ),
    )
    lhs, rhs, gap = diag.constraint
    body = {
        "potential": pot.to_dict(),
        "series": result.series.to_json(),
        "integration": {
            "steps": result.solution.n_steps,
            "rejected": result.solution.n_rejected,
            "phi_end": float(result.fields.phi[-1]),
            "log_u_end": result.solution.log_u_end,
        },
        "residuals": diag.residuals,
        "constraint": {"integral": lhs, "log_u_R": rhs, "gap": gap},
        "asymptotics": diag.asymptotics.to_json(),
        "geometry": diag.geometry.to_json(),
        "checks": {name: c.to_json() for name, c in diag.checks.items()},
        "flags": diag.flags,
    }
    code = EXIT_INVARIANT if diag.failed else EXIT_OK
    return body, code


def _sweep_member(args) -> dict:
    pot_dict, cfg, radius = args
    pot = potential_from_dict(pot_dict)
    result = solve(pot, cfg)
    sup_phi, bound, holds = high_noise_bound_check(result.fields, pot, cfg)
    phi_r = result.solution.phi_at(radius)
    r = result.fields.r
    target = np.full_like(r, np.nan)
    pos = r > 0
    target[pos] = np.sqrt(pot.eval(r[pos])) / r[pos]
    return {
        "sigma": cfg.sigma,
        "r": r,
        "phi": result.fields.phi,
        "target": target,
        "phi_at_radius": phi_r,
        "sigma2_phi": cfg.sigma**2 * phi_r,
        "target_at_radius": math.sqrt(pot.eval(radius)) / radius,
        "sup_phi": sup_phi,
        "high_noise_bound": bound,
        "bound_holds": holds,
    }


def cmd_sweep_sigma(run: Run) -> tuple[dict, int]:
    config = run.config
    sweep = config["sweep"]
    sigmas = [float(s) for s in sweep["sigmas"]]
    radius = float(sweep["radius"])
    cfg = build_solver_config(config)
    if radius > cfg.R:
        raise RunFailure(EXIT_VALIDATION, "validation", f"sweep radius {radius} exceeds R={cfg.R}")
    pot = potential_from_dict(config["potential"])
    if pot.eval(radius) <= 0:
        raise RunFailure(EXIT_VALIDATION, "validation", "sweep radius needs b(radius) > 0")
    jobs = [(config["potential"], cfg.replace(sigma=s), radius) for s in sigmas]

    def run_all():
        if sweep["workers"] > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=sweep["workers"]) as pool:
                return list(pool.map(_sweep_member, jobs))
        return [_sweep_member(job) for job in jobs]

    members = run.stage("sweep", run_all)
    rows = []
    for m in members:
        s2 = m["sigma"] ** 2
        for r, phi, target in zip(m["r"], m["phi"], m["target"]):
            rows.append((m["sigma"], r, phi, s2 * phi, target))
    run.emit("sweep.csv", _csv_text(SWEEP_COLUMNS, rows))
    run.emit(
        "sweep.gp",
        _gnuplot_script("sweep.csv", "sigma**2 phi against its vanishing-noise target", SWEEP_COLUMNS,
                        [("2:4", "sigma^2 phi"), ("2:5", "sqrt(b)/r")]),
    )
    # monotone approach to the target as sigma decreases
    ordered = sorted(members, key=lambda m: -m["sigma"])
    gaps = [abs(m["sigma2_phi"] - m["target_at_radius"]) for m in ordered]
    approaching = all(b <= a for a, b in zip(gaps, gaps[1:]))
    summary = [
        {k: m[k] for k in ("sigma", "phi_at_radius", "sigma2_phi", "target_at_radius",
                            "sup_phi", "high_noise_bound", "bound_holds")}
        for m in members
    ]
    body = {
        "sweep": {"radius": radius, "members": summary, "approaching_target": approaching},
    }
    code = EXIT_OK if all(m["bound_holds"] for m in members) else EXIT_INVARIANT
    return body, code


def cmd_benchmark_kummer(run: Run) -> tuple[dict, int]:
    config = run.config
    kummer = config["kummer"]
    cfg = build_solver_config(config)
    comparison = run.stage("benchmark", kummer_benchmark, kummer["lambda"], kummer["radii"], cfg)
    body = {
        "kummer": {
            **comparison.to_json(),
            "lambda": kummer["lambda"],
            "N": cfg.N,
            "sigma": cfg.sigma,
            "rtol": kummer["rtol"],
            "passed": comparison.max_rel_dev < kummer["rtol"],
        }
    }
    code = EXIT_OK if comparison.max_rel_dev < kummer["rtol"] else EXIT_INVARIANT
    return body, code


def cmd_montecarlo(run: Run) -> tuple[dict, int]:
    config = run.config
    mc = config["montecarlo"]
    pot = potential_from_dict(config["potential"])
    cfg = build_solver_config(config)
    sim = _sim_config(config)
    if mc["model"] == "as_stated":
        model = ControlModel.as_stated(cfg.sigma)
    else:
        model = ControlModel.hjb_consistent(cfg.sigma)
    result = run.stage("solve", solve, pot, cfg)
    report = run.stage("simulate", simulate_feedback, result.fields, pot, cfg, sim, model)
    ladder = run.stage("policy_ladder", policy_ladder, result.fields, pot, cfg, sim, mc["scales"], model)
    ladder_json = {
        _fmt(scale): {
            "optimal_mean": c.optimal_mean,
            "scaled_mean": c.scaled_mean,
            "diff_stderr": c.diff_stderr,
            "optimal_not_worse": c.optimal_not_worse,
        }
        for scale, c in ladder.items()
    }
    ladder_ok = all(c.optimal_not_worse for c in ladder.values())
    body = {
        "montecarlo": {
            **report.to_json(),
            "control_model": model.to_json(),
            "policy_ladder": ladder_json,
            "ladder_minimized_at_one": ladder_ok,
        }
    }
    code = EXIT_OK if report.within_envelope and ladder_ok else EXIT_INVARIANT
    return body, code


COMMANDS: dict[str, Callable[[Run], tuple[dict, int]]] = {
    "solve": cmd_solve,
    "sweep-sigma": cmd_sweep_sigma,
    "benchmark-kummer": cmd_benchmark_kummer,
    "montecarlo": cmd_montecarlo,
}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="triality", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config, or a report.json to rerun")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
        if name == "sweep-sigma":
            p.add_argument("--sigmas", type=float, nargs="*", help="override sweep.sigmas")
        if name == "montecarlo":
            p.add_argument("--sim-config", help="JSON file with the montecarlo block")
    return parser


def _error_block(code: int, kind: str, message: str) -> dict:
    return {"exit_code": code, "type": kind, "message": message}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.print_defaults:
        sys.stdout.write(dumps(DEFAULTS))
        return EXIT_OK
    out = Path(args.out)
    run = Run(args.command, {}, {}, out)
    try:
        config, digests = load_config(args.config)
        overrides: dict = {}
        if args.command == "sweep-sigma" and args.sigmas is not None:
            overrides["sweep"] = {"sigmas": args.sigmas}
        if args.command == "montecarlo" and args.sim_config:
            data = Path(args.sim_config).read_bytes()
            digests[os.path.basename(args.sim_config)] = hashlib.sha256(data).hexdigest()
            overrides["montecarlo"] = json.loads(data)
        if overrides:
            raw = _merge(config, overrides)
            if args.command == "sweep-sigma" and not raw["sweep"]["sigmas"]:
                raise RunFailure(EXIT_VALIDATION, "validation", "sigma list is empty")
            config = validate_config(raw)
        run.config, run.digests = config, digests
        body, code = COMMANDS[args.command](run)
    except RunFailure as exc:
        return _fail(run, exc.code, exc.kind, str(exc))
    except DomainExitError as exc:
        return _fail(run, EXIT_DOMAIN_EXIT, "domain_exit", str(exc))
    except ConfigError as exc:
        return _fail(run, EXIT_VALIDATION, "validation", str(exc))
    except (TrialityError, ArithmeticError, ValueError) as exc:
        return _fail(run, EXIT_SOLVER, "solver", f"{type(exc).__name__}: {exc}")
    status = "ok" if code == EXIT_OK else "invariant_violation"
    error = None if code == EXIT_OK else _error_block(code, "invariant", "one or more enabled checks failed")
    run.report(body, status, error)
    log.info("%s finished with exit code %d", args.command, code)
    return code


def _fail(run: Run, code: int, kind: str, message: str) -> int:
    sys.stderr.write(f"triality: {message}\n")
    try:
        run.report({}, "error", _error_block(code, kind, message))
    except OSError:
        pass
    return code


if __name__ == "__main__":
    sys.exit(main())
