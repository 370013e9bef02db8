"""End-to-end solve: series seed, integration, transforms and invariant checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .asymptotics import AsymptoticReport, asymptotic_report
from .integrator import RadialSolution, SolverConfig, integrate, u_prime_integral_check
from .potential import Potential
from .series import SeriesSolution, series_for
from .transforms import (
    GeometryReport,
    TrialityFields,
    dirichlet_constraint,
    geometry_checks,
    hjb_residual,
    riccati_from_u,
    riccati_residual,
    round_trip_error,
)

#: Residual ceilings calibrated on the b = r**2, N = 2, sigma = 1, R = 10 benchmark at 2000 points.
#: They hold at the reference spacing below; every check is second order in the
#: spacing, so coarser grids loosen them by ``(h / REFERENCE_SPACING)**2``.
DEFAULT_THRESHOLDS = {
    "riccati_residual": 1e-4,
    "hjb_residual": 5e-5,
    "u_prime_integral": 1e-3,
    "dirichlet_gap": 1e-5,
    "round_trip": 1e-5,
}

REFERENCE_SPACING = 10.0 / 1999

CHECK_NAMES = (
    "positivity",
    "monotonicity",
    "riccati_residual",
    "hjb_residual",
    "u_prime_integral",
    "dirichlet_gap",
    "round_trip",
    "barrier",
    "convexity",
    "concavity",
)


@dataclass
class SolveResult:
    potential: Potential
    config: SolverConfig
    series: SeriesSolution
    solution: RadialSolution
    fields: TrialityFields


def solve(pot: Potential, cfg: SolverConfig) -> SolveResult:
    """Series seed, forward integration and the three derived fields."""
    series = series_for(pot, cfg.N, cfg.sigma, cfg.series_order, cfg.eps)
    sol = integrate(pot, cfg, series)
    return SolveResult(pot, cfg, series, sol, riccati_from_u(sol))


@dataclass
class CheckOutcome:
    name: str
    status: str  # "pass", "fail", "warning" (hypothesis unmet), "off"
    value: float | bool | None = None
    threshold: float | None = None
    detail: str = ""

    def to_json(self) -> dict:
        out = {"status": self.status}
        if self.value is not None:
            out["value"] = self.value
        if self.threshold is not None:
            out["threshold"] = self.threshold
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass
class Diagnostics:
    residuals: dict[str, float]
    constraint: tuple[float, float, float]
    asymptotics: AsymptoticReport
    geometry: GeometryReport
    checks: dict[str, CheckOutcome] = field(default_factory=dict)
    flags: dict[str, bool] = field(default_factory=dict)

    @property
    def failed(self) -> list[str]:
        return [name for name, c in self.checks.items() if c.status == "fail"]


def scaled_thresholds(thresholds: dict[str, float], cfg: SolverConfig) -> dict[str, float]:
    """Loosen second-order thresholds for grids coarser than the reference spacing."""
    h = cfg.R / (cfg.grid_points - 1)
    factor = max(1.0, (h / REFERENCE_SPACING) ** 2)
    return {name: value * factor for name, value in thresholds.items()}


def diagnose(
    result: SolveResult,
    toggles: dict[str, bool] | None = None,
    thresholds: dict[str, float] | None = None,
) -> Diagnostics:
    """Run every residual and invariant check on a solve.

    Checks whose hypotheses do not hold for the potential are
    demoted to ``"warning"`` instead of failing; disabled checks report ``"off"``.
    """
    toggles = {name: True for name in CHECK_NAMES} | (toggles or {})
    pot, cfg, sol, fields = result.potential, result.config, result.solution, result.fields
    limits = scaled_thresholds(DEFAULT_THRESHOLDS | (thresholds or {}), cfg)

    residuals = {
        "riccati": riccati_residual(fields, pot, cfg),
        "hjb": hjb_residual(fields, pot, cfg),
        "u_prime_integral": u_prime_integral_check(sol, pot),
        "round_trip": round_trip_error(sol, fields),
        "zprime_identity": float(np.max(np.abs(fields.zprime + 2 * cfg.sigma**2 * fields.r * fields.phi))),
    }
    constraint = dirichlet_constraint(sol, fields)
    asym = asymptotic_report(fields, pot, cfg)
    geom = geometry_checks(sol, fields, pot)

    b = pot.eval(sol.r)
    origin_rate, _ = pot.growth_rates()
    b_positive = bool(np.all(b[1:] > 0))
    b_nondecreasing = bool(np.all(np.diff(b) >= 0))
    # the calibrated FD floors assume a cost that is smooth at the origin
    smooth = result.series.seed_mode == "taylor"
    flags = {
        "smooth_cost": smooth,
        "extended_mode": result.series.extended,
        "hypothesis_unmet": not origin_rate.is_finite_positive,
        "barrier_hypotheses": asym.hypotheses_met,
        "convexity_hypotheses": b_positive and b_nondecreasing,
    }

    def outcome(name, ok, value=None, threshold=None, applicable=True, detail=""):
        if not toggles.get(name, True):
            return CheckOutcome(name, "off", value, threshold)
        if not applicable:
            return CheckOutcome(name, "pass" if ok else "warning", value, threshold, detail)
        return CheckOutcome(name, "pass" if ok else "fail", value, threshold, detail)

    checks = {
        "positivity": outcome("positivity", bool(np.all(sol.u > 0))),
        "monotonicity": outcome("monotonicity", bool(np.all(sol.uprime >= 0)) and bool(np.all(np.diff(sol.logscale) >= 0))),
        "riccati_residual": outcome(
            "riccati_residual", residuals["riccati"] < limits["riccati_residual"],
            residuals["riccati"], limits["riccati_residual"], applicable=smooth,
            detail="" if smooth else "FD floor calibrated for costs analytic at the origin",
        ),
        "hjb_residual": outcome(
            "hjb_residual", residuals["hjb"] < limits["hjb_residual"],
            residuals["hjb"], limits["hjb_residual"], applicable=smooth,
            detail="" if smooth else "FD floor calibrated for costs analytic at the origin",
        ),
        "u_prime_integral": outcome(
            "u_prime_integral", residuals["u_prime_integral"] < limits["u_prime_integral"],
            residuals["u_prime_integral"], limits["u_prime_integral"],
        ),
        "dirichlet_gap": outcome(
            "dirichlet_gap", constraint[2] < limits["dirichlet_gap"], constraint[2], limits["dirichlet_gap"],
        ),
        "round_trip": outcome(
            "round_trip", residuals["round_trip"] < limits["round_trip"],
            residuals["round_trip"], limits["round_trip"],
        ),
        "barrier": outcome(
            "barrier", asym.barrier_violations == 0 and not asym.degenerate,
            asym.barrier_violations, applicable=asym.hypotheses_met,
            detail="" if asym.hypotheses_met else "b(0)=0, finite L > 0 and monotone g not all met",
        ),
        "convexity": outcome(
            "convexity", geom.u_convex and geom.u_lower_bound,
            geom.min_u_curvature, applicable=flags["convexity_hypotheses"],
            detail="" if flags["convexity_hypotheses"] else "b must be positive and nondecreasing",
        ),
        "concavity": outcome(
            "concavity", geom.z_concave and geom.zpp_identity,
            geom.max_z_curvature,
            applicable=flags["convexity_hypotheses"] and asym.hypotheses_met,
            detail="" if flags["convexity_hypotheses"] and asym.hypotheses_met
            else "requires the convexity and barrier hypotheses",
        ),
    }
    return Diagnostics(residuals, constraint, asym, geom, checks, flags)


@dataclass(frozen=True)
class KummerComparison:
    radii: tuple[float, ...]
    integrated: tuple[float, ...]
    reference: tuple[float, ...]
    rel_dev: tuple[float, ...]

    @property
    def max_rel_dev(self) -> float:
        return max(self.rel_dev)

    def to_json(self) -> dict:
        return {
            "radii": list(self.radii),
            "integrated_u": list(self.integrated),
            "series_u": list(self.reference),
            "rel_dev": list(self.rel_dev),
            "max_rel_dev": self.max_rel_dev,
        }


def kummer_benchmark(lam: float, radii, cfg: SolverConfig) -> KummerComparison:
    """Integrate ``b = lam r**2`` and compare u with the closed-form kappa series.

    The series is summed until its terms drop below 1e-16 of the total, so it
    serves as an independent reference at every radius in ``radii``.
    """
    from .potential import Monomial
    from .series import quadratic_series_value

    radii = tuple(float(x) for x in radii)
    if max(radii) > cfg.R:
        raise ValueError("benchmark radii must lie inside [0, R]")
    result = solve(Monomial(lam, 2.0), cfg)
    integrated, reference, dev = [], [], []
    for x in radii:
        u_tilde, _, logscale = result.solution.evaluate(x)
        u = u_tilde * np.exp(logscale)
        ref = quadratic_series_value(lam, cfg.N, cfg.sigma, x)
        integrated.append(float(u))
        reference.append(ref)
        dev.append(abs(float(u) - ref) / abs(ref))
    return KummerComparison(radii, tuple(integrated), tuple(reference), tuple(dev))
