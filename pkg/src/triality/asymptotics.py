"""Barrier function, large-r asymptote and the two noise limits of the drift."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad

from .errors import DomainError
from .integrator import SolverConfig
from .potential import Potential
from .transforms import TrialityFields


def barrier(pot: Potential, N: float, sigma: float, r):
    """Positive root g of ``r**2 X**2 + N X - b(r)/sigma**4 = 0``.

    Evaluated as ``2 b / sigma**4 / (sqrt(N**2 + t) + N)`` with
    ``t = 4 r**2 b / sigma**4``, which equals
    ``(sqrt(N**2 + t) - N) / (2 r**2)`` without the cancellation at small r.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise ValueError("the barrier is defined for r > 0 only")
    b = pot.eval(r_arr) / sigma**4
    out = 2.0 * b / (np.sqrt(N**2 + 4.0 * r_arr**2 * b) + N)
    return out if np.ndim(r) else float(out)


@dataclass(frozen=True)
class WkbExpansion:
    r: np.ndarray
    S: np.ndarray
    S1prime: np.ndarray

    def to_json(self) -> dict:
        return {"S_end": float(self.S[-1]), "S1prime_end": float(self.S1prime[-1])}


def wkb_expansion(pot: Potential, N: float, grid) -> WkbExpansion:
    """Eikonal phase ``S = int_0^r sqrt(b)`` and the first correction ``S1'``.

    ``S1' = -(1/2) (r**(N-1) sqrt b)' / (r**(N-1) sqrt b)``. At ``r = 0`` the
    correction is undefined and reported as NaN.

    Raises
    ------
    DomainError
        If b vanishes at a positive grid radius.
    """
    r = np.asarray(grid, dtype=float)
    if np.any(np.diff(r) <= 0) or r[0] < 0:
        raise ValueError("grid must be increasing and nonnegative")
    b = pot.eval(r)
    pos = r > 0
    if np.any(b[pos] <= 0):
        raise DomainError("WKB expansion requires b > 0 away from the origin")

    def root_b(s: float) -> float:
        return math.sqrt(pot.eval(s))

    pieces = [quad(root_b, 0.0, r[0], epsabs=1e-13, epsrel=1e-12)[0] if r[0] > 0 else 0.0]
    start = r[0]
    for end in r[1:]:
        pieces.append(quad(root_b, start, end, epsabs=1e-13, epsrel=1e-12)[0])
        start = end
    S = np.cumsum(pieces)
    S1prime = np.full_like(r, np.nan)
    S1prime[pos] = -0.5 * ((N - 1) / r[pos] + pot.derivative(r[pos]) / (2.0 * b[pos]))
    return WkbExpansion(r, S, S1prime)


@dataclass(frozen=True)
class AsymptoticReport:
    g: np.ndarray
    asymptote: float | None
    barrier_violations: int
    tail_error: float | None
    g_monotone: bool
    degenerate: bool
    hypotheses_met: bool

    def to_json(self) -> dict:
        return {
            "asymptote": self.asymptote,
            "tail_error": self.tail_error,
            "barrier_violations": self.barrier_violations,
            "g_monotone": self.g_monotone,
            "degenerate": self.degenerate,
            "hypotheses_met": self.hypotheses_met,
        }


def asymptotic_report(fields: TrialityFields, pot: Potential, cfg: SolverConfig) -> AsymptoticReport:
    """Compare the computed drift with its barrier and the limit ``sqrt(L)/sigma**2``.

    Barrier violations are counted where ``b(r_i) > 0``; a potential that
    vanishes everywhere is flagged as degenerate instead. The tail error is
    reported only when the quadratic growth rate L is finite and positive.
    """
    r = fields.r
    pos = r > 0
    g = np.zeros_like(r)
    g[pos] = barrier(pot, cfg.N, cfg.sigma, r[pos])
    b = pot.eval(r)
    active = pos & (b > 0)
    violations = int(np.count_nonzero(fields.phi[active] >= g[active]))
    g_pos = g[pos]
    g_monotone = bool(np.all(np.diff(g_pos) > 0))
    _, at_infinity = pot.growth_rates()
    asymptote = tail = None
    if at_infinity.is_finite_positive:
        asymptote = math.sqrt(at_infinity.value) / cfg.sigma**2
        tail = abs(float(fields.phi[-1]) - asymptote)
    hypotheses = bool(b[0] == 0 and at_infinity.is_finite_positive and g_monotone)
    return AsymptoticReport(
        g=g,
        asymptote=asymptote,
        barrier_violations=violations,
        tail_error=tail,
        g_monotone=g_monotone,
        degenerate=not bool(np.any(b[pos] > 0)),
        hypotheses_met=hypotheses,
    )


def high_noise_bound_check(fields: TrialityFields, pot: Potential, cfg: SolverConfig) -> tuple[float, float, bool]:
    """``(sup phi, R ||b||_inf / (N sigma**4), sup phi <= bound)`` on the solved grid."""
    sup_phi = float(np.max(fields.phi))
    b_max = float(np.max(pot.eval(fields.r)))
    bound = cfg.R * b_max / (cfg.N * cfg.sigma**4)
    return sup_phi, bound, sup_phi <= bound * (1 + 1e-9)


@dataclass(frozen=True)
class NoisePoint:
    sigma: float
    scaled_phi: float
    target: float


def _scaled_phi(args) -> NoisePoint:
    from .pipeline import solve

    pot, cfg, radius = args
    result = solve(pot, cfg)
    phi = result.solution.phi_at(radius)
    return NoisePoint(cfg.sigma, cfg.sigma**2 * phi, math.sqrt(pot.eval(radius)) / radius)


def vanishing_noise_check(
    pot: Potential,
    N: float,
    sigmas: Sequence[float],
    r: float,
    *,
    base: SolverConfig | None = None,
    workers: int = 1,
) -> list[NoisePoint]:
    """Solve once per sigma and tabulate ``sigma**2 phi_sigma(r)`` against ``sqrt(b(r))/r``.

    Each solve runs on ``[0, max(r, base.R)]``; with ``workers > 1`` the
    solves run in separate processes and results keep the input order.
    """
    if not sigmas:
        raise ValueError("at least one sigma is required")
    if r <= 0 or pot.eval(r) <= 0:
        raise DomainError("the vanishing-noise limit needs r > 0 and b(r) > 0")
    base = base or SolverConfig(N=N, R=r)
    jobs = [(pot, base.replace(N=N, sigma=float(s), R=max(r, base.R)), r) for s in sigmas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_scaled_phi, jobs))
    return [_scaled_phi(job) for job in jobs]
