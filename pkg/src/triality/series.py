"""Power series of the regular auxiliary solution near the origin.

Substituting ``u = sum a_k r**k`` into ``u'' + (N-1)/r u' - b u / sigma**4 = 0``
and collecting ``r**n`` gives, for every ``n >= 0``::

    (n + 2) (n + N) a_{n+2} = sigma**-4 * sum_{m=0}^{n} b_m a_{n-m}

with ``a_0 = 1`` and ``a_1 = 0`` selecting the branch with indicial root 0.
For ``b = lam r**2`` only every fourth coefficient survives and
``a_{4k} = lam**k / (sigma**(4k) kappa_k(N))`` with
``kappa_k = kappa_{k-1} (4k) (4k + N - 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TruncationDomainError, UnsupportedPotentialError
from .potential import Monomial, Potential, Tabulated

DEFAULT_ORDER = 24
TAIL_TOLERANCE = 1e-14


@dataclass(frozen=True)
class SeriesSolution:
    coeffs: np.ndarray
    N: float
    sigma: float
    trunc_radius: float
    #: "taylor" when built from exact coefficients, "local_quadratic" for fitted seeds
    seed_mode: str = "taylor"
    #: Taylor coefficients of b actually used
    cost_coeffs: np.ndarray | None = None

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def extended(self) -> bool:
        """True when ``b(0) > 0``, where the origin growth limit is infinite."""
        return self.cost_coeffs is not None and self.cost_coeffs[0] > 0

    @property
    def phi_origin(self) -> float:
        """Limit of ``u'/(r u)`` at the origin, equal to ``2 a_2``."""
        return 2.0 * float(self.coeffs[2]) if self.order >= 2 else 0.0

    def truncation_error(self, r):
        """Size of the last four retained terms at ``r``, used as the tail bound."""
        tail = self.coeffs[-4:]
        powers = np.arange(self.order - len(tail) + 1, self.order + 1)
        r_arr = np.asarray(r, dtype=float)
        with np.errstate(over="ignore"):
            terms = np.abs(tail) * np.power.outer(r_arr, powers)
        return terms.max(axis=-1)

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "coeffs": [float(a) for a in self.coeffs],
            "trunc_radius": self.trunc_radius if math.isfinite(self.trunc_radius) else None,
            "seed_mode": self.seed_mode,
            "extended_mode": self.extended,
        }


def quadratic_kappa(N: float, k: int) -> float:
    """``kappa_k(N) = prod_{j=1..k} (4j)(4j + N - 2)``."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    kappa = 1.0
    for j in range(1, k + 1):
        kappa *= (4 * j) * (4 * j + N - 2)
    return kappa


def recurrence_coefficients(cost_coeffs: np.ndarray, N: float, sigma: float, order: int) -> np.ndarray:
    """Solve the origin recurrence for ``a_0..a_order``."""
    b = np.zeros(order + 1)
    n_b = min(len(cost_coeffs), order + 1)
    b[:n_b] = cost_coeffs[:n_b]
    inv_s4 = sigma**-4
    a = np.zeros(order + 1)
    a[0] = 1.0
    for n in range(order - 1):
        conv = np.dot(b[: n + 1], a[n::-1])
        a[n + 2] = inv_s4 * conv / ((n + 2) * (n + N))
    return a


def recurrence_residual(series: SeriesSolution) -> float:
    """Largest violation of the recurrence over ``0 <= n <= K - 2``."""
    a, b = series.coeffs, series.cost_coeffs
    inv_s4 = series.sigma**-4
    worst = 0.0
    for n in range(series.order - 1):
        lhs = (n + 2) * (n + 1) * a[n + 2] + (series.N - 1) * (n + 2) * a[n + 2]
        rhs = inv_s4 * np.dot(b[: n + 1], a[n::-1])
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return worst


def _trunc_radius(coeffs: np.ndarray, cap: float, tol: float) -> float:
    probe = SeriesSolution(coeffs, 1.0, 1.0, math.inf)
    if not np.any(coeffs[-4:]):
        return cap
    rs = np.geomspace(1e-8, min(cap, 1e8), 2000)
    with np.errstate(over="ignore", invalid="ignore"):
        partial = np.abs(np.polyval(coeffs[::-1], rs))
        ratio = probe.truncation_error(rs) / np.maximum(1.0, partial)
    bad = ~(ratio <= tol)
    if not bad.any():
        return float(rs[-1]) if cap > rs[-1] else cap
    first = int(np.argmax(bad))
    return float(rs[first - 1]) if first > 0 else 0.0


def build_series(
    pot: Potential,
    N: float,
    sigma: float,
    order: int = DEFAULT_ORDER,
    *,
    tol: float = TAIL_TOLERANCE,
) -> SeriesSolution:
    """Truncated series of the regular solution for an analytic or tabulated cost.

    Tabulated potentials are seeded from the local quadratic fit
    ``b ~ c2 r**2`` through their first three samples.

    Raises
    ------
    UnsupportedPotentialError
        For monomials with a non-integer exponent; use
        :func:`local_quadratic_series` for those.
    """
    if order < 4:
        raise ValueError("series order must be at least 4")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if isinstance(pot, Tabulated):
        return local_quadratic_series(pot, N, sigma, order, radius=None, tol=tol)
    cost = pot.taylor_coefficients(order)
    if cost is None:
        raise UnsupportedPotentialError(f"{pot!r} has no Taylor expansion at the origin")
    coeffs = recurrence_coefficients(cost, N, sigma, order)
    return SeriesSolution(coeffs, N, sigma, _trunc_radius(coeffs, pot.max_radius, tol), "taylor", cost)


def local_quadratic_series(
    pot: Potential,
    N: float,
    sigma: float,
    order: int = DEFAULT_ORDER,
    *,
    radius: float | None,
    tol: float = TAIL_TOLERANCE,
) -> SeriesSolution:
    """Series for the local fit ``b ~ c2 r**2``, for costs that are not analytic at 0."""
    if radius is None and not isinstance(pot, Tabulated):
        raise UnsupportedPotentialError("a fitting radius is required for non-tabulated potentials")
    c2 = pot.local_quadratic(radius)
    cost = np.zeros(order + 1)
    cost[2] = c2
    coeffs = recurrence_coefficients(cost, N, sigma, order)
    return SeriesSolution(
        coeffs, N, sigma, _trunc_radius(coeffs, pot.max_radius, tol), "local_quadratic", cost
    )


def series_for(pot: Potential, N: float, sigma: float, order: int, seed_radius: float) -> SeriesSolution:
    """Pick the exact or locally fitted series depending on the potential."""
    if isinstance(pot, Monomial) and not pot.integer_exponent:
        return local_quadratic_series(pot, N, sigma, order, radius=seed_radius)
    return build_series(pot, N, sigma, order)


def eval_series(series: SeriesSolution, r: float) -> tuple[float, float]:
    """Horner evaluation of ``(u, u')`` at ``r``."""
    if r < 0 or r > series.trunc_radius:
        raise TruncationDomainError(
            f"r={r} is outside the trusted series range [0, {series.trunc_radius}]"
        )
    a = series.coeffs
    u = 0.0
    du = 0.0
    for k in range(series.order, 0, -1):
        u = u * r + a[k]
        du = du * r + k * a[k]
    u = u * r + a[0]
    return u, du


def quadratic_series_value(lam: float, N: float, sigma: float, r: float, rtol: float = 1e-16) -> float:
    """Sum ``1 + sum_k lam**k r**(4k) / (sigma**(4k) kappa_k(N))`` until terms fall below ``rtol``."""
    x = lam * r**4 / sigma**4
    total = 1.0
    term = 1.0
    k = 0
    while True:
        k += 1
        term *= x / ((4 * k) * (4 * k + N - 2))
        total += term
        if abs(term) <= rtol * abs(total):
            return total
