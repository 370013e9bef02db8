"""Maps from the auxiliary solution to the Riccati drift, HJB value and feedback law.

    phi = u' / (r u)          z = -2 sigma**2 log u          z' = -2 sigma**2 r phi

All maps work on the rescaled representation: ratios are scale-free and
``log u = log u_tilde + logscale``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfDomainError
from .integrator import RadialSolution, SolverConfig
from .potential import Potential

#: Discount rate of the control problem; only the undiscounted case has an HJB equation here.
DISCOUNT_RATE = 0.0


@dataclass(frozen=True)
class TrialityFields:
    r: np.ndarray
    phi: np.ndarray
    z: np.ndarray
    zprime: np.ndarray
    pmag: np.ndarray
    sigma: float

    @property
    def R(self) -> float:
        return float(self.r[-1])

    def phi_interp(self, radius):
        """Linear interpolation of phi at arbitrary radii inside the grid."""
        return np.interp(radius, self.r, self.phi)

    def z_interp(self, radius):
        return np.interp(radius, self.r, self.z)


def riccati_from_u(sol: RadialSolution) -> TrialityFields:
    """Riccati drift, value function and control magnitude on the solution grid.

    ``phi(0)`` is taken from the series limit ``2 a_2`` rather than the 0/0 ratio.
    """
    sigma = sol.config.sigma
    r = sol.r
    phi = np.empty_like(r)
    pos = r > 0
    phi[pos] = sol.uprime[pos] / (r[pos] * sol.u[pos])
    phi[~pos] = sol.series.phi_origin
    z = -2.0 * sigma**2 * sol.log_u + 0.0  # no negative zeros
    zprime = -2.0 * sigma**2 * r * phi
    pmag = sigma**2 * r * phi
    return TrialityFields(r, phi, z, zprime, pmag, sigma)


def residual_window(cfg: SolverConfig) -> float:
    """Radii below this are excluded from finite-difference residuals."""
    return max(2.0 * cfg.eps, cfg.R / 500.0)


def _interior(fields: TrialityFields, cfg: SolverConfig) -> np.ndarray:
    r = fields.r
    mask = np.zeros(len(r), dtype=bool)
    mask[1:-1] = r[1:-1] >= residual_window(cfg)
    return mask


def riccati_rhs(phi, r, b, N: float, sigma: float):
    return -r * phi**2 - N / r * phi + b / (sigma**4 * r)


def riccati_residual(fields: TrialityFields, pot: Potential, cfg: SolverConfig) -> float:
    """Max |central-difference phi' - Riccati right-hand side| on the interior."""
    r, phi = fields.r, fields.phi
    mask = _interior(fields, cfg)
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return 0.0
    dphi = (phi[idx + 1] - phi[idx - 1]) / (r[idx + 1] - r[idx - 1])
    rhs = riccati_rhs(phi[idx], r[idx], pot.eval(r[idx]), cfg.N, cfg.sigma)
    return float(np.max(np.abs(dphi - rhs)))


def _three_point(lo, mid, hi, h_lo, h_hi):
    return 2.0 * (hi * h_lo - mid * (h_lo + h_hi) + lo * h_hi) / (h_lo * h_hi * (h_lo + h_hi))


def _second_difference(values: np.ndarray, r: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return _three_point(
        values[idx - 1], values[idx], values[idx + 1], r[idx] - r[idx - 1], r[idx + 1] - r[idx]
    )


def hjb_residual(fields: TrialityFields, pot: Potential, cfg: SolverConfig) -> float:
    """Max residual of ``z'' + (N-1)/r z' - z'**2/(2 sigma**2) + 2 b / sigma**2`` on the interior.

    Both derivatives of z come from central differences of the sampled z.
    """
    r, z = fields.r, fields.z
    idx = np.nonzero(_interior(fields, cfg))[0]
    if idx.size == 0:
        return 0.0
    dz = (z[idx + 1] - z[idx - 1]) / (r[idx + 1] - r[idx - 1])
    d2z = _second_difference(z, r, idx)
    s2 = cfg.sigma**2
    res = d2z + (cfg.N - 1) / r[idx] * dz - dz**2 / (2 * s2) + 2 * pot.eval(r[idx]) / s2
    return float(np.max(np.abs(res)))


def optimal_control(fields: TrialityFields, x, gain: float | None = None) -> np.ndarray:
    """Radial feedback ``alpha(x) = gain * phi(|x|) * x``.

    The default gain ``-2 sigma**4`` is the closed form of the Hamiltonian
    minimiser as usually written; see :mod:`triality.control` for the gain
    under which the value process is an exact martingale.
    """
    x = np.asarray(x, dtype=float)
    radius = float(np.linalg.norm(x))
    if radius > fields.R * (1 + 1e-12):
        raise OutOfDomainError(f"|x|={radius} is outside the solved domain [0, {fields.R}]")
    if gain is None:
        gain = -2.0 * fields.sigma**4
    return gain * fields.phi_interp(radius) * x


def cumulative_log_u(fields: TrialityFields) -> np.ndarray:
    """Trapezoid ``int_0^r s phi(s) ds`` at every grid point."""
    integrand = fields.r * fields.phi
    steps = 0.5 * np.diff(fields.r) * (integrand[1:] + integrand[:-1])
    return np.concatenate([[0.0], np.cumsum(steps)])


def dirichlet_constraint(sol: RadialSolution, fields: TrialityFields) -> tuple[float, float, float]:
    """``(int_0^R s phi ds, log u(R), gap)`` for the boundary value reached at R."""
    lhs = float(cumulative_log_u(fields)[-1])
    rhs = sol.log_u_end
    return lhs, rhs, abs(lhs - rhs)


def round_trip_error(sol: RadialSolution, fields: TrialityFields) -> float:
    """Largest ``|int_0^r s phi - log u(r)|`` over the grid."""
    return float(np.max(np.abs(cumulative_log_u(fields) - sol.log_u)))


@dataclass(frozen=True)
class GeometryReport:
    """Discrete convexity of u and concavity of z on the interior grid."""

    u_convex: bool
    u_lower_bound: bool
    z_concave: bool
    phi_increasing: bool
    zpp_identity: bool
    min_u_curvature: float
    worst_lower_bound_margin: float
    max_z_curvature: float

    def to_json(self) -> dict:
        return {
            "u_convex": self.u_convex,
            "u_lower_bound": self.u_lower_bound,
            "z_concave": self.z_concave,
            "phi_increasing": self.phi_increasing,
            "phi_plus_r_dphi_positive": self.zpp_identity,
            "min_u_curvature": self.min_u_curvature,
            "worst_lower_bound_margin": self.worst_lower_bound_margin,
            "max_z_curvature": self.max_z_curvature,
        }


def geometry_checks(sol: RadialSolution, fields: TrialityFields, pot: Potential) -> GeometryReport:
    """Discrete forms of ``u'' > 0``, ``u'' >= b u/(N sigma**4)`` and ``z'' < 0``.

    The second difference of u at ``r_i`` uses neighbours brought to the
    scale of point i, so the comparison is overflow free. Curvatures are
    reported relative to ``u_i`` (i.e. as ``u''/u``).
    """
    cfg = sol.config
    r = sol.r
    n = len(r)
    idx = np.arange(1, n - 1)
    ls = sol.logscale
    u_lo = sol.u[idx - 1] * np.exp(ls[idx - 1] - ls[idx])
    u_hi = sol.u[idx + 1] * np.exp(ls[idx + 1] - ls[idx])
    d2u = _three_point(u_lo, sol.u[idx], u_hi, r[idx] - r[idx - 1], r[idx + 1] - r[idx])
    curvature = d2u / sol.u[idx]
    bound = pot.eval(r[idx]) / (cfg.N * cfg.sigma**4)
    # fourth difference estimates the O(h^2) truncation of the second difference
    fd_tol = np.zeros(len(idx))
    inner = (idx >= 2) & (idx <= n - 3)
    ii = idx[inner]
    scale = np.exp(ls[ii - 2] - ls[ii]), np.exp(ls[ii + 2] - ls[ii])
    d4 = (
        sol.u[ii - 2] * scale[0] - 4 * sol.u[ii - 1] * np.exp(ls[ii - 1] - ls[ii])
        + 6 * sol.u[ii]
        - 4 * sol.u[ii + 1] * np.exp(ls[ii + 1] - ls[ii]) + sol.u[ii + 2] * scale[1]
    )
    h = np.diff(r).mean()
    fd_tol[inner] = np.abs(d4) / (12 * h**2) / sol.u[ii]
    fd_tol += 1e-9
    margin = curvature - bound
    d2z = _second_difference(fields.z, r, idx)
    dphi = (fields.phi[idx + 1] - fields.phi[idx - 1]) / (r[idx + 1] - r[idx - 1])
    zpp_term = fields.phi[idx] + r[idx] * dphi
    return GeometryReport(
        u_convex=bool(np.all(d2u > 0)),
        u_lower_bound=bool(np.all(margin >= -fd_tol)),
        z_concave=bool(np.all(d2z < 0)),
        phi_increasing=bool(np.all(np.diff(fields.phi) > 0)),
        zpp_identity=bool(np.all(zpp_term > 0)),
        min_u_curvature=float(np.min(curvature)),
        worst_lower_bound_margin=float(np.min(margin)),
        max_z_curvature=float(np.max(d2z)),
    )
