"""Adaptive integration of the radial auxiliary equation.

The first-order system::

    u'  = v
    v'  = -(N - 1)/r v + b(r)/sigma**4 u

is advanced from the series seed at ``r = eps`` with the Dormand-Prince 5(4)
pair under a PI step-size controller. Because the regular solution grows
roughly like ``exp(S(r)/sigma**2)``, the state is kept in rescaled form: when
``u`` exceeds ``rescale_threshold`` both components are divided by ``u`` and
``log u`` is added to a running log-scale. True values are
``u = u_tilde * exp(logscale)``; the equation is linear, so the rescaling
commutes with the stepping exactly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    NegativeCostError,
    OutOfDomainError,
    StepSizeUnderflowError,
    TruncationDomainError,
)
from .potential import Potential
from .series import DEFAULT_ORDER, SeriesSolution, eval_series

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
# continuous extension of order 4 (Shampine 1986 coefficients)
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY = 0.9
_BETA = 0.04
_EXPO = 0.2 - 0.75 * _BETA
_FAC_MIN = 0.2
_FAC_MAX = 10.0
# steps may not exceed this multiple of r; the 1/r coefficient varies on that scale
_RADIAL_STEP = 0.25


@dataclass(frozen=True)
class SolverConfig:
    N: float = 2.0
    sigma: float = 1.0
    eps: float = 1e-6
    R: float = 10.0
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    rescale_threshold: float = 1e8
    grid_points: int = 2000
    series_order: int = DEFAULT_ORDER
    max_steps: int = 1_000_000

    def __post_init__(self) -> None:
        if not self.N >= 1:
            raise ConfigError(f"dimension N must be >= 1, got {self.N}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.eps < self.R:
            raise ConfigError(f"need 0 < eps < R, got eps={self.eps}, R={self.R}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigError("tolerances must be positive")
        if not self.rescale_threshold > 1:
            raise ConfigError("rescale_threshold must exceed 1")
        if self.grid_points < 3:
            raise ConfigError("grid_points must be at least 3")
        if self.series_order < 4:
            raise ConfigError("series_order must be at least 4")

    def replace(self, **changes) -> SolverConfig:
        return SolverConfig(**{**asdict(self), **changes})

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class _DenseSteps:
    """Per-step data for the continuous extension, in each step's own scale."""

    r0: list[float] = field(default_factory=list)
    h: list[float] = field(default_factory=list)
    y0: list[np.ndarray] = field(default_factory=list)
    k: list[np.ndarray] = field(default_factory=list)
    logscale: list[float] = field(default_factory=list)

    def append(self, r0, h, y0, k, logscale) -> None:
        self.r0.append(r0)
        self.h.append(h)
        self.y0.append(y0.copy())
        self.k.append(k.copy())
        self.logscale.append(logscale)

    def evaluate(self, idx: int, r: float) -> np.ndarray:
        h = self.h[idx]
        theta = (r - self.r0[idx]) / h
        q = _P @ np.array([theta, theta**2, theta**3, theta**4])
        return self.y0[idx] + h * (self.k[idx].T @ q)


@dataclass
class RadialSolution:
    """Sampled regular solution in rescaled form.

    ``u`` and ``uprime`` hold the rescaled values; the true solution is
    ``u * exp(logscale)``.
    """

    r: np.ndarray
    u: np.ndarray
    uprime: np.ndarray
    logscale: np.ndarray
    config: SolverConfig
    series: SeriesSolution
    n_steps: int = 0
    n_rejected: int = 0
    _dense: _DenseSteps | None = field(default=None, repr=False)

    @property
    def log_u(self) -> np.ndarray:
        return np.log(self.u) + self.logscale

    @property
    def log_u_end(self) -> float:
        return float(self.log_u[-1])

    def evaluate(self, r: float) -> tuple[float, float, float]:
        """Rescaled ``(u, u', logscale)`` at any ``r`` in ``[0, R]``."""
        if r < 0 or r > self.config.R * (1 + 1e-12):
            raise OutOfDomainError(f"r={r} is outside [0, {self.config.R}]")
        if r < self.config.eps or self._dense is None or not self._dense.r0:
            u, du = eval_series(self.series, r)
            return u, du, 0.0
        idx = int(np.searchsorted(self._dense.r0, r, side="right")) - 1
        idx = min(max(idx, 0), len(self._dense.r0) - 1)
        y = self._dense.evaluate(idx, r)
        return float(y[0]), float(y[1]), self._dense.logscale[idx]

    def phi_at(self, r: float) -> float:
        if r == 0:
            return self.series.phi_origin
        u, du, _ = self.evaluate(r)
        return du / (r * u)


def seed(series: SeriesSolution, eps: float) -> tuple[float, float]:
    """Series values ``(u, u')`` at the seed radius."""
    return eval_series(series, eps)


def _error_norm(err, y_old, y_new, rtol, atol) -> float:
    scale = atol + rtol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def integrate(pot: Potential, cfg: SolverConfig, series: SeriesSolution) -> RadialSolution:
    """Integrate the regular branch from ``cfg.eps`` to ``cfg.R``.

    Raises
    ------
    TruncationDomainError
        If the seed radius is outside the series range or the seed error
        exceeds ``abs_tol``.
    StepSizeUnderflowError
        If the step collapses to round-off before reaching ``R``.
    NegativeCostError
        If ``b`` turns negative on the path.
    """
    if series.N != cfg.N or series.sigma != cfg.sigma:
        raise ConfigError("series was built for a different (N, sigma)")
    if cfg.R > pot.max_radius:
        raise OutOfDomainError(f"R={cfg.R} exceeds the potential's domain {pot.max_radius}")
    u0, du0 = seed(series, cfg.eps)
    seed_err = float(series.truncation_error(cfg.eps))
    if seed_err > cfg.abs_tol:
        raise TruncationDomainError(
            f"series seed error {seed_err:.3g} at eps={cfg.eps} exceeds abs_tol; "
            "increase series_order or decrease eps"
        )

    N1 = cfg.N - 1.0
    inv_s4 = cfg.sigma**-4
    value = pot._value

    def rhs(r: float, y: np.ndarray) -> np.ndarray:
        b = value(r)
        if b < 0:
            raise NegativeCostError(f"cost function is negative at r={r}")
        return np.array([y[1], -N1 / r * y[1] + b * inv_s4 * y[0]])

    grid = np.linspace(0.0, cfg.R, cfg.grid_points)
    out_u = np.empty_like(grid)
    out_du = np.empty_like(grid)
    out_log = np.zeros_like(grid)
    gi = 0
    while gi < len(grid) and grid[gi] < cfg.eps:
        out_u[gi], out_du[gi] = eval_series(series, grid[gi])
        gi += 1

    rtol, atol = cfg.rel_tol, cfg.abs_tol
    r = cfg.eps
    y = np.array([u0, du0])
    logscale = 0.0
    f0 = rhs(r, y)
    h = _initial_step(rhs, r, y, f0, rtol, atol, cfg.R - r)
    k = np.empty((7, 2))
    dense = _DenseSteps()
    facold = 1e-4
    n_steps = n_rejected = 0

    while r < cfg.R:
        if n_steps >= cfg.max_steps:
            raise StepSizeUnderflowError(f"exceeded {cfg.max_steps} steps before reaching R")
        if h < 16 * np.spacing(r):
            raise StepSizeUnderflowError(f"step size underflow at r={r}")
        h = min(h, _RADIAL_STEP * r)
        # land exactly on the next output radius so sampled values are step values
        target = grid[gi] if gi < len(grid) else cfg.R
        clipped = r + h >= target or target - (r + h) < 16 * np.spacing(target)
        h_try = target - r if clipped else h
        k[0] = f0
        for s in range(1, 7):
            ys = y + h_try * (np.dot(_A[s], k[:s]))
            k[s] = rhs(r + _C[s] * h_try, ys)
        y_new = y + h_try * (_B @ k)
        err = _error_norm(h_try * (_E @ k), y, y_new, rtol, atol)
        fac11 = err**_EXPO if err > 0 else 0.0
        if err <= 1.0:
            fac = fac11 / facold**_BETA
            fac = min(1 / _FAC_MIN, max(1 / _FAC_MAX, fac / _SAFETY))
            facold = max(err, 1e-4)
            dense.append(r, h_try, y, k, logscale)
            r = target if clipped else r + h_try
            y = y_new
            if clipped and gi < len(grid):
                out_u[gi], out_du[gi], out_log[gi] = y[0], y[1], logscale
                gi += 1
            n_steps += 1
            f0 = k[6].copy()
            if y[0] > cfg.rescale_threshold:
                # linear equation: the FSAL stage rescales with the state
                scale = y[0]
                y = y / scale
                f0 = f0 / scale
                logscale += math.log(scale)
            h_next = h_try / fac
            h = max(h_next, h) if clipped else h_next
        else:
            n_rejected += 1
            h = h_try / min(1 / _FAC_MIN, fac11 / _SAFETY)

    return RadialSolution(grid, out_u, out_du, out_log, cfg, series, n_steps, n_rejected, dense)


def _initial_step(rhs, r, y, f0, rtol, atol, span) -> float:
    scale = atol + rtol * np.abs(y)
    d0 = float(np.sqrt(np.mean((y / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = rhs(r + h0, y + h0 * f0)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def u_prime_integral_check(sol: RadialSolution, pot: Potential) -> float:
    """Compare ``u'`` against its integral representation on the solution grid.

    Uses ``u'(r) = sigma**-4 r**(1-N) int_0^r s**(N-1) b(s) u(s) ds`` with the
    trapezoid rule. The running integral is carried in units of the local
    scale ``exp(logscale_i)`` so nothing overflows. Returns the largest
    residual relative to ``max(|u'|, u * r)`` over ``r > 0``.
    """
    cfg = sol.config
    r = sol.r
    b = pot.eval(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(r > 0, r ** (cfg.N - 1), 1.0 if cfg.N == 1 else 0.0)
    f = weight * b * sol.u
    integral = 0.0
    worst = 0.0
    inv_s4 = cfg.sigma**-4
    for i in range(1, len(r)):
        shift = math.exp(sol.logscale[i - 1] - sol.logscale[i])
        integral = integral * shift + 0.5 * (r[i] - r[i - 1]) * (f[i - 1] * shift + f[i])
        predicted = inv_s4 * integral / r[i] ** (cfg.N - 1)
        denom = max(abs(sol.uprime[i]), sol.u[i] * r[i])
        if denom > 0:
            worst = max(worst, abs(sol.uprime[i] - predicted) / denom)
    return worst
