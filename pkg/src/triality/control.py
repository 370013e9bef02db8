"""Monte Carlo check of the value process under radial feedback.

For ``dX = alpha dt + sigma dW`` in R^N with running cost
``effort |alpha|**2 + b(|X|)``, Ito's formula applied to the value ``z(|X|)``
gives the drift

    alpha . grad z + (sigma**2 / 2) laplacian z + effort |alpha|**2 + b.

With ``z = -2 sigma**2 log u`` the radial HJB equation
``z'' + (N-1)/r z' - z'**2/(2 sigma**2) + 2 b/sigma**2 = 0`` makes this drift
vanish for ``effort = 1`` and ``alpha = -grad z / 2 = sigma**2 phi(|x|) x``,
and makes it equal to ``sigma**4 r**2 phi**2 (s - 1)**2 >= 0`` for the scaled
policy ``s * alpha``. So ``z(X_t) + int cost`` is a martingale under the
feedback and a submartingale under every scaled policy, which is what the
simulation measures over a finite horizon.

:meth:`ControlModel.as_stated` keeps the alternative pairing
``alpha = -2 sigma**4 phi x`` with effort ``1/(2 sigma**2)``; its drift is
``(sigma**4 + 6 sigma**6) r**2 phi**2 > 0``, so it is not a martingale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DomainExitError
from .integrator import SolverConfig
from .potential import Potential
from .transforms import TrialityFields

MIN_PATHS = 100


@dataclass(frozen=True)
class ControlModel:
    """Feedback ``alpha = gain * phi(|x|) * x`` with cost ``effort * |alpha|**2 + b``."""

    gain: float
    effort: float
    name: str

    @classmethod
    def hjb_consistent(cls, sigma: float) -> ControlModel:
        return cls(sigma**2, 1.0, "hjb_consistent")

    @classmethod
    def as_stated(cls, sigma: float) -> ControlModel:
        return cls(-2.0 * sigma**4, 1.0 / (2.0 * sigma**2), "as_stated")

    def to_json(self) -> dict:
        return {"name": self.name, "gain": self.gain, "effort": self.effort}


@dataclass(frozen=True)
class SimConfig:
    T: float = 0.5
    dt: float = 1e-3
    paths: int = 10_000
    r0: float = 1.0
    seed: int = 42

    def __post_init__(self) -> None:
        if not (self.T > 0 and self.dt > 0 and self.dt <= self.T):
            raise ConfigError("need 0 < dt <= T")
        if self.paths < MIN_PATHS:
            raise ConfigError(f"at least {MIN_PATHS} paths are required, got {self.paths}")
        if not self.r0 > 0:
            raise ConfigError("start radius must be positive")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ConfigError("T must be an integer multiple of dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def to_json(self) -> dict:
        return {"T": self.T, "dt": self.dt, "paths": self.paths, "r0": self.r0, "seed": self.seed}


@dataclass(frozen=True)
class MartingaleReport:
    mean: float
    z0: float
    gap: float
    stderr: float
    exit_fraction: float
    dt_bias: float
    model: str
    sim: SimConfig

    @property
    def excess(self) -> float:
        """Signed ``mean - z(r0)``; positive values indicate submartingale drift."""
        return self.mean - self.z0

    @property
    def within_envelope(self) -> bool:
        bias = self.dt_bias if math.isfinite(self.dt_bias) else 0.0
        return self.gap <= 3.0 * self.stderr + bias

    def to_json(self) -> dict:
        return {
            "gap": self.gap,
            "excess": self.excess,
            "stderr": self.stderr,
            "dt_bias": self.dt_bias,
            "within_envelope": self.within_envelope,
            "exit_fraction": self.exit_fraction,
            "dt": self.sim.dt,
            "horizon": self.sim.T,
            "paths": self.sim.paths,
            "r0": self.sim.r0,
            "seed": self.sim.seed,
            "model": self.model,
            "note": "finite-horizon martingale identity; the undiscounted infinite-horizon cost is not simulated",
        }


def gaussian_block(seed: int, step: int, paths: int, dim: int) -> np.ndarray:
    """Standard normals for one fine step, keyed by ``(seed, step)``.

    A counter-based Philox stream per step makes the draws independent of
    how many steps other runs take, so coarser runs and other policies can
    reuse exactly the same Brownian path.
    """
    bitgen = np.random.Philox(np.random.SeedSequence([seed, step]))
    return np.random.Generator(bitgen).standard_normal((paths, dim))


def _dimension(cfg: SolverConfig) -> int:
    if not float(cfg.N).is_integer():
        raise ConfigError("Monte Carlo simulation needs an integer dimension N")
    return int(cfg.N)


def _simulate_paths(
    fields: TrialityFields,
    pot: Potential,
    cfg: SolverConfig,
    sim: SimConfig,
    model: ControlModel,
    scale: float = 1.0,
    stride: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-path ``z(|X_T|) + int cost`` and the mask of paths that stayed in ``[0, R]``.

    ``stride`` merges that many fine Brownian increments into one Euler step.
    """
    dim = _dimension(cfg)
    R = fields.R
    M = sim.paths
    n_fine = sim.n_steps
    if n_fine % stride:
        raise ConfigError("stride must divide the number of steps")
    dt = sim.dt * stride
    root_dt = math.sqrt(sim.dt)
    gain = scale * model.gain
    X = np.zeros((M, dim))
    X[:, 0] = sim.r0
    cost = np.zeros(M)
    alive = np.ones(M, dtype=bool)
    for j in range(n_fine // stride):
        radius = np.sqrt(np.einsum("ij,ij->i", X, X))
        inside = np.minimum(radius, R)
        alpha = (gain * np.interp(inside, fields.r, fields.phi))[:, None] * X
        running = model.effort * np.einsum("ij,ij->i", alpha, alpha) + pot.eval(inside)
        cost += running * dt
        dW = gaussian_block(sim.seed, j * stride, M, dim)
        for extra in range(1, stride):
            dW += gaussian_block(sim.seed, j * stride + extra, M, dim)
        X += alpha * dt + cfg.sigma * root_dt * dW
        alive &= np.sqrt(np.einsum("ij,ij->i", X, X)) <= R
    final = np.minimum(np.sqrt(np.einsum("ij,ij->i", X, X)), R)
    return fields.z_interp(final) + cost, alive


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    if n < 2:
        return float(values.mean()) if n else math.nan, math.inf
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def simulate_feedback(
    fields: TrialityFields,
    pot: Potential,
    cfg: SolverConfig,
    sim: SimConfig,
    model: ControlModel | None = None,
) -> MartingaleReport:
    """Euler-Maruyama estimate of ``E[z(|X_T|) + int_0^T cost] - z(r0)``.

    The O(dt) weak bias is estimated by repeating the run with steps of
    ``2 dt`` on the same Brownian path: for a first-order scheme
    ``bias(dt) ~ mean(2 dt) - mean(dt)``.

    Raises
    ------
    DomainExitError
        If more than half the paths leave the solved domain.
    """
    model = model or ControlModel.hjb_consistent(cfg.sigma)
    values, alive = _simulate_paths(fields, pot, cfg, sim, model)
    exit_fraction = 1.0 - float(alive.mean())
    if exit_fraction > 0.5:
        raise DomainExitError(f"{exit_fraction:.0%} of paths left [0, {fields.R}]")
    mean, stderr = _mean_stderr(values[alive])
    z0 = float(fields.z_interp(sim.r0))
    dt_bias = math.nan
    if sim.n_steps % 2 == 0:
        coarse, alive_coarse = _simulate_paths(fields, pot, cfg, sim, model, stride=2)
        both = alive & alive_coarse
        dt_bias = abs(float(coarse[both].mean() - values[both].mean()))
    return MartingaleReport(mean, z0, abs(mean - z0), stderr, exit_fraction, dt_bias, model.name, sim)


class PolicyComparison(NamedTuple):
    optimal_mean: float
    scaled_mean: float
    diff_stderr: float

    @property
    def optimal_not_worse(self) -> bool:
        return self.optimal_mean <= self.scaled_mean + 3.0 * self.diff_stderr


def _paired(best, alive_best, other, alive_other) -> PolicyComparison:
    both = alive_best & alive_other
    diff = other[both] - best[both]
    _, diff_se = _mean_stderr(diff)
    if not np.any(diff):
        diff_se = 0.0
    return PolicyComparison(float(best[both].mean()), float(other[both].mean()), diff_se)


def policy_compare(
    fields: TrialityFields,
    pot: Potential,
    cfg: SolverConfig,
    sim: SimConfig,
    scale: float,
    model: ControlModel | None = None,
) -> PolicyComparison:
    """Paired-seed comparison of the feedback against ``scale`` times the feedback.

    Both runs see identical Brownian increments; the standard error is that
    of the per-path difference over paths that stayed inside in both runs.
    """
    return policy_ladder(fields, pot, cfg, sim, (scale,), model)[scale]


def policy_ladder(
    fields: TrialityFields,
    pot: Potential,
    cfg: SolverConfig,
    sim: SimConfig,
    scales: Sequence[float] = (0.0, 0.5, 1.0, 1.5, 2.0),
    model: ControlModel | None = None,
) -> dict[float, PolicyComparison]:
    """:func:`policy_compare` for several scales against one shared baseline run."""
    if any(s < 0 for s in scales):
        raise ValueError("scale must be nonnegative")
    model = model or ControlModel.hjb_consistent(cfg.sigma)
    best = _simulate_paths(fields, pot, cfg, sim, model, 1.0)
    out = {}
    for s in scales:
        other = best if s == 1.0 else _simulate_paths(fields, pot, cfg, sim, model, s)
        out[s] = _paired(*best, *other)
    return out
