"""Radial cost functions b(r) and their growth descriptors.

Three representations are supported:

* :class:`Monomial` -- ``b(r) = lam * r**p``
* :class:`TaylorSeries` -- ``b(r) = sum_m b_m r**m`` inside a radius of convergence
* :class:`Tabulated` -- samples ``(r_i, b_i)`` joined by a monotone cubic (PCHIP)

All potentials are immutable. ``growth_rates`` returns the limits of
``b(r)/r**2`` at the origin and at infinity as :class:`Rate` values, which
distinguish zero, finite and divergent limits explicitly.
"""

from __future__ import annotations

import enum
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConfigError, NegativeCostError, OutOfDomainError


class RateKind(enum.Enum):
    ZERO = "zero"
    FINITE = "finite"
    INFINITE = "infinite"


@dataclass(frozen=True)
class Rate:
    """Extended nonnegative real used for the quadratic growth limits."""

    kind: RateKind
    value: float = 0.0
    estimated: bool = False

    @classmethod
    def zero(cls, estimated: bool = False) -> Rate:
        return cls(RateKind.ZERO, 0.0, estimated)

    @classmethod
    def infinite(cls, estimated: bool = False) -> Rate:
        return cls(RateKind.INFINITE, math.inf, estimated)

    @classmethod
    def finite(cls, value: float, estimated: bool = False) -> Rate:
        if value < 0:
            raise ValueError(f"growth rate must be nonnegative, got {value}")
        if value == 0:
            return cls.zero(estimated)
        return cls(RateKind.FINITE, float(value), estimated)

    @property
    def is_finite_positive(self) -> bool:
        return self.kind is RateKind.FINITE

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value}
        if self.kind is RateKind.FINITE:
            out["value"] = self.value
        if self.estimated:
            out["estimated"] = True
        return out

    def __float__(self) -> float:
        return self.value


def _check_nonnegative(values, r) -> None:
    if np.any(np.asarray(values) < 0):
        raise NegativeCostError(f"cost function is negative near r={r!r}")


class Potential(ABC):
    """Abstract radial cost function."""

    #: Largest radius at which the representation is defined.
    max_radius: float = math.inf

    @abstractmethod
    def _value(self, r):
        """Evaluate without domain or sign checks; accepts scalars or arrays."""

    @abstractmethod
    def _slope(self, r):
        """First derivative of b, same conventions as :meth:`_value`."""

    @abstractmethod
    def growth_rates(self) -> tuple[Rate, Rate]:
        """Return ``(L0, L)``, the limits of ``b(r)/r**2`` at 0 and at infinity."""

    @abstractmethod
    def taylor_coefficients(self, order: int) -> np.ndarray | None:
        """Coefficients ``b_0..b_order`` at the origin, or None if b is not analytic there."""

    @abstractmethod
    def to_dict(self) -> dict[str, Any]:
        """JSON-ready description, the inverse of :func:`potential_from_dict`."""

    def local_quadratic(self, radius: float) -> float:
        """Least-squares ``c2`` of ``b(r) ~ c2 r**2`` on the samples ``0, radius, 2 radius``."""
        rs = np.array([0.0, radius, 2.0 * radius])
        bs = self.eval(rs)
        return float(np.dot(bs, rs**2) / np.dot(rs**2, rs**2))

    def _check_domain(self, r) -> None:
        r_arr = np.asarray(r)
        if np.any(r_arr < 0):
            raise OutOfDomainError(f"radius must be nonnegative, got {r!r}")
        if np.any(r_arr > self.max_radius):
            raise OutOfDomainError(
                f"radius {np.max(r_arr)} exceeds the domain end {self.max_radius}"
            )

    def eval(self, r):
        """Return b(r) for a scalar or array of radii.

        Raises
        ------
        OutOfDomainError
            If ``r`` is negative or beyond :attr:`max_radius`.
        NegativeCostError
            If the representation yields a negative value.
        """
        self._check_domain(r)
        value = self._value(r)
        _check_nonnegative(value, r)
        return value

    __call__ = eval

    def derivative(self, r):
        self._check_domain(r)
        return self._slope(r)


@dataclass(frozen=True)
class Monomial(Potential):
    """``b(r) = lam * r**p``; ``lam = 0`` gives the zero potential."""

    lam: float
    p: float

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ConfigError(f"lam must be nonnegative, got {self.lam}")
        if self.p < 0:
            raise ConfigError(f"exponent must be nonnegative, got {self.p}")

    @property
    def integer_exponent(self) -> bool:
        return float(self.p).is_integer()

    def _value(self, r):
        if self.p == 0:
            return self.lam * np.ones_like(r, dtype=float) if np.ndim(r) else float(self.lam)
        return self.lam * np.power(r, self.p) if np.ndim(r) else self.lam * float(r) ** self.p

    def _slope(self, r):
        if self.p == 0:
            return np.zeros_like(r, dtype=float) if np.ndim(r) else 0.0
        with np.errstate(divide="ignore"):
            return self.lam * self.p * np.power(np.asarray(r, dtype=float), self.p - 1.0)

    def growth_rates(self) -> tuple[Rate, Rate]:
        if self.lam == 0:
            return Rate.zero(), Rate.zero()
        if self.p == 2:
            return Rate.finite(self.lam), Rate.finite(self.lam)
        if self.p > 2:
            return Rate.zero(), Rate.infinite()
        return Rate.infinite(), Rate.zero()

    def taylor_coefficients(self, order: int) -> np.ndarray | None:
        if not self.integer_exponent:
            return None
        coeffs = np.zeros(order + 1)
        if int(self.p) <= order:
            coeffs[int(self.p)] = self.lam
        return coeffs

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "monomial", "lambda": self.lam, "p": self.p}


@dataclass(frozen=True)
class TaylorSeries(Potential):
    """``b(r) = sum_m coeffs[m] r**m`` for ``r <= radius``."""

    coeffs: tuple[float, ...]
    radius: float = math.inf

    def __post_init__(self) -> None:
        if len(self.coeffs) == 0:
            raise ConfigError("a Taylor potential needs at least one coefficient")
        if not self.radius > 0:
            raise ConfigError(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "max_radius", float(self.radius))

    def _value(self, r):
        # numpy.polyval is Horner with highest degree first
        return np.polyval(self.coeffs[::-1], r) if np.ndim(r) else _horner(self.coeffs, float(r))

    def _slope(self, r):
        deriv = [m * c for m, c in enumerate(self.coeffs)][1:] or [0.0]
        return np.polyval(deriv[::-1], r) if np.ndim(r) else _horner(deriv, float(r))

    @property
    def degree(self) -> int:
        nonzero = [m for m, c in enumerate(self.coeffs) if c != 0]
        return nonzero[-1] if nonzero else -1

    def growth_rates(self) -> tuple[Rate, Rate]:
        c = list(self.coeffs) + [0.0, 0.0, 0.0]
        if c[0] != 0 or c[1] != 0:
            origin = Rate.infinite()
        else:
            origin = Rate.finite(c[2])
        deg = self.degree
        if deg > 2:
            infinity = Rate.infinite()
        elif deg == 2:
            infinity = Rate.finite(c[2])
        else:
            infinity = Rate.zero()
        return origin, infinity

    def taylor_coefficients(self, order: int) -> np.ndarray | None:
        coeffs = np.zeros(order + 1)
        n = min(order + 1, len(self.coeffs))
        coeffs[:n] = self.coeffs[:n]
        return coeffs

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": "taylor", "coeffs": list(self.coeffs)}
        if math.isfinite(self.radius):
            out["radius"] = self.radius
        return out


def _horner(coeffs: Sequence[float], x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


@dataclass(frozen=True)
class Tabulated(Potential):
    """Samples of b joined by a shape-preserving monotone cubic.

    The table must start at ``r = 0`` so the origin seed can be fitted, and
    every sample must be nonnegative.
    """

    points: tuple[tuple[float, float], ...]
    _interp: PchipInterpolator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pts = sorted((float(r), float(b)) for r, b in self.points)
        if len(pts) < 3:
            raise ConfigError("a tabulated potential needs at least three samples")
        rs = np.array([p[0] for p in pts])
        bs = np.array([p[1] for p in pts])
        if rs[0] != 0.0:
            raise ConfigError("a tabulated potential must include r = 0")
        if np.any(np.diff(rs) <= 0):
            raise ConfigError("tabulated radii must be distinct")
        if np.any(bs < 0):
            raise NegativeCostError("tabulated cost samples must be nonnegative")
        object.__setattr__(self, "points", tuple(pts))
        object.__setattr__(self, "_interp", PchipInterpolator(rs, bs, extrapolate=False))
        object.__setattr__(self, "max_radius", float(rs[-1]))

    @property
    def radii(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    def _value(self, r):
        out = self._interp(r)
        return out if np.ndim(r) else float(out)

    def _slope(self, r):
        # central difference of the interpolant, one-sided at the table ends
        r_arr = np.asarray(r, dtype=float)
        h = 1e-6 * max(self.max_radius, 1.0)
        lo = np.clip(r_arr - h, 0.0, self.max_radius)
        hi = np.clip(r_arr + h, 0.0, self.max_radius)
        out = (self._interp(hi) - self._interp(lo)) / (hi - lo)
        return out if np.ndim(r) else float(out)

    def growth_rates(self) -> tuple[Rate, Rate]:
        rs, bs = self.radii, self.values
        first = bs[1] / rs[1] ** 2
        last = bs[-1] / rs[-1] ** 2
        return Rate.finite(first, estimated=True), Rate.finite(last, estimated=True)

    def taylor_coefficients(self, order: int) -> np.ndarray | None:
        return None

    def local_quadratic(self, radius: float | None = None) -> float:
        """Least-squares ``c2`` through the first three table samples; ``radius`` is ignored."""
        rs, bs = self.radii[:3], self.values[:3]
        return float(np.dot(bs, rs**2) / np.dot(rs**2, rs**2))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "table", "points": [list(p) for p in self.points]}


def potential_from_dict(data: dict[str, Any]) -> Potential:
    """Build a potential from its JSON description."""
    kind = data.get("kind")
    if kind == "monomial":
        return Monomial(float(data["lambda"]), float(data["p"]))
    if kind == "taylor":
        return TaylorSeries(tuple(data["coeffs"]), float(data.get("radius", math.inf)))
    if kind == "table":
        return Tabulated(tuple(tuple(p) for p in data["points"]))
    raise ConfigError(f"unknown potential kind {kind!r}")
