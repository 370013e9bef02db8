from __future__ import annotations

import math

import numpy as np
import pytest

from triality.errors import OutOfDomainError
from triality.integrator import SolverConfig
from triality.pipeline import solve
from triality.potential import Monomial, TaylorSeries
from triality.transforms import (
    cumulative_log_u,
    dirichlet_constraint,
    geometry_checks,
    hjb_residual,
    optimal_control,
    riccati_residual,
    round_trip_error,
)


def test_zero_cost_fields(flat):
    f = flat.fields
    assert not np.any(f.phi)
    assert not np.any(f.z)
    assert riccati_residual(f, flat.potential, flat.config) == 0.0
    assert hjb_residual(f, flat.potential, flat.config) == 0.0
    assert dirichlet_constraint(flat.solution, f) == (0.0, 0.0, 0.0)


def test_transform_identities(benchmark):
    f = benchmark.fields
    sol = benchmark.solution
    np.testing.assert_allclose(f.zprime, -2 * f.r * f.phi)
    np.testing.assert_allclose(f.pmag, f.r * f.phi)
    np.testing.assert_allclose(f.z, -2 * sol.log_u)
    assert f.phi[0] == 0.0


def test_phi_against_bessel_ratio(benchmark):
    # N = 2, b = r**2: u = I0(r**2/2), so phi = I1(x)/I0(x) with x = r**2/2
    from scipy.special import ive

    f = benchmark.fields
    x = f.r[1:] ** 2 / 2
    np.testing.assert_allclose(f.phi[1:], ive(1, x) / ive(0, x), rtol=1e-8)


def test_origin_expansion(benchmark):
    for r in (1e-3, 5e-3, 1e-2):
        assert benchmark.solution.phi_at(r) / r**2 == pytest.approx(0.25, rel=1e-6)


def _residuals(pot, grid):
    res = solve(pot, SolverConfig(R=10.0, grid_points=grid))
    return riccati_residual(res.fields, pot, res.config), hjb_residual(res.fields, pot, res.config)


def test_residuals_are_second_order(quadratic):
    ric1, hjb1 = _residuals(quadratic, 1000)
    ric2, hjb2 = _residuals(quadratic, 2000)
    assert ric2 < 1e-4 and hjb2 < 5e-5
    assert 3.5 < ric1 / ric2 < 4.5
    assert 3.5 < hjb1 / hjb2 < 4.5


def test_residuals_for_other_costs():
    pot = TaylorSeries((0.5, 0.0, 1.0, 0.1))
    res = solve(pot, SolverConfig(N=3, sigma=1.2, R=6.0))
    assert riccati_residual(res.fields, pot, res.config) < 1e-4
    assert hjb_residual(res.fields, pot, res.config) < 1e-4


def test_optimal_control(benchmark):
    f = benchmark.fields
    np.testing.assert_array_equal(optimal_control(f, [0.0, 0.0]), [0.0, 0.0])
    a = optimal_control(f, [10.0, 0.0])
    assert a[0] == pytest.approx(-20.0, abs=0.25)
    assert a[1] == 0.0
    b = optimal_control(f, [3.0, 4.0], gain=1.0)
    np.testing.assert_allclose(b, f.phi_interp(5.0) * np.array([3.0, 4.0]))
    with pytest.raises(OutOfDomainError):
        optimal_control(f, [10.0, 1.0])


def test_dirichlet_gap(benchmark_r5):
    lhs, rhs, gap = dirichlet_constraint(benchmark_r5.solution, benchmark_r5.fields)
    assert gap < 1e-5
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_round_trip(benchmark):
    assert round_trip_error(benchmark.solution, benchmark.fields) < 1e-5
    cum = cumulative_log_u(benchmark.fields)
    assert cum[0] == 0.0 and np.all(np.diff(cum) > 0)


def test_geometry_benchmark(benchmark):
    g = geometry_checks(benchmark.solution, benchmark.fields, benchmark.potential)
    assert g.u_convex and g.u_lower_bound
    assert g.z_concave and g.phi_increasing and g.zpp_identity
    assert g.max_z_curvature < 0 < g.min_u_curvature


def test_geometry_detects_flat_curvature(flat):
    g = geometry_checks(flat.solution, flat.fields, flat.potential)
    assert not g.u_convex
    assert not g.z_concave


@pytest.mark.parametrize("N, sigma", [(1, 1.0), (3, 0.8), (5, 1.5)])
def test_phi_origin_limit_other_dimensions(N, sigma):
    res = solve(Monomial(2.0, 2.0), SolverConfig(N=N, sigma=sigma, R=3.0, grid_points=300))
    r = 2e-3
    # u' is only ~1e-9 here, so abs_tol limits the relative accuracy of phi
    assert res.solution.phi_at(r) / r**2 == pytest.approx(2.0 / (sigma**4 * (N + 2)), rel=1e-4)
    assert math.isclose(res.fields.phi[0], 0.0)
