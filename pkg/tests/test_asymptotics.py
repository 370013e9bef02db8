from __future__ import annotations

import math

import numpy as np
import pytest

from triality.asymptotics import (
    asymptotic_report,
    barrier,
    high_noise_bound_check,
    vanishing_noise_check,
    wkb_expansion,
)
from triality.errors import DomainError
from triality.integrator import SolverConfig
from triality.pipeline import solve
from triality.potential import Monomial, TaylorSeries


def test_barrier_zero_cost(zero_cost):
    np.testing.assert_array_equal(barrier(zero_cost, 2, 1.0, np.array([0.1, 1.0, 5.0])), 0.0)


def test_barrier_limits(quadratic):
    assert barrier(quadratic, 2, 1.0, 1e4) == pytest.approx(1.0, rel=1e-4)
    r = 1e-3
    assert barrier(quadratic, 2, 1.0, r) / r**2 == pytest.approx(0.5, rel=1e-9)
    # closed form of the positive root
    r = 2.0
    naive = (math.sqrt(4 + 4 * r**2 * r**2) - 2) / (2 * r**2)
    assert barrier(quadratic, 2, 1.0, r) == pytest.approx(naive, rel=1e-14)
    with pytest.raises(ValueError):
        barrier(quadratic, 2, 1.0, 0.0)


def test_origin_ordering(benchmark):
    r = 1e-2
    ratio = barrier(benchmark.potential, 2, 1.0, r) / benchmark.solution.phi_at(r)
    assert ratio == pytest.approx(2.0, rel=1e-4)


def test_report_benchmark(benchmark):
    rep = asymptotic_report(benchmark.fields, benchmark.potential, benchmark.config)
    assert rep.barrier_violations == 0
    assert rep.g_monotone and rep.hypotheses_met and not rep.degenerate
    assert rep.asymptote == 1.0
    # phi(10) is 1 - N/(2 r**2) + ..., so the tail error sits just above 1e-2
    assert rep.tail_error == pytest.approx(0.0100510, abs=1e-6)


def test_report_zero_cost(flat):
    rep = asymptotic_report(flat.fields, flat.potential, flat.config)
    assert rep.degenerate
    assert rep.asymptote is None and rep.tail_error is None
    assert rep.barrier_violations == 0


def test_report_superquadratic_has_no_asymptote():
    pot = Monomial(1.0, 4.0)
    res = solve(pot, SolverConfig(R=3.0, grid_points=300))
    rep = asymptotic_report(res.fields, pot, res.config)
    assert rep.asymptote is None
    assert not rep.hypotheses_met
    assert rep.barrier_violations == 0


@pytest.mark.parametrize("R", [5.0, 10.0, 20.0])
def test_gap_to_barrier_closes_with_radius(quadratic, R):
    res = solve(quadratic, SolverConfig(R=R, grid_points=1000))
    g = barrier(quadratic, 2, 1.0, R)
    assert 0 < g - res.fields.phi[-1] < 1.5 / R**2


def test_wkb_quadratic(quadratic):
    grid = np.linspace(0.0, 4.0, 9)
    w = wkb_expansion(quadratic, 2, grid)
    np.testing.assert_allclose(w.S, grid**2 / 2, rtol=1e-12, atol=1e-14)
    assert math.isnan(w.S1prime[0])
    np.testing.assert_allclose(w.S1prime[1:], -1.0 / grid[1:])


def test_wkb_constant_cost():
    grid = np.linspace(0.0, 3.0, 7)
    w = wkb_expansion(TaylorSeries((4.0,)), 1, grid)
    np.testing.assert_allclose(w.S, 2.0 * grid, atol=1e-13)
    np.testing.assert_allclose(w.S1prime[1:], 0.0, atol=1e-15)


def test_wkb_rejects_vanishing_cost():
    with pytest.raises(DomainError):
        wkb_expansion(Monomial(0.0, 2.0), 2, np.linspace(0, 1, 5))


def test_high_noise_bound(zero_cost, quadratic):
    flat = solve(zero_cost, SolverConfig(sigma=10.0, R=1.0, grid_points=100))
    assert high_noise_bound_check(flat.fields, zero_cost, flat.config) == (0.0, 0.0, True)
    a = solve(quadratic, SolverConfig(sigma=10.0, R=1.0, grid_points=200))
    b = solve(quadratic, SolverConfig(sigma=20.0, R=1.0, grid_points=200))
    sup_a, bound_a, ok_a = high_noise_bound_check(a.fields, quadratic, a.config)
    sup_b, bound_b, ok_b = high_noise_bound_check(b.fields, quadratic, b.config)
    assert bound_a == pytest.approx(5e-5)
    assert ok_a and ok_b and sup_a < bound_a
    assert bound_a / bound_b == pytest.approx(16.0)
    # phi ~ r**2 / ((N + 2) sigma**4) here, so the ratio is 16 up to O(sigma**-4)
    assert sup_a / sup_b == pytest.approx(16.0, rel=1e-5)


def test_vanishing_noise_quadratic(quadratic):
    points = vanishing_noise_check(quadratic, 2, [1.0, 0.7, 0.5], 5.0)
    scaled = [p.scaled_phi for p in points]
    assert all(p.target == 1.0 for p in points)
    assert scaled[0] < scaled[1] < scaled[2] < 1.0


def test_vanishing_noise_quartic():
    pot = Monomial(1.0, 4.0)
    points = vanishing_noise_check(pot, 2, [1.0, 0.7, 0.5], 2.0)
    assert points[0].target == pytest.approx(2.0)
    gaps = [abs(p.scaled_phi - 2.0) for p in points]
    assert gaps[0] > gaps[1] > gaps[2]


def test_vanishing_noise_parallel_matches_serial(quadratic):
    base = SolverConfig(R=5.0, grid_points=500)
    serial = vanishing_noise_check(quadratic, 2, [1.0, 0.8], 5.0, base=base)
    parallel = vanishing_noise_check(quadratic, 2, [1.0, 0.8], 5.0, base=base, workers=2)
    assert serial == parallel


def test_vanishing_noise_needs_positive_cost(zero_cost):
    with pytest.raises(DomainError):
        vanishing_noise_check(zero_cost, 2, [1.0], 1.0)
    with pytest.raises(ValueError):
        vanishing_noise_check(Monomial(1.0, 2.0), 2, [], 1.0)
