"""Kantorovich plans, potentials, Monge maps and transport rays."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geolgp.boundary import AtomSet, BoundaryDatum, Piece, discretize, split, tangential_derivative
from geolgp.domain import TWO_PI, Ellipse
from geolgp.errors import InvalidInput
from geolgp.grids import GridSpec
from geolgp.metric import boundary_pair_lengths
from geolgp.transport import (CostMatrix, PairCost, build_rays, cost_matrix, interior_crossings, monge_map,
                              potential_from_plan, pushforward, random_feasible_plan, ray_residuals, solve_lp,
                              solve_noncrossing)
from geolgp.weights import ConstantWeight, RadialBumpWeight

from conftest import BUMP


def _random_atoms(dom, rng, ns, nt):
    ms = rng.uniform(0.2, 1.0, ns)
    mt = rng.uniform(0.2, 1.0, nt)
    mt *= ms.sum() / mt.sum()
    return (AtomSet.build(dom, rng.uniform(0, TWO_PI, ns), ms),
            AtomSet.build(dom, rng.uniform(0, TWO_PI, nt), mt))


def _chord_cost(S, T, k=1.0):
    d = S.points[:, None, :] - T.points[None, :, :]
    return CostMatrix(k * np.hypot(d[..., 0], d[..., 1]), S, T)


# -- LP -----------------------------------------------------------------------------

def test_lp_single_pair(disk):
    S = AtomSet.build(disk, [0.0], [1.0])
    T = AtomSet.build(disk, [np.pi], [1.0])
    plan = solve_lp(S, T, _chord_cost(S, T))
    assert plan.total_cost == pytest.approx(2.0)
    assert plan.flows == [(0, 0, 1.0)]


def test_lp_two_by_two_brute_force(disk):
    S = AtomSet.build(disk, [0.0, np.pi / 2], [1.0, 1.0])
    T = AtomSet.build(disk, [np.pi, 1.5 * np.pi], [1.0, 1.0])
    C = _chord_cost(S, T)
    best = min(sum(C.entries[i, p[i]] for i in range(2)) for p in itertools.permutations(range(2)))
    assert solve_lp(S, T, C).total_cost == pytest.approx(best, rel=1e-12)


def test_lp_beats_random_feasible_plans(disk, rng):
    S, T = _random_atoms(disk, rng, 12, 9)
    C = _chord_cost(S, T)
    opt = solve_lp(S, T, C).total_cost
    for _ in range(100):
        X = random_feasible_plan(S, T, rng)
        assert np.allclose(X.sum(axis=1), S.mass) and np.allclose(X.sum(axis=0), T.mass)
        assert float(np.sum(X * C.entries)) >= opt - 1e-12


def test_lp_rejects_unbalanced(disk):
    S = AtomSet.build(disk, [0.0], [1.0])
    T = AtomSet.build(disk, [np.pi], [2.0])
    with pytest.raises(InvalidInput):
        solve_lp(S, T, _chord_cost(S, T))


# -- non-crossing solver --------------------------------------------------------------

def test_noncrossing_alternating_atoms(disk):
    S = AtomSet.build(disk, [0.0, np.pi], [1.0, 1.0])
    T = AtomSet.build(disk, [np.pi / 2, 1.5 * np.pi], [1.0, 1.0])
    C = _chord_cost(S, T)
    nc = solve_noncrossing(S, T, C)
    assert nc.total_cost == pytest.approx(solve_lp(S, T, C).total_cost, rel=1e-12)
    # each source goes to a neighbouring target, never across
    assert len(interior_crossings(build_rays(nc, ConstantWeight(1.0), disk), 1e-3)) == 0


def test_noncrossing_two_atoms(disk):
    S = AtomSet.build(disk, [0.3], [1.5])
    T = AtomSet.build(disk, [2.0], [1.5])
    nc = solve_noncrossing(S, T, _chord_cost(S, T))
    assert nc.flows == [(0, 0, 1.5)]


def test_noncrossing_matches_lp_on_ellipse_with_bump(ellipse, bump, rng):
    S, T = _random_atoms(ellipse, rng, 25, 25)
    C = cost_matrix(bump, ellipse, S, T)
    lp = solve_lp(S, T, C)
    nc = solve_noncrossing(S, T, C)
    assert abs(nc.total_cost - lp.total_cost) <= 1e-9 * lp.total_cost
    a, b = nc.marginals()
    assert np.allclose(a, S.mass, atol=1e-12) and np.allclose(b, T.mass, atol=1e-12)
    # the lazy cost route gives the same plan
    lazy = solve_noncrossing(S, T, PairCost(bump, ellipse, S, T))
    assert lazy.pairs() == nc.pairs()
    assert np.allclose(lazy.mass, nc.mass)


@settings(max_examples=10)
@given(st.integers(0, 10 ** 6), st.integers(1, 100), st.integers(1, 100))
def test_noncrossing_equals_lp_euclidean(seed, ns, nt):
    dom = Ellipse(1.25, 0.8)
    S, T = _random_atoms(dom, np.random.default_rng(seed), ns, nt)
    C = _chord_cost(S, T)
    lp = solve_lp(S, T, C).total_cost
    assert abs(solve_noncrossing(S, T, C).total_cost - lp) <= 1e-9 * lp


def test_failed_certificate_falls_back_to_lp(disk):
    class Failed:
        passed = False

    S = AtomSet.build(disk, [0.0, 1.0], [1.0, 1.0])
    T = AtomSet.build(disk, [3.0, 4.0], [1.0, 1.0])
    C = _chord_cost(S, T)
    with pytest.warns(RuntimeWarning):
        plan = solve_noncrossing(S, T, C, certificate=Failed())
    assert plan.method == "lp"


# -- potential ------------------------------------------------------------------------

def test_potential_single_pair_is_linear(disk, unit):
    S = AtomSet.build(disk, [0.0], [1.0])
    T = AtomSet.build(disk, [np.pi], [1.0])
    C = _chord_cost(S, T)
    spec = GridSpec.covering(disk, n=64)
    pot = potential_from_plan(solve_lp(S, T, C), C, unit, disk, spec)
    assert pot.gap == pytest.approx(0.0, abs=1e-12)
    x = np.linspace(-0.9, 0.9, 7)
    vals = pot.grid.sample(np.column_stack([x, np.zeros_like(x)]))
    # the grid is a fast-marching c-transform: exact up to O(h)
    assert np.allclose(vals - vals[0], x - x[0], atol=spec.h)
    assert pot.source_values[0] - pot.target_values[0] == pytest.approx(2.0, abs=1e-12)


def test_potential_slackness_and_lipschitz(ellipse, bump, rng):
    S, T = _random_atoms(ellipse, rng, 15, 12)
    C = cost_matrix(bump, ellipse, S, T)
    plan = solve_lp(S, T, C)
    pot = potential_from_plan(plan, C)
    assert abs(pot.gap) <= 1e-6 * plan.total_cost
    diam = bump.k_max * ellipse.diameter()
    # complementary slackness on the support of the plan
    res = pot.source_values[plan.src] - pot.target_values[plan.dst] - plan.cost
    assert np.abs(res).max() <= 1e-6 * diam
    # dual feasibility on every pair
    slack = C.entries - (pot.source_values[:, None] - pot.target_values[None, :])
    assert slack.min() >= -1e-9 * diam
    # 1-Lipschitz w.r.t. d_k for the boundary c-transform on random pairs
    th = rng.uniform(0, TWO_PI, (1000, 2))
    th = th[np.abs(th[:, 0] - th[:, 1]) > 1e-3]
    pa = pot.on_boundary(bump, ellipse, th[:, 0])
    pb = pot.on_boundary(bump, ellipse, th[:, 1])
    d = boundary_pair_lengths(bump, ellipse, th[:, 0], th[:, 1])
    assert np.max(np.abs(pa - pb) - d) <= 1e-7 * diam


def test_ray_residuals_are_order_h(disk, bump):
    S = AtomSet.build(disk, [0.2, 1.0], [1.0, 0.5])
    T = AtomSet.build(disk, [3.0, 4.2], [0.7, 0.8])
    C = cost_matrix(bump, disk, S, T)
    plan = solve_noncrossing(S, T, C)
    rays = build_rays(plan, bump, disk)
    res = {}
    for n in (64, 128):
        spec = GridSpec.covering(disk, n=n)
        pot = potential_from_plan(solve_lp(S, T, C), C, bump, disk, spec)
        res[n] = ray_residuals(rays, pot).max()
        assert res[n] <= 3 * spec.h * bump.k_max
    assert res[128] < res[64]


# -- Monge map and rays -----------------------------------------------------------------

def test_monge_map_two_atoms(disk):
    S = AtomSet.build(disk, [0.0], [1.0])
    T = AtomSet.build(disk, [np.pi], [1.0])
    m = monge_map(solve_lp(S, T, _chord_cost(S, T)))
    assert len(m) == 1 and not m[0].multi_valued
    assert np.allclose(m[0].targets[0][1], [-1.0, 0.0])


def test_pushforward_conserves_mass(ellipse, rng):
    S, T = _random_atoms(ellipse, rng, 20, 30)
    plan = solve_noncrossing(S, T, _chord_cost(S, T))
    assert np.allclose(pushforward(monge_map(plan), len(T)), T.mass, atol=1e-12)


def test_monge_map_converges_under_refinement(disk, bump):
    g = BoundaryDatum(disk, [Piece(0, TWO_PI, "sinusoid", {"amp": 1.0, "phase": 0.4})])
    fp, fm = split(tangential_derivative(g))
    S = discretize(fp, 16)
    disp = []
    prev = None
    for n in (32, 64, 128):
        T = discretize(fm, n)
        plan = solve_noncrossing(S, T, PairCost(bump, disk, S, T))
        a = np.zeros((len(S), 2))
        np.add.at(a, plan.src, plan.mass[:, None] * T.points[plan.dst])
        a /= S.mass[:, None]
        if prev is not None:
            disp.append(np.hypot(*(a - prev).T).max())
        prev = a
    assert disp[1] < disp[0]


def test_rays_single_pair_and_chords(ellipse, unit, rng):
    S = AtomSet.build(ellipse, [0.0], [1.0])
    T = AtomSet.build(ellipse, [np.pi], [1.0])
    rays = build_rays(solve_lp(S, T, _chord_cost(S, T)), unit, ellipse)
    assert len(rays) == 1
    assert np.allclose(rays.rays[0].geodesic.points[[0, -1]], [[1.25, 0], [-1.25, 0]], atol=1e-9)
    S, T = _random_atoms(ellipse, rng, 10, 10)
    for r in build_rays(solve_noncrossing(S, T, _chord_cost(S, T)), unit, ellipse):
        p = r.geodesic.points
        t = np.linspace(0, 1, len(p))[:, None]
        assert np.abs(p - ((1 - t) * p[0] + t * p[-1])).max() < 1e-6


def test_optimal_rays_do_not_cross(ellipse, bump, rng):
    S, T = _random_atoms(ellipse, rng, 20, 20)
    plan = solve_noncrossing(S, T, PairCost(bump, ellipse, S, T))
    assert interior_crossings(build_rays(plan, bump, ellipse), 2.5 / 256) == []


def test_crossing_detector_sees_a_crossing(disk, unit):
    # the anti-optimal pairing of two chords crosses at the center
    S = AtomSet.build(disk, [0.0, np.pi / 2], [1.0, 1.0])
    T = AtomSet.build(disk, [np.pi, 1.5 * np.pi], [1.0, 1.0])
    from geolgp.transport import TransportPlan

    bad = TransportPlan(S, T, np.array([0, 1]), np.array([0, 1]), np.ones(2), np.full(2, 2.0), "manual")
    found = interior_crossings(build_rays(bad, unit, disk), 0.01)
    assert len(found) == 1 and np.allclose(found[0][2], [0, 0], atol=1e-9)


def test_cost_scaling(disk, rng):
    S, T = _random_atoms(disk, rng, 8, 8)
    w = RadialBumpWeight(**BUMP)
    C1 = cost_matrix(w, disk, S, T)
    C3 = cost_matrix(w.scaled(3.0), disk, S, T)
    assert np.allclose(C3.entries, 3 * C1.entries, rtol=1e-12)
    p1, p3 = solve_noncrossing(S, T, C1), solve_noncrossing(S, T, C3)
    assert p1.pairs() == p3.pairs() and np.allclose(p1.mass, p3.mass)
    q1, q3 = potential_from_plan(solve_lp(S, T, C1), C1), potential_from_plan(solve_lp(S, T, C3), C3)
    assert np.allclose(q3.source_values, 3 * q1.source_values, rtol=1e-9, atol=1e-12)
