"""Recovering u from the flow and from the ray sweep."""
import numpy as np
import pytest

from geolgp.boundary import AtomSet, BoundaryDatum, Piece, indicator_arc
from geolgp.domain import TWO_PI, Circle
from geolgp.errors import CrossingRays, InvalidInput
from geolgp.grids import GridSpec, VectorGrid
from geolgp.metric import connect
from geolgp.pipeline import Instance, solve
from geolgp.reconstruct import flow_to_u, level_set_hausdorff, ray_sweep_u, w1p_norm, weighted_tv
from geolgp.transport import TransportPlan, build_rays, cost_matrix, solve_lp
from geolgp.weights import ConstantWeight, RadialBumpWeight

from conftest import BUMP


def _l1(a, b, mask, h):
    return float(np.sum(np.abs(a[mask] - b[mask])) * h * h)


@pytest.fixture(scope="module")
def jump128():
    dom = Circle(1.0)
    spec = GridSpec.covering(dom, n=128)
    return solve(Instance(dom, ConstantWeight(1.0), indicator_arc(dom, 0.0, np.pi)), spec, 1, 1)


def test_flow_to_u_recovers_half_disk_indicator(jump128):
    sol = jump128
    spec, h = sol.spec, sol.spec.h
    C = spec.centers()
    mask = sol.u_flow.mask
    exact = (C[..., 1] > 0).astype(float)
    assert _l1(sol.u_flow.u.values, exact, mask, h) <= 4 * h * 2.0
    assert np.all(np.isnan(sol.u_flow.u.values[~mask]))
    assert sol.u_flow.trace_l1 <= 4 * h * TWO_PI


def test_zero_flow_gives_constant(disk):
    spec = GridSpec.covering(disk, n=32)
    v = VectorGrid(spec, np.zeros(spec.shape + (2,)))
    g = BoundaryDatum(disk, [Piece(0, TWO_PI, "constant", {"value": 3.0})])
    u = flow_to_u(v, ConstantWeight(1.0), g, disk)
    assert np.allclose(u.values_inside(), 3.0, atol=1e-12)
    assert u.trace_l1 == pytest.approx(0.0, abs=1e-12)


def test_ray_sweep_of_jump_takes_two_values(jump128):
    sol = jump128
    vals = np.unique(np.round(sol.u_rays.values_inside(), 12))
    assert np.allclose(vals, [0.0, 1.0])
    C = sol.spec.centers()[sol.u_rays.mask]
    up = sol.u_rays.values_inside() == 1.0
    # cells on the chord itself count as inside the closed superlevel set
    assert np.all(C[up, 1] >= -1e-12) and np.all(C[~up, 1] < 0)


def test_level_line_follows_the_geodesic():
    dom = Circle(1.0)
    w = RadialBumpWeight(**BUMP)
    spec = GridSpec.covering(dom, n=128)
    sol = solve(Instance(dom, w, indicator_arc(dom, 0.0, np.pi)), spec, 1, 1)
    geo = connect(w, dom, np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
    assert np.abs(geo.points[:, 1]).max() > 2 * spec.h  # bent by the bump
    d = level_set_hausdorff(sol.u_flow, sol.plan, sol.rays, [0.5], dom, sol.u_rays.shift)
    assert d[0] <= 2 * spec.h


def test_ray_sweep_of_sine_is_the_height_function(disk, unit):
    # g = sin(theta) on the unit circle: u(x, y) = y; rays are horizontal chords
    g = BoundaryDatum(disk, [Piece(0, TWO_PI, "sinusoid", {"amp": 1.0})])
    for n, n_atoms in ((64, 32), (128, 64)):
        spec = GridSpec.covering(disk, n=n)
        sol = solve(Instance(disk, unit, g), spec, n_atoms, n_atoms, full_costs=False, potential=False)
        for r in sol.rays:
            p = r.geodesic.points
            assert np.ptp(p[:, 1]) <= 1e-9
        C = spec.centers()
        m = sol.u_rays.mask
        err = _l1(sol.u_rays.u.values, C[..., 1], m, spec.h)
        assert err <= 5 * spec.h


def test_ray_sweep_rejects_crossing_rays(disk, unit):
    S = AtomSet.build(disk, [0.0, np.pi / 2], [1.0, 1.0])
    T = AtomSet.build(disk, [np.pi, 1.5 * np.pi], [1.0, 1.0])
    bad = TransportPlan(S, T, np.array([0, 1]), np.array([0, 1]), np.ones(2), np.full(2, 2.0), "manual",
                        levels=[(0.0, 1.0, [(0, 0)]), (1.0, 2.0, [(1, 1)])])
    g = indicator_arc(disk, 0.0, np.pi)
    with pytest.raises(CrossingRays):
        ray_sweep_u(bad, build_rays(bad, unit, disk), g, disk, GridSpec.covering(disk, n=32))
    lp = solve_lp(S, T, cost_matrix(unit, disk, S, T))
    with pytest.raises(InvalidInput):
        ray_sweep_u(lp, build_rays(lp, unit, disk), g, disk, GridSpec.covering(disk, n=32))


def test_w1p_norm_of_the_jump(jump128):
    sol = jump128
    # |Du| = sigma / k integrates to the chord length; ||u||_1 is the half disk
    w = sol.instance.weight
    assert w1p_norm(sol.u_rays.u, sol.sigma, w, 1) == pytest.approx(np.pi / 2 + 2.0, abs=1e-2 + 4 * sol.spec.h)
    grad_only = w1p_norm(sol.u_rays.u, sol.sigma, w, 1) - np.nansum(np.abs(sol.u_rays.u.values)) * sol.spec.h ** 2
    assert grad_only == pytest.approx(2.0, abs=1e-2)


def test_weighted_tv_bounded_by_cost(disk):
    w = RadialBumpWeight(**BUMP)
    g = BoundaryDatum(disk, [Piece(0, TWO_PI, "sinusoid", {"amp": 1.0, "phase": 0.4})])
    spec = GridSpec.covering(disk, n=128)
    sol = solve(Instance(disk, w, g), spec, 32, 32, potential=False)
    tv = weighted_tv(sol.u_flow.u, w, sol.u_flow.mask)
    cost = sol.plan.total_cost
    assert tv <= cost * (1 + 0.05)
    assert tv >= cost * 0.8
    # the two reconstructions agree in L1
    osc = float(np.ptp(sol.u_rays.values_inside()))
    area = sol.u_flow.mask.sum() * spec.h ** 2
    assert _l1(sol.u_flow.u.values, sol.u_rays.u.values, sol.u_flow.mask, spec.h) <= 5 * spec.h * osc * area


def test_scaling_leaves_u_unchanged(disk):
    g = BoundaryDatum(disk, [Piece(0, TWO_PI, "sinusoid", {"amp": 1.0, "phase": 0.4})])
    w = RadialBumpWeight(**BUMP)
    spec = GridSpec.covering(disk, n=64)
    a = solve(Instance(disk, w, g), spec, 16, 16, potential=False)
    b = solve(Instance(disk, w.scaled(3.0), g), spec, 16, 16, potential=False)
    m = a.u_flow.mask
    assert np.allclose(a.u_flow.u.values[m], b.u_flow.u.values[m], atol=1e-9)
    assert np.allclose(b.sigma.values, 3 * a.sigma.values, rtol=1e-9, atol=1e-12)
    assert np.array_equal(a.u_rays.u.values[m], b.u_rays.u.values[m])
