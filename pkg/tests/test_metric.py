"""Geodesics, distances, eikonal fields and the geodesic fan Jacobian."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geolgp.domain import TWO_PI, Box, Ellipse
from geolgp.errors import DomainError
from geolgp.grids import GridSpec
from geolgp.metric import (boundary_geodesics, boundary_pair_lengths, connect, dijkstra_distance, distance,
                           distance_field, jacobian_fan, shoot)
from geolgp.weights import ConstantWeight, RadialBumpWeight

from conftest import BUMP

# weighted length of the segment (-1,0)-(1,0) under 1 + 0.5 exp(-|x|^2/0.4):
# 2 + 0.5 sqrt(0.4 pi) erf(1/sqrt(0.4))
CENTERED = RadialBumpWeight(1.0, 0.5, (0.0, 0.0), 0.4)
CENTERED_CHORD = 2 + 0.5 * math.sqrt(0.4 * math.pi) * math.erf(1 / math.sqrt(0.4))

# the narrow strong bump: minimizers detour around it.  Oracle: grid Dijkstra
# with a radius-6 stencil on a 192 grid (overestimates by the stencil's
# angular error, about 4e-4 relative here)
NARROW = RadialBumpWeight(1.0, 4.0, (0.0, 0.0), 0.1)
NARROW_DIJKSTRA = 2.5073723731519557


def _hausdorff(a, b):
    from scipy.spatial import cKDTree

    return max(cKDTree(b).query(a)[0].max(), cKDTree(a).query(b)[0].max())


# -- shooting ---------------------------------------------------------------------

def test_shoot_euclidean_diameter(disk, unit):
    g = shoot(unit, disk, [-1, 0], [1, 0])
    assert g.weighted_length == pytest.approx(2.0, abs=1e-9)
    assert np.allclose(g.points[-1], [1, 0], atol=1e-9)
    assert np.abs(g.points[:, 1]).max() < 1e-12


def test_shoot_constant_scaling(disk):
    x = np.array([0.2, -0.3])
    d = np.array([0.6, 0.8])
    g1 = shoot(ConstantWeight(1.0), disk, x, d)
    g3 = shoot(ConstantWeight(3.0), disk, x, d)
    assert np.allclose(g1.points, g3.points, atol=1e-12)
    assert g3.weighted_length == pytest.approx(3 * g1.weighted_length, rel=1e-12)


def test_shoot_through_bump_matches_analytic_and_dijkstra(disk):
    g = shoot(CENTERED, disk, [-1, 0], [1, 0])
    assert g.weighted_length == pytest.approx(CENTERED_CHORD, rel=1e-7)
    L, path = dijkstra_distance(CENTERED, disk, np.array([-1.0, 0.0]), np.array([1.0, 0.0]),
                                n=128, radius=3, return_path=True)
    assert L == pytest.approx(CENTERED_CHORD, rel=1e-6)
    h = 2.0 / 128
    assert _hausdorff(g.points, path) <= 2 * h


def test_geodesic_reversal(disk, bump):
    g = boundary_geodesics(bump, disk, [0.3], [2.9])[0]
    r = boundary_geodesics(bump, disk, [2.9], [0.3])[0]
    assert r.weighted_length == pytest.approx(g.weighted_length, rel=1e-9)
    assert np.allclose(g.reversed().points, r.points, atol=1e-6)


# -- connect and distance -------------------------------------------------------------

def test_connect_trivial_cases(disk, unit):
    g = connect(unit, disk, np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
    assert g.weighted_length == pytest.approx(2.0, abs=1e-12)
    z = connect(unit, disk, np.array([0.2, 0.1]), np.array([0.2, 0.1]))
    assert z.weighted_length == 0.0
    with pytest.raises(DomainError):
        connect(unit, disk, np.array([2.0, 0.0]), np.array([0.0, 0.0]))


def test_connect_detours_around_narrow_bump(disk):
    g = connect(NARROW, disk, np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
    assert g.weighted_length == pytest.approx(NARROW_DIJKSTRA, rel=0.01)
    assert np.abs(g.points[:, 1]).max() > 0.3  # it goes around, not through
    assert np.all(disk.level(g.points) <= 1e-9)
    # the sampled curve really has the reported weighted length
    assert g.polyline_length(NARROW) == pytest.approx(g.weighted_length, rel=1e-3)


def test_dijkstra_oracle_reproduces_frozen_value(disk):
    L = dijkstra_distance(NARROW, disk, np.array([1.0, 0.0]), np.array([-1.0, 0.0]), n=192, radius=6)
    assert L == pytest.approx(NARROW_DIJKSTRA, rel=1e-9)


def test_distance_in_box():
    box = Box(-1, 4, -1, 5)
    assert distance(ConstantWeight(1.0), box, np.array([0.0, 0.0]), np.array([3.0, 4.0])) == pytest.approx(5.0)
    assert distance(ConstantWeight(2.0), box, np.array([0.0, 0.0]), np.array([3.0, 4.0])) == pytest.approx(10.0)


def test_interior_connect_matches_dijkstra(disk, bump):
    x, y = np.array([-0.5, -0.4]), np.array([0.6, 0.5])
    g = connect(bump, disk, x, y)
    L = dijkstra_distance(bump, disk, x, y, n=160, radius=6)
    assert g.weighted_length <= L * (1 + 1e-9)
    assert g.weighted_length == pytest.approx(L, rel=2e-3)
    assert np.allclose(g.points[0], x) and np.allclose(g.points[-1], y, atol=1e-6)


boundary_angles = st.floats(0.0, TWO_PI - 1e-3)


@settings(max_examples=15)
@given(st.lists(boundary_angles, min_size=3, max_size=3, unique=True))
def test_boundary_metric_axioms(th):
    dom = Ellipse(1.25, 0.8)
    w = RadialBumpWeight(**BUMP)
    a, b, c = th
    if min(abs(a - b), abs(b - c), abs(a - c)) < 1e-2:
        return
    d = boundary_pair_lengths(w, dom, [a, b, a, b, a], [b, a, c, c, c])
    ab, ba, ac, bc = d[0], d[1], d[2], d[3]
    assert ab == pytest.approx(ba, rel=1e-8)
    assert ac <= ab + bc + 1e-9
    pa, pb = dom.point(a), dom.point(b)
    eu = float(np.hypot(*(pa - pb)))
    assert w.k_min * eu <= ab + 1e-12
    assert ab <= w.k_max * eu + 1e-12  # the chord is admissible on a convex domain


@settings(max_examples=15)
@given(boundary_angles, boundary_angles)
def test_euclidean_connect_is_a_chord(a, b):
    dom = Ellipse(1.25, 0.8)
    if abs(a - b) < 1e-2:
        return
    g = boundary_geodesics(ConstantWeight(1.0), dom, [a], [b])[0]
    pa, pb = dom.point(a), dom.point(b)
    t = np.linspace(0, 1, len(g.points))[:, None]
    assert np.abs(g.points - ((1 - t) * pa + t * pb)).max() < 1e-6
    assert g.weighted_length == pytest.approx(np.hypot(*(pa - pb)), rel=1e-9)


# -- eikonal fields -----------------------------------------------------------------

def test_distance_field_euclidean(disk, unit):
    spec = GridSpec.covering(disk, n=64)
    y = np.array([0.0, 0.0])
    F = distance_field(unit, disk, y, spec)
    C = spec.centers()
    assert np.abs(F.values - np.hypot(C[..., 0], C[..., 1])).max() <= spec.h
    assert F.sample(y) == pytest.approx(0.0, abs=spec.h)


def test_distance_field_matches_pointwise_distance(disk, bump):
    spec = GridSpec.covering(disk, n=64)
    y = np.array([0.0, -1.0])
    F = distance_field(bump, disk, y, spec)
    assert F.sample(y) <= 2 * spec.h * bump.k_max
    assert np.all(F.values[spec.mask(disk)] >= 0)
    C = spec.centers()[spec.mask(disk)]
    pick = np.random.default_rng(7).choice(len(C), 20, replace=False)
    err = [abs(F.sample(p) - distance(bump, disk, p, y)) for p in C[pick]]
    assert max(err) <= 3 * spec.h * bump.k_max


# -- Jacobian of the geodesic fan --------------------------------------------------------

def test_euclidean_fan_is_a_cone(disk, unit):
    s = np.linspace(0.5, 5.5, 9)
    t = np.linspace(0.0, 0.9, 10)
    fan = jacobian_fan(unit, disk, s, 0.0, t)
    pred = fan.t0_prediction()
    assert np.allclose(fan.jacobian, (1 - t)[None, :] * pred[:, None], rtol=1e-4)
    # nu . n = tau / 2 on the unit circle (chord geometry)
    nun = np.sum(fan.initial_angles * fan.normals, axis=1)
    assert np.allclose(nun, fan.lengths / 2, atol=1e-9)


def test_bump_fan_positive_with_t0_identity(disk):
    w = RadialBumpWeight(1.0, -0.8, (0.0, 0.0), 0.3)  # k ratio 5
    s = np.linspace(0.6, 5.6, 8)
    t = np.linspace(0.0, 0.95, 12)
    fan = jacobian_fan(w, disk, s, 0.0, t)
    assert np.all(fan.jacobian > 0)
    assert np.allclose(fan.jacobian[:, 0], fan.t0_prediction(), rtol=1e-3)
