"""Recover u from the optimal flow and, independently, from the rays.

``flow_to_u`` integrates ``grad u = R(v / k)`` (rotation by -pi/2) in the
least-squares sense.  ``ray_sweep_u`` uses the level structure of the
non-crossing plan: for every level band, the superlevel set of u is the
region enclosed by the boundary arcs where g is above the level and the
rays matched in that band.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.spatial import cKDTree

from .domain import TWO_PI
from .errors import CrossingRays, InvalidInput, NoConvergence
from .grids import GridSpec, ScalarGrid
from .transport import RaySet, _level_bands, interior_crossings


@dataclass
class SolutionField:
    """Grid function u (NaN outside the domain) with its boundary trace."""

    u: ScalarGrid
    mask: np.ndarray
    trace_theta: np.ndarray
    trace_values: np.ndarray
    g_values: np.ndarray
    trace_l1: float
    shift: float = 0.0

    def values_inside(self):
        return self.u.values[self.mask]


def _trace_samples(domain, spec, n=None):
    per = domain.perimeter
    if n is None:
        n = max(256, int(np.ceil(4 * per / spec.h)))
    s = (np.arange(n) + 0.5) * per / n
    return domain.theta_at(s), per / n


def _trace(u, mask, domain, spec, theta):
    """u at the nearest inside cell to points one cell inward of the boundary."""
    C = spec.centers()[mask]
    p = domain.point(theta) + spec.h * domain.inward_normal(theta)
    _, idx = cKDTree(C).query(p)
    return u[mask][idx]


def _finish(u, mask, g, domain, spec):
    theta, ds = _trace_samples(domain, spec)
    gv = g.value(theta)
    tr = _trace(u, mask, domain, spec, theta)
    shift = float(np.mean(gv) - np.mean(tr))
    u = np.where(mask, u + shift, np.nan)
    tr = tr + shift
    l1 = float(np.sum(np.abs(tr - gv)) * ds)
    return SolutionField(ScalarGrid(spec, u), mask, theta, tr, gv, l1, shift)


def flow_to_u(v, w, g, domain) -> SolutionField:
    """Least-squares u with grad u = R_{-pi/2}(v / k) on the cells inside.

    The additive constant is fixed so that the mean of the boundary trace
    equals the mean of g.
    """
    spec = v.spec
    mask = spec.mask(domain)
    C = spec.centers()
    q = np.zeros(spec.shape + (2,))
    kv = w.value(C[mask])
    q[mask, 0] = v.values[mask, 1] / kv
    q[mask, 1] = -v.values[mask, 0] / kv
    ids = -np.ones(spec.shape, dtype=np.int64)
    n = int(mask.sum())
    if n == 0:
        raise InvalidInput("no grid cell lies inside the domain")
    ids[mask] = np.arange(n)
    rows, cols, vals, rhs = [], [], [], []
    e = 0
    h = spec.h
    for axis, comp in ((1, 0), (0, 1)):
        a = ids
        if axis == 1:
            A, B = a[:, :-1], a[:, 1:]
            qa, qb = q[:, :-1, comp], q[:, 1:, comp]
        else:
            A, B = a[:-1, :], a[1:, :]
            qa, qb = q[:-1, :, comp], q[1:, :, comp]
        ok = (A >= 0) & (B >= 0)
        ia, ib = A[ok], B[ok]
        m = ia.size
        r = np.arange(e, e + m)
        rows += [r, r]
        cols += [ib, ia]
        vals += [np.ones(m), -np.ones(m)]
        rhs.append(0.5 * h * (qa[ok] + qb[ok]))
        e += m
    D = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(e, n))
    d = np.concatenate(rhs) if rhs else np.zeros(0)
    # pin the first unknown of each connected component
    from scipy.sparse.csgraph import connected_components

    L = (D.T @ D).tocsr()
    ncomp, lab = connected_components(abs(L) > 0, directed=False)
    pins = np.array([np.flatnonzero(lab == c)[0] for c in range(ncomp)])
    keep = np.setdiff1d(np.arange(n), pins)
    b = D.T @ d
    sol = np.zeros(n)
    if keep.size:
        Lk = L[keep][:, keep].tocsc()
        x = spsolve(Lk, b[keep])
        if not np.all(np.isfinite(x)):
            raise NoConvergence("Poisson solve failed")
        sol[keep] = x
    u = np.zeros(spec.shape)
    u[mask] = sol
    return _finish(u, mask, g, domain, spec)


def _arc_points(domain, a, b, step):
    """Boundary points from parameter a counterclockwise to b."""
    per = domain.perimeter
    la = float(domain.arclength(np.mod(a, TWO_PI)))
    span = float(np.mod(domain.arclength(np.mod(b, TWO_PI)) - la, per))
    n = max(2, int(np.ceil(span / step)) + 1)
    s = la + np.linspace(0.0, span, n)
    return domain.point(domain.theta_at(np.mod(s, per))).reshape(-1, 2)


def superlevel_polygons(plan, rays, level, domain, step, bands=None):
    """Polygons of {u >= t} for one level band of a non-crossing plan."""
    if bands is None:
        bands = _level_bands(plan.sources, plan.targets)
    V, G, Gprev, kind, idx, th = bands
    t = level
    cross = np.flatnonzero(((Gprev < t) & (G > t)) | ((G < t) & (Gprev > t)))
    if cross.size == 0:
        return []
    lut = rays.lookup() if isinstance(rays, RaySet) else rays
    band = None
    for lo, hi, pairs in plan.levels:
        if lo < t < hi:
            band = pairs
            break
    if band is None:
        return []
    tgt_to_src = {d: s for s, d in band}
    pos_src = {int(idx[c]): int(c) for c in cross if kind[c] == 0}
    seq = list(cross)
    nxt = {}
    for a_i, c in enumerate(seq):
        nxt[c] = seq[(a_i + 1) % len(seq)]
    polys = []
    seen = set()
    for c0 in seq:
        if kind[c0] != 0 or c0 in seen:
            continue
        ring = []
        c = c0
        for _ in range(len(seq) + 1):
            seen.add(c)
            d = nxt[c]  # next crossing ccw is a down crossing
            ring.append(_arc_points(domain, th[c], th[d], step))
            s_idx = tgt_to_src[int(idx[d])]
            r = lut.get((s_idx, int(idx[d])))
            if r is not None and r.geodesic.weighted_length > 0:
                ring.append(r.geodesic.points[::-1])
            c = pos_src[s_idx]
            if c == c0:
                break
        pts = np.concatenate(ring)
        if len(pts) >= 3:
            polys.append(pts)
    return polys


def ray_sweep_u(plan, rays, g, domain, spec: GridSpec, check_crossings=True) -> SolutionField:
    """u from nested superlevel sets bounded by transport rays.

    u(z) is the lowest cumulative level plus the widths of all level bands
    whose superlevel region contains z; the constant is then matched to g
    in mean along the boundary.  Points on a ray get the upper value.

    Raises
    ------
    CrossingRays
        When two rays cross at an interior point.
    """
    import shapely

    if plan.levels is None:
        raise InvalidInput("ray sweep needs a plan from solve_noncrossing")
    if check_crossings:
        bad = interior_crossings(rays, spec.h)
        if bad:
            raise CrossingRays(f"{len(bad)} pairs of rays cross in the interior")
    mask = spec.mask(domain)
    C = spec.centers()[mask]
    bands = _level_bands(plan.sources, plan.targets)
    V = bands[0]
    acc = np.full(len(C), V[0] if V.size else 0.0)
    lut = rays.lookup()
    for lo, hi, _ in plan.levels:
        inside = np.zeros(len(C), dtype=bool)
        for poly in superlevel_polygons(plan, lut, 0.5 * (lo + hi), domain, spec.h, bands):
            P = shapely.Polygon(poly)
            if not P.is_valid:
                P = P.buffer(0)
            shapely.prepare(P)
            # closed region: cells centered on a ray count as inside
            inside |= shapely.intersects_xy(P, C[:, 0], C[:, 1])
        acc[inside] += hi - lo
    u = np.zeros(spec.shape)
    u[mask] = acc
    return _finish(u, mask, g, domain, spec)


def w1p_norm(u: ScalarGrid, sigma: ScalarGrid, w, p, mask=None):
    """||u||_p + ||sigma / k||_p, using |Du| = sigma / k for the gradient part."""
    if not p >= 1:
        raise ValueError("p must be >= 1")
    spec = u.spec
    if mask is None:
        mask = np.isfinite(u.values)
    uv = np.abs(u.values[mask])
    gv = sigma.values / w.value(spec.centers())
    gv = np.abs(gv[np.isfinite(gv)])
    area = spec.h ** 2
    if np.isinf(p):
        return float(uv.max(initial=0.0) + gv.max(initial=0.0))
    return float((np.sum(uv ** p) * area) ** (1 / p) + (np.sum(gv ** p) * area) ** (1 / p))


def weighted_tv(u: ScalarGrid, w, mask):
    """Discrete int k |grad u| from forward differences inside the mask."""
    spec = u.spec
    v = u.values
    gx = np.zeros(spec.shape)
    gy = np.zeros(spec.shape)
    okx = mask[:, :-1] & mask[:, 1:]
    oky = mask[:-1, :] & mask[1:, :]
    gx[:, :-1] = np.where(okx, v[:, 1:] - v[:, :-1], 0.0) if v.shape[1] > 1 else 0.0
    gy[:-1, :] = np.where(oky, v[1:, :] - v[:-1, :], 0.0) if v.shape[0] > 1 else 0.0
    kv = w.value(spec.centers())
    return float(np.sum(kv * np.hypot(gx, gy)) * spec.h)


def _densify(polylines, step):
    out = []
    for p in polylines:
        if len(p) < 2:
            out.append(p)
            continue
        seg = np.hypot(*np.diff(p, axis=0).T)
        n = np.maximum(1, np.ceil(seg / step).astype(int))
        for a, b, k in zip(p[:-1], p[1:], n):
            f = np.arange(k)[:, None] / k
            out.append(a + f * (b - a))
        out.append(p[-1:])
    return np.concatenate(out) if out else np.zeros((0, 2))


def _contours(u: SolutionField, level):
    from skimage.measure import find_contours

    spec = u.u.spec
    field = np.where(u.mask, u.u.values, 0.0)
    out = []
    for c in find_contours(field, level, mask=u.mask):
        out.append(np.stack([spec.origin[0] + (c[:, 1] + 0.5) * spec.h,
                             spec.origin[1] + (c[:, 0] + 0.5) * spec.h], axis=1))
    return out


def contour_distance(u: SolutionField, rays, levels):
    """Largest distance from a marching-squares contour of u to the rays.

    Returns one value per level (in length units; NaN when the level has
    no contour).
    """
    spec = u.u.spec
    pts = [r.geodesic.points for r in rays if r.geodesic.weighted_length > 0]
    if not pts:
        return np.full(len(levels), np.nan)
    tree = cKDTree(_densify(pts, 0.25 * spec.h))
    out = []
    for t in levels:
        cs = _contours(u, t)
        out.append(float(tree.query(np.concatenate(cs))[0].max()) if cs else np.nan)
    return np.array(out)


def level_set_hausdorff(u: SolutionField, plan, rays, levels, domain, level_shift=0.0, margin=None):
    """Symmetric distance between contours of u and the rays of each level band.

    ``levels`` are values of u; ``level_shift`` converts them to values of
    the cumulative boundary mass of the plan (u = G + shift), which picks
    the band and hence the rays bounding the superlevel set.  Ray points
    closer than ``margin`` (default ``2 h``) to the boundary are skipped in
    the ray-to-contour direction, since contours stop at the last cell.

    Returns
    -------
    ndarray
        One distance per level, NaN when the level misses every band or
        has no contour.
    """
    if plan.levels is None:
        raise InvalidInput("level bands need a plan from solve_noncrossing")
    spec = u.u.spec
    h = spec.h
    margin = 2 * h if margin is None else margin
    lut = rays.lookup() if isinstance(rays, RaySet) else rays
    out = []
    for t in levels:
        tg = t - level_shift
        pairs = next((p for lo, hi, p in plan.levels if lo < tg < hi), None)
        cs = _contours(u, t)
        if pairs is None or not cs:
            out.append(np.nan)
            continue
        rp = [lut[sd].geodesic.points for sd in pairs if sd in lut and lut[sd].geodesic.weighted_length > 0]
        if not rp:
            out.append(np.nan)
            continue
        R = _densify(rp, 0.25 * h)
        C = _densify(cs, 0.25 * h)
        d1 = cKDTree(R).query(C)[0].max()
        R_in = R[domain.boundary_distance(R) >= margin]
        d2 = cKDTree(C).query(R_in)[0].max() if len(R_in) else 0.0
        out.append(float(max(d1, d2)))
    return np.array(out)
