"""Boundary-to-boundary optimal transport with geodesic cost.

Sources and targets are :class:`~geolgp.boundary.AtomSet` objects on the
domain boundary.  Two exact solvers are provided:

* :func:`solve_lp` solves the discrete Kantorovich linear program with
  HiGHS and keeps the dual variables.
* :func:`solve_noncrossing` uses the planar structure instead: writing
  ``G`` for the cumulative signed mass along the boundary, every level
  ``t`` of ``G`` is crossed upward at source atoms and downward at target
  atoms, and the optimal plan matches those crossings by a minimum-cost
  non-crossing matching, level by level.  Only the costs of pairs that
  can actually appear are evaluated.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .boundary import AtomSet
from .errors import DualityGapError, InvalidInput
from .grids import GridSpec, ScalarGrid
from .metric import N_POINTS, Geodesic, boundary_geodesics, boundary_pair_lengths, distance_field
from .parallel import map_chunks

BALANCE_TOL = 1e-9
GAP_TOL = 1e-6


# -- costs -------------------------------------------------------------------

@dataclass
class CostMatrix:
    """Geodesic distances ``entries[i, j] = d_k(sources[i], targets[j])``."""

    entries: np.ndarray
    sources: AtomSet
    targets: AtomSet

    def __call__(self, i, j):
        return self.entries[np.asarray(i), np.asarray(j)]

    def scaled(self, c):
        return CostMatrix(self.entries * c, self.sources, self.targets)


def cost_matrix(w, domain, sources: AtomSet, targets: AtomSet, mode="direct", **kw) -> CostMatrix:
    """All source-target geodesic distances by boundary shooting."""
    I, J = np.meshgrid(np.arange(len(sources)), np.arange(len(targets)), indexing="ij")
    L = boundary_pair_lengths(w, domain, sources.theta[I.ravel()], targets.theta[J.ravel()], mode, **kw)
    return CostMatrix(L.reshape(I.shape), sources, targets)


class PairCost:
    """Lazily evaluated geodesic costs, cached per (source, target) pair.

    Used by :func:`solve_noncrossing` when the full matrix would be too
    expensive (thousands of atoms).
    """

    def __init__(self, w, domain, sources: AtomSet, targets: AtomSet, mode="direct", **kw):
        self.w, self.domain = w, domain
        self.sources, self.targets = sources, targets
        self.mode, self.kw = mode, kw
        self._cache = {}

    def prefetch(self, pairs):
        todo = sorted({p for p in pairs if p not in self._cache})
        if not todo:
            return
        P = np.array(todo, dtype=np.int64)
        L = boundary_pair_lengths(self.w, self.domain, self.sources.theta[P[:, 0]],
                                  self.targets.theta[P[:, 1]], self.mode, **self.kw)
        self._cache.update(zip(todo, L.tolist()))

    def __call__(self, i, j):
        i = np.atleast_1d(i)
        j = np.atleast_1d(j)
        self.prefetch(zip(i.tolist(), j.tolist()))
        return np.array([self._cache[(a, b)] for a, b in zip(i.tolist(), j.tolist())])


# -- plans ---------------------------------------------------------------------

@dataclass
class TransportPlan:
    """Sparse transport plan.

    ``src[f], dst[f], mass[f]`` describe flow ``f``; ``cost[f]`` is the
    geodesic distance of that pair.  ``levels`` (non-crossing solver only)
    lists ``(t_lo, t_hi, pairs)`` for each level band of the cumulative
    boundary mass, where ``pairs`` are the (source, target) indices matched
    in that band.
    """

    sources: AtomSet
    targets: AtomSet
    src: np.ndarray
    dst: np.ndarray
    mass: np.ndarray
    cost: np.ndarray
    method: str
    duals: tuple | None = None
    levels: list | None = None

    @property
    def total_cost(self):
        return float(np.dot(self.mass, self.cost))

    @property
    def flows(self):
        return [(int(i), int(j), float(m)) for i, j, m in zip(self.src, self.dst, self.mass)]

    def pairs(self):
        return set(zip(self.src.tolist(), self.dst.tolist()))

    def marginals(self):
        a = np.bincount(self.src, self.mass, minlength=len(self.sources))
        b = np.bincount(self.dst, self.mass, minlength=len(self.targets))
        return a, b

    def dense(self):
        out = np.zeros((len(self.sources), len(self.targets)))
        np.add.at(out, (self.src, self.dst), self.mass)
        return out

    def to_json(self):
        rows = [{"src": self.sources.points[i].tolist(), "dst": self.targets.points[j].tolist(),
                 "mass": float(m), "cost": float(c)}
                for i, j, m, c in zip(self.src, self.dst, self.mass, self.cost)]
        return json.dumps(rows, indent=1)


def _check_balance(sources, targets):
    a, b = sources.total_mass, targets.total_mass
    if abs(a - b) > BALANCE_TOL * max(1.0, a, b):
        raise InvalidInput(f"unbalanced masses: sources {a:.12g}, targets {b:.12g}")


def solve_lp(sources: AtomSet, targets: AtomSet, cost: CostMatrix) -> TransportPlan:
    """Exact optimum of the discrete Kantorovich problem.

    Solved by the HiGHS dual simplex, which returns a vertex solution and
    exact duals ``u, v`` with ``u_i + v_j <= c_ij``.  The solver is
    deterministic for a given input.
    """
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix

    _check_balance(sources, targets)
    C = np.asarray(cost.entries, dtype=float)
    n, m = C.shape
    if (n, m) != (len(sources), len(targets)):
        raise InvalidInput("cost matrix does not match the atom sets")
    if n == 0 or m == 0:
        z = np.zeros(0, dtype=np.int64)
        return TransportPlan(sources, targets, z, z, np.zeros(0), np.zeros(0), "lp", (np.zeros(n), np.zeros(m)))
    k = np.arange(n * m)
    rows = np.concatenate([k // m, n + k % m])
    A = coo_matrix((np.ones(2 * n * m), (rows, np.concatenate([k, k]))), shape=(n + m, n * m)).tocsr()
    b = np.concatenate([sources.mass, targets.mass])
    # the last target absorbs any rounding imbalance so the system is consistent
    b[-1] += sources.mass.sum() - targets.mass.sum()
    # tight tolerances: the defaults (1e-7) leave plans suboptimal at the 1e-9 level
    res = linprog(C.ravel(), A_eq=A, b_eq=b, bounds=(0, None), method="highs-ds",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise InvalidInput(f"transport LP failed: {res.message}")
    x = res.x.reshape(n, m)
    dual = res.eqlin.marginals
    u, v = dual[:n], dual[n:]
    I, J = np.nonzero(x > 1e-15 * max(1.0, b.max()))
    plan = TransportPlan(sources, targets, I, J, x[I, J], C[I, J], "lp", (u, v))
    return plan


def _min_noncrossing_matching(seq_cost):
    """Minimum-cost non-crossing perfect matching of points in cyclic order.

    ``seq_cost[a, b]`` is the cost of matching points ``a < b`` of the
    sequence (only odd gaps are used).  Returns the list of index pairs.
    Ties go to the smallest partner index.
    """
    n = seq_cost.shape[0]
    M = np.zeros((n + 2, n + 2))
    choice = np.zeros((n + 1, n + 1), dtype=np.int64)
    # M[i, j] for the block i..j-1 (half-open), M[i, i] = 0
    for span in range(2, n + 1, 2):
        for i in range(0, n - span + 1):
            j = i + span
            ks = np.arange(i + 1, j, 2)
            vals = seq_cost[i, ks] + M[i + 1, ks] + M[ks + 1, j]
            best = int(np.argmin(vals))
            M[i, j] = vals[best]
            choice[i, j] = ks[best]
    pairs = []
    stack = [(0, n)]
    while stack:
        i, j = stack.pop()
        if j <= i:
            continue
        k = choice[i, j]
        pairs.append((i, int(k)))
        stack.append((i + 1, k))
        stack.append((k + 1, j))
    return sorted(pairs)


def _level_bands(sources, targets):
    """Signed boundary sequence and the level bands of its cumulative mass."""
    th = np.concatenate([sources.theta, targets.theta])
    sm = np.concatenate([sources.mass, -targets.mass])
    kind = np.concatenate([np.zeros(len(sources), dtype=np.int64), np.ones(len(targets), dtype=np.int64)])
    idx = np.concatenate([np.arange(len(sources)), np.arange(len(targets))])
    order = np.lexsort((kind, th))
    th, sm, kind, idx = th[order], sm[order], kind[order], idx[order]
    G = np.cumsum(sm)
    scale = max(sources.total_mass, 1e-300)
    tol = 1e-13 * scale
    G[np.abs(G) <= tol] = 0.0
    vals = np.unique(np.concatenate([[0.0], G]))
    merged = [vals[0]]
    for v in vals[1:]:
        if v - merged[-1] > tol:
            merged.append(v)
    V = np.array(merged)
    Gprev = np.concatenate([[G[-1]], G[:-1]])
    return V, G, Gprev, kind, idx, th


def solve_noncrossing(sources: AtomSet, targets: AtomSet, cost, certificate=None) -> TransportPlan:
    """Optimal plan with pairwise non-crossing rays.

    Parameters
    ----------
    cost : CostMatrix or PairCost or callable
        ``cost(i, j)`` returns geodesic distances for index arrays.
    certificate : ConvexityReport, optional
        When given and failed, the solver warns and falls back to
        :func:`solve_lp` (which needs a full :class:`CostMatrix`).

    Notes
    -----
    For each band ``(V_k, V_k+1)`` of values of the cumulative signed mass
    the atoms where the cumulative mass crosses the band alternate between
    sources and targets around the boundary.  They are matched by a
    minimum-cost non-crossing matching (interval dynamic programming,
    trivial when there is a single pair), and the band width is added to
    each matched pair.  Band matchings are optimal for every level at
    once, so their sum is an optimal plan when geodesics are unique and
    the domain is geodesically convex.
    """
    if certificate is not None and not certificate.passed:
        warnings.warn("convexity certificate failed; using the linear program instead", RuntimeWarning)
        if not isinstance(cost, CostMatrix):
            raise InvalidInput("LP fallback needs a full CostMatrix")
        return solve_lp(sources, targets, cost)
    _check_balance(sources, targets)
    V, G, Gprev, kind, idx, _ = _level_bands(sources, targets)
    bands = []
    for lo, hi in zip(V[:-1], V[1:]):
        t = 0.5 * (lo + hi)
        cross = np.flatnonzero(((Gprev < t) & (G > t)) | ((G < t) & (Gprev > t)))
        if cross.size == 0:
            continue
        if cross.size % 2 or np.any(kind[cross][G[cross] > t] != 0) or np.any(kind[cross][G[cross] < t] != 1):
            raise InvalidInput("inconsistent level crossings (unbalanced input?)")
        bands.append((float(lo), float(hi), cross))
    # fetch every cost the matchings can need in one batch
    need = set()
    for _, _, cross in bands:
        seq_kind, seq_idx = kind[cross], idx[cross]
        n = len(cross)
        if n == 2:
            a, b = (0, 1) if seq_kind[0] == 0 else (1, 0)
            need.add((int(seq_idx[a]), int(seq_idx[b])))
        else:
            for a in range(n):
                for b in range(a + 1, n, 2):
                    s, d = (a, b) if seq_kind[a] == 0 else (b, a)
                    need.add((int(seq_idx[s]), int(seq_idx[d])))
    need = sorted(need)
    if hasattr(cost, "prefetch"):
        cost.prefetch(need)
    lookup = {}
    if need:
        N = np.array(need, dtype=np.int64)
        lookup = dict(zip(need, np.asarray(cost(N[:, 0], N[:, 1]), dtype=float).tolist()))
    flows = {}
    levels = []
    memo = {}
    for lo, hi, cross in bands:
        key = tuple(cross.tolist())
        if key not in memo:
            seq_kind, seq_idx = kind[cross], idx[cross]
            n = len(cross)
            C = np.full((n, n), np.inf)
            for a in range(n):
                for b in range(a + 1, n, 2):
                    s, d = (a, b) if seq_kind[a] == 0 else (b, a)
                    c = lookup.get((int(seq_idx[s]), int(seq_idx[d])))
                    if c is not None:
                        C[a, b] = c
            match = _min_noncrossing_matching(C)
            pairs = []
            for a, b in match:
                s, d = (a, b) if seq_kind[a] == 0 else (b, a)
                pairs.append((int(seq_idx[s]), int(seq_idx[d])))
            memo[key] = sorted(pairs)
        pairs = memo[key]
        levels.append((lo, hi, pairs))
        for p in pairs:
            flows[p] = flows.get(p, 0.0) + (hi - lo)
    keys = sorted(flows)
    src = np.array([k[0] for k in keys], dtype=np.int64)
    dst = np.array([k[1] for k in keys], dtype=np.int64)
    mass = np.array([flows[k] for k in keys])
    cst = np.array([lookup[k] for k in keys])
    return TransportPlan(sources, targets, src, dst, mass, cst, "noncrossing", None, levels)


def random_feasible_plan(sources: AtomSet, targets: AtomSet, rng):
    """Northwest-corner plan for randomly permuted atoms (a feasible vertex)."""
    a = sources.mass.copy()
    b = targets.mass.copy()
    pi = rng.permutation(len(a))
    pj = rng.permutation(len(b))
    X = np.zeros((len(a), len(b)))
    i = j = 0
    while i < len(a) and j < len(b):
        q = min(a[pi[i]], b[pj[j]])
        X[pi[i], pj[j]] += q
        a[pi[i]] -= q
        b[pj[j]] -= q
        if a[pi[i]] <= 1e-15:
            i += 1
        else:
            j += 1
    return X


# -- potential ------------------------------------------------------------------

@dataclass
class Potential:
    """Kantorovich potential: atom values and an optional grid extension."""

    source_values: np.ndarray
    target_values: np.ndarray
    gap: float
    dual_value: float
    grid: ScalarGrid | None = None
    targets: AtomSet | None = None

    def on_boundary(self, w, domain, theta, mode="direct"):
        """c-transform ``min_j psi(y_j) + d_k(z, y_j)`` at boundary points."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        T = self.targets
        A, B = np.meshgrid(theta, T.theta, indexing="ij")
        D = boundary_pair_lengths(w, domain, A.ravel(), B.ravel(), mode).reshape(A.shape)
        return np.min(self.target_values[None, :] + D, axis=1)


def potential_from_plan(plan: TransportPlan, cost: CostMatrix, w=None, domain=None,
                        spec: GridSpec | None = None, gap_tol=GAP_TOL) -> Potential:
    """Dual potential of an optimal plan, optionally extended to a grid.

    Atom values come from exact LP duals (computed here when the plan has
    none).  With ``spec`` the potential is extended to the cell centers by
    ``psi(z) = min_j psi(y_j) + D_j(z)`` using eikonal distance fields.

    Raises
    ------
    DualityGapError
        When ``|cost - dual value| > gap_tol * cost``.
    """
    duals = plan.duals
    if duals is None:
        duals = solve_lp(plan.sources, plan.targets, cost).duals
    u, v = duals
    psi_x = np.asarray(u, dtype=float).copy()
    psi_y = -np.asarray(v, dtype=float)
    shift = psi_y.min() if psi_y.size else 0.0
    psi_x -= shift
    psi_y -= shift
    dual = float(np.dot(psi_x, plan.sources.mass) - np.dot(psi_y, plan.targets.mass))
    total = plan.total_cost
    gap = total - dual
    if abs(gap) > gap_tol * max(abs(total), 1e-300) and total > 0:
        raise DualityGapError(f"duality gap {gap:.3e} exceeds tolerance", gap)
    pot = Potential(psi_x, psi_y, float(gap), dual, None, plan.targets)
    if spec is not None:
        pot.grid = potential_grid(psi_y, plan.targets, w, domain, spec)
    return pot


def potential_grid(psi_y, targets: AtomSet, w, domain, spec: GridSpec) -> ScalarGrid:
    """c-transform of target potentials over the grid cell centers."""
    psi_y = np.asarray(psi_y, dtype=float)

    def run(js):
        best = np.full(spec.shape, np.inf)
        for j in js:
            D = distance_field(w, domain, targets.points[j], spec).values
            np.minimum(best, psi_y[j] + D, out=best)
        return best

    js = np.arange(len(targets))
    parts = map_chunks(run, np.array_split(js, max(1, min(len(js), 8))))
    out = np.full(spec.shape, np.inf)
    for part in parts:
        np.minimum(out, part, out=out)
    return ScalarGrid(spec, out)


# -- Monge map and rays -----------------------------------------------------------

@dataclass
class MapEntry:
    source: int
    point: np.ndarray
    targets: list  # (target index, point, mass)

    @property
    def multi_valued(self):
        return len(self.targets) > 1


def monge_map(plan: TransportPlan):
    """Map table ``x_i -> T(x_i)``; entries split over targets are flagged."""
    out = []
    for i in range(len(plan.sources)):
        sel = np.flatnonzero(plan.src == i)
        tg = [(int(plan.dst[f]), plan.targets.points[plan.dst[f]].copy(), float(plan.mass[f])) for f in sel]
        out.append(MapEntry(i, plan.sources.points[i].copy(), tg))
    return out


def pushforward(entries, n_targets):
    b = np.zeros(n_targets)
    for e in entries:
        for j, _, m in e.targets:
            b[j] += m
    return b


@dataclass
class Ray:
    geodesic: Geodesic
    mass: float
    src: int
    dst: int


@dataclass
class RaySet:
    rays: list = field(default_factory=list)

    def __len__(self):
        return len(self.rays)

    def __iter__(self):
        return iter(self.rays)

    def lookup(self):
        return {(r.src, r.dst): r for r in self.rays}

    def to_json(self):
        data = {"rays": [{"src": r.src, "dst": r.dst, "mass": r.mass,
                          "length": r.geodesic.weighted_length,
                          "points": r.geodesic.points.tolist()} for r in self.rays]}
        return json.dumps(data)


def build_rays(plan: TransportPlan, w, domain, n_points=N_POINTS, mode="direct") -> RaySet:
    """One geodesic per flow of the plan, from source to target."""
    thx = plan.sources.theta[plan.src]
    thy = plan.targets.theta[plan.dst]
    geos = boundary_geodesics(w, domain, thx, thy, n_points=n_points, mode=mode)
    rays = [Ray(g, float(m), int(i), int(j)) for g, m, i, j in zip(geos, plan.mass, plan.src, plan.dst)]
    return RaySet(rays)


def interior_crossings(rays: RaySet, h):
    """Pairs of rays that cross away from their endpoints.

    Intersections within ``h`` of an endpoint of either ray are ignored
    (rays sharing an atom meet there).  Returns a list of ``(a, b, point)``.
    """
    import shapely

    R = [r for r in rays.rays if r.geodesic.weighted_length > 0]
    if len(R) < 2:
        return []
    lines = shapely.linestrings([r.geodesic.points for r in R])
    tree = shapely.STRtree(lines)
    I, J = tree.query(lines, predicate="intersects")
    keep = I < J
    I, J = I[keep], J[keep]
    if I.size == 0:
        return []
    inter = shapely.intersection(lines[I], lines[J])
    ends = np.array([[r.geodesic.points[0], r.geodesic.points[-1]] for r in R])
    found = []
    for a, b, geom in zip(I, J, inter):
        pts = shapely.get_coordinates(geom)
        if pts.size == 0:
            continue
        e = np.concatenate([ends[a], ends[b]])
        d = np.min(np.hypot(pts[:, None, 0] - e[None, :, 0], pts[:, None, 1] - e[None, :, 1]), axis=1)
        far = pts[d > h]
        if far.size:
            found.append((int(a), int(b), far[0]))
    return found


def ray_residuals(rays: RaySet, potential: Potential, samples=33):
    """max |psi(gamma(0)) - psi(gamma(t)) - d_k(gamma(0), gamma(t))| per ray.

    ``psi`` is the grid potential, ``d_k`` the weighted length along the ray.
    """
    grid = potential.grid
    out = []
    for r in rays.rays:
        g = r.geodesic
        if g.weighted_length == 0:
            out.append(0.0)
            continue
        n = len(g.points)
        idx = np.unique(np.linspace(0, n - 1, samples).round().astype(int))
        ps = grid.sample(g.points[idx])
        dk = g.weighted_length * idx / (n - 1)
        out.append(float(np.max(np.abs(ps[0] - ps - dk))))
    return np.array(out)
