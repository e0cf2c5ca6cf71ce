"""Geodesics and distances for the conformal metric k(x)|dx|.

Geodesics are integrated in Euclidean arclength ``s`` with state
``(x, y, phi, sigma)``::

    x' = (cos phi, sin phi)
    phi' = grad(log k) . (-sin phi, cos phi)
    sigma' = k(x)

where ``sigma`` is the accumulated weighted length.  Boundary-to-boundary
geodesics are found by shooting from the source point and solving for the
initial angle that makes the exit parameter hit the target.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from .domain import TWO_PI, rot_plus
from .errors import ConvexityViolation, DomainError, InvalidInput, NoConvergence
from .grids import GridSpec, ScalarGrid
from .parallel import map_chunks

N_POINTS = 256
STEPS_PER_CHORD = 160
ANGLE_TOL = 1e-12
FAN_SIZE = 48
CHUNK = 4096


@dataclass
class Geodesic:
    """Constant-speed sampling of a geodesic, ``points[i] = gamma(i/(N-1))``."""

    points: np.ndarray
    weighted_length: float
    n_solutions: int = 1

    @property
    def endpoints(self):
        return self.points[0].copy(), self.points[-1].copy()

    @property
    def t(self):
        return np.linspace(0.0, 1.0, len(self.points))

    def reversed(self):
        return Geodesic(self.points[::-1].copy(), self.weighted_length, self.n_solutions)

    def polyline_length(self, w):
        """Weighted length of the polyline, Simpson rule per segment."""
        p = self.points
        if len(p) < 2:
            return 0.0
        seg = np.hypot(*(p[1:] - p[:-1]).T)
        mid = 0.5 * (p[1:] + p[:-1])
        kk = (w.value(p[:-1]) + 4 * w.value(mid) + w.value(p[1:])) / 6.0
        return float(np.sum(seg * kk))


@dataclass
class GeodesicFan:
    """Geodesics from boundary points alpha(s) to a fixed target x_i."""

    arc_param: np.ndarray  # arclength positions s
    target: np.ndarray
    t: np.ndarray
    jacobian: np.ndarray  # shape (len(s), len(t))
    initial_angles: np.ndarray  # unit vectors nu(s)
    normals: np.ndarray  # inward unit normals n(s)
    lengths: np.ndarray  # weighted lengths tau(s)
    k_start: np.ndarray = field(default=None)  # k(alpha(s))

    def t0_prediction(self):
        """k^-1 tau (nu . n), the value J(s, 0) must take."""
        return self.lengths / self.k_start * np.sum(self.initial_angles * self.normals, axis=1)


# -- ODE ------------------------------------------------------------------

def _k_loggrad(w, x):
    if hasattr(w, "value_and_log_gradient"):
        return w.value_and_log_gradient(x)
    k = w.value(x)
    return k, w.gradient(x) / k[..., None]


def _rhs(w, S):
    k, gl = _k_loggrad(w, S[:, :2])
    c = np.cos(S[:, 2])
    s = np.sin(S[:, 2])
    out = np.empty_like(S)
    out[:, 0] = c
    out[:, 1] = s
    out[:, 2] = gl[:, 1] * c - gl[:, 0] * s
    out[:, 3] = k
    out[:, 4] = 1.0
    return out


def _rk4(w, S, h):
    h = h[:, None]
    k1 = _rhs(w, S)
    k2 = _rhs(w, S + 0.5 * h * k1)
    k3 = _rhs(w, S + 0.5 * h * k2)
    k4 = _rhs(w, S + h * k3)
    return S + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _event(domain, S, smax):
    e = domain.level(S[:, :2])
    if smax is not None:
        e = np.maximum(e, S[:, 3] - smax)
    return e


def _refine(w, domain, S0, h, e0, e1, smax, iters=60):
    """Find lam in (0, 1] with event(RK4(S0, lam*h)) = 0 (Illinois)."""
    n = len(S0)
    lo = np.zeros(n)
    hi = np.ones(n)
    flo = np.minimum(e0, -1e-300)
    fhi = e1.copy()
    side = np.zeros(n, dtype=np.int8)
    lam = np.ones(n)
    out = np.empty_like(S0)
    act = np.arange(n)
    for _ in range(iters):
        if act.size == 0:
            break
        a, b, fa, fb = lo[act], hi[act], flo[act], fhi[act]
        l = (a * fb - b * fa) / (fb - fa)
        bad = ~((l > a) & (l < b))
        l[bad] = 0.5 * (a[bad] + b[bad])
        S = _rk4(w, S0[act], l * h[act])
        f = _event(domain, S, None if smax is None else smax[act])
        lam[act] = l
        out[act] = S
        conv = (np.abs(f) <= 1e-15) | (b - a <= 1e-15)
        pos = f > 0
        sa = side[act]
        # positive: replace upper end, damp lower end if repeated
        hi[act] = np.where(pos, l, b)
        fhi[act] = np.where(pos, f, np.where(sa == -1, fb * 0.5, fb))
        lo[act] = np.where(pos, a, l)
        flo[act] = np.where(pos, np.where(sa == 1, fa * 0.5, fa), f)
        side[act] = np.where(pos, 1, -1)
        act = act[~conv]
    return out, lam


@dataclass
class _Trace:
    state: np.ndarray
    ds: np.ndarray
    nsteps: np.ndarray
    frac: np.ndarray
    hit: np.ndarray
    traj: list | None


def _integrate(w, domain, x0, phi0, ds, max_steps, record=False, smax=None, ds_max=None):
    """Integrate rays until they leave the domain (or reach ``smax``).

    The step is ``clip(max(-level/4, s/20), ds, ds_max)`` so rays launched
    at a shallow angle from the boundary start with small steps and speed
    up as they move away from it.  State columns: x, y, phi, sigma, s.
    """
    B = len(x0)
    state = np.zeros((B, 5))
    state[:, :2] = x0
    state[:, 2] = phi0
    if ds_max is None:
        ds_max = ds
    active = ds > 0
    nsteps = np.zeros(B, dtype=np.int64)
    frac = np.ones(B)
    hit = ~active
    traj = [state.copy()] if record else None
    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        S = state[idx]
        # geometric growth in s keeps grazing rays from crawling along the wall
        h = np.clip(np.maximum(-0.25 * domain.level(S[:, :2]), 0.05 * S[:, 4]), ds[idx], ds_max[idx])
        sm = None if smax is None else smax[idx]
        S1 = _rk4(w, S, h)
        e1 = _event(domain, S1, sm)
        out = e1 > 0
        if out.any():
            o = np.flatnonzero(out)
            e0 = _event(domain, S[o], None if sm is None else sm[o])
            S1[o], lam = _refine(w, domain, S[o], h[o], e0, e1[o], None if sm is None else sm[o])
            frac[idx[o]] = lam
            active[idx[o]] = False
            hit[idx[o]] = True
        state[idx] = S1
        nsteps[idx] += 1
        if record:
            traj.append(state.copy())
    return _Trace(state, ds, nsteps, frac, hit, traj)


def _hermite(u):
    u2 = u * u
    u3 = u2 * u
    return (2 * u3 - 3 * u2 + 1, u3 - 2 * u2 + u, -2 * u3 + 3 * u2, u3 - u2)


def _resample(w, tr, r, n_points):
    """Constant-speed resampling of ray ``r`` of a recorded trace."""
    n = int(tr.nsteps[r])
    nodes = np.array([tr.traj[i][r] for i in range(n + 1)])
    if n == 0 or nodes[-1, 3] <= 0:
        return np.repeat(nodes[:1, :2], n_points, axis=0), 0.0
    s = nodes[:, 4]
    x = nodes[:, :2]
    phi = nodes[:, 2]
    sig = nodes[:, 3]
    kv = w.value(x)
    L = sig[-1]
    target = L * np.linspace(0.0, 1.0, n_points)
    k = np.clip(np.searchsorted(sig, target, side="right") - 1, 0, n - 1)
    D = s[k + 1] - s[k]
    s0, s1 = sig[k], sig[k + 1]
    d0, d1 = D * kv[k], D * kv[k + 1]
    span = s1 - s0
    u = np.where(span > 0, (target - s0) / np.where(span > 0, span, 1.0), 0.0)
    u = np.clip(u, 0.0, 1.0)
    for _ in range(6):
        h00, h10, h01, h11 = _hermite(u)
        val = h00 * s0 + h10 * d0 + h01 * s1 + h11 * d1 - target
        der = ((6 * u * u - 6 * u) * s0 + (3 * u * u - 4 * u + 1) * d0
               + (-6 * u * u + 6 * u) * s1 + (3 * u * u - 2 * u) * d1)
        step = np.where(der > 0, val / np.where(der > 0, der, 1.0), 0.0)
        u = np.clip(u - step, 0.0, 1.0)
    h00, h10, h01, h11 = _hermite(u)
    t0 = np.stack([np.cos(phi[k]), np.sin(phi[k])], axis=1) * D[:, None]
    t1 = np.stack([np.cos(phi[k + 1]), np.sin(phi[k + 1])], axis=1) * D[:, None]
    pts = (h00[:, None] * x[k] + h10[:, None] * t0 + h01[:, None] * x[k + 1] + h11[:, None] * t1)
    pts[0] = x[0]
    pts[-1] = x[-1]
    return pts, float(L)


def _max_steps(w, n_per):
    return int(np.ceil(n_per * 20.0 * w.k_max / w.k_min)) + 1000


# -- public shooting --------------------------------------------------------

def shoot(w, domain, x, direction, n_points=N_POINTS, steps_per_chord=STEPS_PER_CHORD):
    """Integrate the geodesic from ``x`` with initial ``direction`` to the boundary.

    Parameters
    ----------
    direction : array_like
        Unit Euclidean vector.

    Returns
    -------
    Geodesic
        Stops at the first boundary crossing.

    Raises
    ------
    NoConvergence
        When the boundary is not reached within the step budget.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(direction, dtype=float)
    if abs(np.hypot(*d) - 1.0) > 1e-9:
        raise InvalidInput("direction must be a unit vector")
    chord = float(domain.ray_exit(x[None], d[None])[0])
    if chord <= 0:
        return Geodesic(np.repeat(x[None], n_points, axis=0), 0.0)
    if w.is_constant:
        y = x + chord * d
        return Geodesic(np.linspace(x, y, n_points), w.k_min * chord)
    ds = np.array([chord / steps_per_chord])
    tr = _integrate(w, domain, x[None], np.array([np.arctan2(d[1], d[0])]), ds,
                    _max_steps(w, steps_per_chord), record=True)
    if not tr.hit[0]:
        raise NoConvergence("geodesic did not reach the boundary")
    pts, L = _resample(w, tr, 0, n_points)
    return Geodesic(pts, L)


def _boundary_shots(w, domain, thx, beta, n_per, record=False, cap=None):
    """Shoot from boundary parameters ``thx`` at angles ``beta``.

    With ``cap`` set, rays whose weighted length exceeds it are stopped
    and get a NaN exit offset (they cannot be minimizing).
    """
    thx = np.asarray(thx, dtype=float)
    beta = np.asarray(beta, dtype=float)
    x = domain.point(thx)
    T = domain.tangent(thx)
    N = rot_plus(T)
    d = np.cos(beta)[:, None] * T + np.sin(beta)[:, None] * N
    chord = domain.ray_exit(x, d)
    ds = chord / n_per
    ds_max = np.full(len(ds), domain.diameter() / n_per)
    smax = None if cap is None else np.full(len(thx), float(cap))
    tr = _integrate(w, domain, x, np.arctan2(d[:, 1], d[:, 0]), ds, _max_steps(w, n_per), record, smax,
                    np.maximum(ds_max, ds))
    if not np.all(tr.hit):
        raise NoConvergence("boundary shot did not exit the domain")
    delta = np.mod(domain.param_of(tr.state[:, :2]) - thx, TWO_PI)
    if cap is not None:
        delta[tr.state[:, 3] >= cap * (1 - 1e-12)] = np.nan
    delta = np.where((delta > TWO_PI - 1e-7) & (beta < np.pi / 2), delta - TWO_PI, delta)
    delta = np.where((delta < 1e-7) & (beta > np.pi / 2), delta + TWO_PI, delta)
    delta = np.where(ds > 0, delta, np.where(beta < np.pi / 2, 0.0, TWO_PI))
    return delta, tr


def _illinois_angles(w, domain, thx, dy, lo, hi, flo, fhi, n_per, tol=ANGLE_TOL, maxit=100, cap=None):
    """Solve delta(beta) = dy on the given brackets.

    Returns ``beta, length, residual``; brackets that straddle a jump of
    the exit parameter collapse to zero width with a large residual.
    """
    P = len(thx)
    beta = np.empty(P)
    length = np.empty(P)
    resid = np.full(P, np.inf)
    lo, hi, flo, fhi = lo.copy(), hi.copy(), flo.copy(), fhi.copy()
    side = np.zeros(P, dtype=np.int8)
    act = np.arange(P)
    for _ in range(maxit):
        if act.size == 0:
            break
        a, b, fa, fb = lo[act], hi[act], flo[act], fhi[act]
        m = (a * fb - b * fa) / (fb - fa)
        bad = ~((m > a) & (m < b))
        m[bad] = 0.5 * (a[bad] + b[bad])
        delta, tr = _boundary_shots(w, domain, thx[act], m, n_per, cap=cap)
        f = delta - dy[act]
        beta[act] = m
        length[act] = tr.state[:, 3]
        resid[act] = f
        conv = (np.abs(f) <= tol) | (b - a <= 4e-16) | np.isnan(f)
        pos = f > 0
        sa = side[act]
        hi[act] = np.where(pos, m, b)
        fhi[act] = np.where(pos, f, np.where(sa == -1, fb * 0.5, fb))
        lo[act] = np.where(pos, a, m)
        flo[act] = np.where(pos, np.where(sa == 1, fa * 0.5, fa), f)
        side[act] = np.where(pos, 1, -1)
        act = act[~conv]
    return beta, length, resid


def exit_fan(w, domain, thx, fan_size=FAN_SIZE, n_per=STEPS_PER_CHORD, jump=0.2, depth=14):
    """Exit-parameter offsets delta(beta) on adaptively refined fans.

    Parameters
    ----------
    thx : array_like
        Source boundary parameters.
    jump : float
        Intervals whose offset changes by more than this (radians) are
        bisected, up to ``depth`` times.

    Returns
    -------
    list of (beta, delta, length) arrays, one triple per source, with the
    limits ``delta(0) = 0`` and ``delta(pi) = 2 pi`` included.
    """
    thx = np.atleast_1d(np.asarray(thx, dtype=float))
    bk = np.pi * (np.arange(fan_size) + 0.5) / fan_size
    cap = 1.01 * w.k_max * domain.diameter()
    dl, tr = _boundary_shots(w, domain, np.repeat(thx, fan_size), np.tile(bk, len(thx)), n_per, cap=cap)
    Ls = tr.state[:, 3].reshape(len(thx), fan_size)
    dl = dl.reshape(len(thx), fan_size)
    fans = []
    for i in range(len(thx)):
        fans.append([np.concatenate([[0.0], bk, [np.pi]]),
                     np.concatenate([[0.0], dl[i], [TWO_PI]]),
                     np.concatenate([[0.0], Ls[i], [0.0]])])
    for _ in range(depth):
        src, mids = [], []
        for i, (B, Dl, _) in enumerate(fans):
            dD = np.diff(Dl)
            fin = np.isfinite(Dl)
            mixed = fin[:-1] != fin[1:]
            need = np.flatnonzero(((np.abs(np.nan_to_num(dD)) > jump) | mixed) & (np.diff(B) > 1e-9))
            src.extend([i] * need.size)
            mids.extend(0.5 * (B[need] + B[need + 1]))
        if not mids:
            break
        src = np.array(src)
        mids = np.array(mids)
        dm, trm = _boundary_shots(w, domain, thx[src], mids, n_per, cap=cap)
        for i in np.unique(src):
            sel = src == i
            B, Dl, L = fans[i]
            B = np.concatenate([B, mids[sel]])
            order = np.argsort(B, kind="stable")
            fans[i] = [B[order], np.concatenate([Dl, dm[sel]])[order],
                       np.concatenate([L, trm.state[sel, 3]])[order]]
    return fans


def _fan_brackets(w, domain, thx, thy, n_per, fan_size, jump=0.2):
    """Scan a fan of angles per distinct source and bracket every root."""
    ux, inv = np.unique(thx, return_inverse=True)
    fans = exit_fan(w, domain, ux, fan_size, n_per, jump=jump)
    dy = np.mod(thy - thx, TWO_PI)
    rows = []
    for p in range(len(thx)):
        B, Dl, _ = fans[inv[p]]
        g = Dl - dy[p]
        with np.errstate(invalid="ignore"):
            sc = np.flatnonzero(((g[:-1] <= 0) & (g[1:] > 0)) | ((g[:-1] >= 0) & (g[1:] < 0)))
        for c in sc:
            # intervals still spanning a large change are jumps at the
            # refinement limit, not roots
            if abs(g[c + 1] - g[c]) <= jump:
                rows.append((p, B[c], B[c + 1], g[c], g[c + 1]))
    monotone = np.array([bool(np.all(np.diff(f[1]) > 0)) for f in fans])  # NaN counts as not
    return rows, monotone[inv], dy


def boundary_pair_angles(w, domain, thx, thy, mode="direct", n_per=STEPS_PER_CHORD,
                         fan_size=FAN_SIZE, tol=ANGLE_TOL, strict=True):
    """Shooting angles and weighted lengths for boundary point pairs.

    Parameters
    ----------
    thx, thy : array_like
        Boundary parameters of the endpoints (must differ).
    mode : {"direct", "fan"}
        ``direct`` brackets the angle on ``[0, pi]`` and assumes the exit
        parameter is monotone in the angle (geodesically convex domains
        with unique geodesics).  ``fan`` scans an adaptive fan of angles,
        brackets every root and keeps the shortest geodesic.
    strict : bool
        In ``fan`` mode, raise when some pair has no interior geodesic.
        Otherwise such pairs get ``beta = nan``, ``length = inf`` and zero
        solutions.

    Returns
    -------
    beta, length, n_solutions : ndarray
        ``beta`` is measured from the counterclockwise tangent toward the
        inward normal.
    """
    thx = np.mod(np.asarray(thx, dtype=float), TWO_PI)
    thy = np.mod(np.asarray(thy, dtype=float), TWO_PI)
    P = len(thx)
    if P == 0:
        return np.zeros(0), np.zeros(0), np.zeros(0, dtype=int)
    dy = np.mod(thy - thx, TWO_PI)
    if np.any((dy == 0)):
        raise InvalidInput("coincident endpoints; handle x == y before shooting")
    rtol = 1e3 * tol
    if mode == "direct":
        def run(sl):
            n = sl.stop - sl.start
            return _illinois_angles(w, domain, thx[sl], dy[sl], np.zeros(n), np.full(n, np.pi),
                                    -dy[sl], TWO_PI - dy[sl], n_per, tol)
        parts = map_chunks(run, [slice(i, min(i + CHUNK, P)) for i in range(0, P, CHUNK)])
        beta = np.concatenate([p[0] for p in parts])
        length = np.concatenate([p[1] for p in parts])
        resid = np.concatenate([p[2] for p in parts])
        bad = ~(np.abs(resid) <= rtol)
        if np.any(bad):
            raise NoConvergence(f"angle search failed for {int(bad.sum())} pairs",
                                best={"beta": beta, "length": length, "residual": resid})
        return beta, length, np.ones(P, dtype=int)
    if mode != "fan":
        raise InvalidInput(f"unknown mode {mode!r}")
    rows, _, _ = _fan_brackets(w, domain, thx, thy, n_per, fan_size)
    if not rows:
        if not strict:
            return np.full(P, np.nan), np.full(P, np.inf), np.zeros(P, dtype=int)
        raise ConvexityViolation("no interior geodesic connects the requested boundary points")
    R = np.array(rows)
    pidx = R[:, 0].astype(int)
    b, L, res = _illinois_angles(w, domain, thx[pidx], dy[pidx], R[:, 1], R[:, 2], R[:, 3], R[:, 4],
                                 n_per, tol, cap=1.01 * w.k_max * domain.diameter())
    beta = np.full(P, np.nan)
    length = np.full(P, np.inf)
    nsol = np.zeros(P, dtype=int)
    for r in range(len(pidx)):
        if not abs(res[r]) <= rtol:
            continue  # bracket straddled a jump of the exit parameter
        p = pidx[r]
        nsol[p] += 1
        if L[r] < length[p] - 1e-14 * max(1.0, L[r]):
            length[p] = L[r]
            beta[p] = b[r]
    missing = np.flatnonzero(nsol == 0)
    if missing.size and strict:
        raise ConvexityViolation(f"no interior geodesic for {missing.size} boundary pairs")
    return beta, length, nsol


def boundary_pair_lengths(w, domain, thx, thy, mode="direct", **kw):
    """Weighted geodesic distances between boundary points given by parameter."""
    thx = np.mod(np.asarray(thx, dtype=float), TWO_PI)
    thy = np.mod(np.asarray(thy, dtype=float), TWO_PI)
    out = np.zeros(len(thx))
    same = np.isclose(np.mod(thy - thx + np.pi, TWO_PI) - np.pi, 0.0, atol=1e-15)
    if w.is_constant:
        d = domain.point(thx) - domain.point(thy)
        return w.k_min * np.hypot(d[:, 0], d[:, 1]) * ~same
    idx = np.flatnonzero(~same)
    if idx.size:
        out[idx] = boundary_pair_angles(w, domain, thx[idx], thy[idx], mode, **kw)[1]
    return out


def boundary_geodesics(w, domain, thx, thy, n_points=N_POINTS, mode="direct",
                       n_per=STEPS_PER_CHORD, **kw):
    """Geodesics between boundary points, one per (thx[i], thy[i]) pair."""
    thx = np.mod(np.asarray(thx, dtype=float), TWO_PI)
    thy = np.mod(np.asarray(thy, dtype=float), TWO_PI)
    P = len(thx)
    X = domain.point(thx).reshape(P, 2)
    Y = domain.point(thy).reshape(P, 2)
    same = np.isclose(np.mod(thy - thx + np.pi, TWO_PI) - np.pi, 0.0, atol=1e-15)
    out = [None] * P
    for p in np.flatnonzero(same):
        out[p] = Geodesic(np.repeat(X[p][None], n_points, axis=0), 0.0)
    idx = np.flatnonzero(~same)
    if w.is_constant:
        t = np.linspace(0.0, 1.0, n_points)[:, None]
        for p in idx:
            out[p] = Geodesic((1 - t) * X[p] + t * Y[p], w.k_min * float(np.hypot(*(Y[p] - X[p]))))
        return out
    if idx.size == 0:
        return out
    beta, _, nsol = boundary_pair_angles(w, domain, thx[idx], thy[idx], mode, n_per=n_per, **kw)

    def run(sl):
        sub = idx[sl]
        _, tr = _boundary_shots(w, domain, thx[sub], beta[sl], n_per, record=True)
        res = []
        for r in range(len(sub)):
            pts, L = _resample(w, tr, r, n_points)
            pts[0] = X[sub[r]]
            pts[-1] = Y[sub[r]]
            res.append(Geodesic(pts, L, int(nsol[sl][r])))
        return res

    chunk = 1024
    parts = map_chunks(run, [slice(i, min(i + chunk, idx.size)) for i in range(0, idx.size, chunk)])
    for sl_i, part in zip(range(0, idx.size, chunk), parts):
        for r, g in enumerate(part):
            out[idx[sl_i + r]] = g
    return out


# -- Dijkstra oracle -----------------------------------------------------

def _stencil(radius):
    from math import gcd

    offs = []
    for di in range(0, radius + 1):
        for dj in range(-radius, radius + 1):
            if (di, dj) == (0, 0) or gcd(di, abs(dj)) != 1:
                continue
            if di == 0 and dj < 0:
                continue
            offs.append((di, dj))
    return offs


def _simpson_weight(w, a, b):
    seg = np.hypot(*(b - a).T)
    return seg * (w.value(a) + 4 * w.value(0.5 * (a + b)) + w.value(b)) / 6.0


def dijkstra_distance(w, domain, x, y, n=96, radius=2, return_path=False):
    """Shortest weighted path on a grid graph inside the domain.

    Nodes are grid points (spacing ``max bbox side / n``) inside the domain
    plus ``x`` and ``y``.  Edges join nodes whose offset is a primitive
    vector with entries at most ``radius`` (``radius=2`` gives the
    16-direction stencil); each edge is weighted by Simpson's rule.
    The result overestimates ``d_k`` by the stencil's angular error.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x0, x1, y0, y1 = domain.bbox()
    h = max(x1 - x0, y1 - y0) / n
    nx = int(np.floor((x1 - x0) / h)) + 1
    ny = int(np.floor((y1 - y0) / h)) + 1
    gx = x0 + h * np.arange(nx)
    gy = y0 + h * np.arange(ny)
    X, Y = np.meshgrid(gx, gy)
    P = np.stack([X, Y], axis=-1)
    inside = domain.level(P) <= 0
    ids = -np.ones((ny, nx), dtype=np.int64)
    ids[inside] = np.arange(inside.sum())
    nodes = P[inside]
    nn = len(nodes)
    rows, cols, vals = [], [], []
    for di, dj in _stencil(radius):
        # node (j, i) -> (j + dj, i + di)
        ja = slice(max(0, -dj), ny - max(0, dj))
        jb = slice(max(0, dj), ny - max(0, -dj))
        ia = slice(0, nx - di)
        ib = slice(di, nx)
        a = ids[ja, ia]
        b = ids[jb, ib]
        ok = (a >= 0) & (b >= 0)
        a, b = a[ok], b[ok]
        mid = 0.5 * (nodes[a] + nodes[b])
        keep = domain.level(mid) <= 0
        a, b = a[keep], b[keep]
        rows.append(a)
        cols.append(b)
        vals.append(_simpson_weight(w, nodes[a], nodes[b]))
    # attach the endpoints
    extra = np.array([x, y])
    for e, pt in enumerate(extra):
        d = np.hypot(*(nodes - pt).T)
        near = np.flatnonzero(d <= radius * h * 1.01 + 1e-12)
        if near.size == 0:
            near = np.array([int(np.argmin(d))])
        rows.append(np.full(near.size, nn + e))
        cols.append(near)
        vals.append(_simpson_weight(w, np.repeat(pt[None], near.size, axis=0), nodes[near]))
    if np.hypot(*(x - y)) <= radius * h * 1.01:
        rows.append(np.array([nn]))
        cols.append(np.array([nn + 1]))
        vals.append(_simpson_weight(w, x[None], y[None]))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.maximum(np.concatenate(vals), 1e-300)
    G = sparse.coo_matrix((v, (r, c)), shape=(nn + 2, nn + 2)).tocsr()
    dist, pred = dijkstra(G, directed=False, indices=nn, return_predecessors=True)
    D = float(dist[nn + 1])
    if not return_path:
        return D
    allp = np.vstack([nodes, extra])
    path = [nn + 1]
    while path[-1] != nn and pred[path[-1]] >= 0:
        path.append(pred[path[-1]])
    return D, allp[path[::-1]]


# -- general connect -------------------------------------------------------

def _closest_signed_miss(poly, y):
    """Signed distance from y to a polyline and the index/fraction of the foot."""
    a = poly[:-1]
    b = poly[1:]
    ab = b - a
    L2 = np.sum(ab * ab, axis=1)
    t = np.clip(np.sum((y - a) * ab, axis=1) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    foot = a + t[:, None] * ab
    d = np.hypot(*(y - foot).T)
    m = int(np.argmin(d))
    cross = ab[m, 0] * (y - foot[m])[1] - ab[m, 1] * (y - foot[m])[0]
    interior = not ((m == len(ab) - 1 and t[m] >= 1.0) or (m == 0 and t[m] <= 0.0))
    sgn = 1.0 if cross >= 0 else -1.0
    return sgn * d[m], m, t[m], interior


def _connect_general(w, domain, x, y, n_points, n_per=STEPS_PER_CHORD):
    D, path = dijkstra_distance(w, domain, x, y, n=64, radius=3, return_path=True)
    if not np.isfinite(D):
        raise ConvexityViolation("endpoints are not connected inside the domain")
    dist = float(np.hypot(*(y - x)))
    y_on_boundary = _on_boundary(domain, y)
    th_y = domain.param_of(y) if y_on_boundary else None
    smax_val = 1.3 * D + 1e-12
    seed = path[min(3, len(path) - 1)] - x
    a0 = float(np.arctan2(seed[1], seed[0]))

    def shots(angles, record=True):
        angles = np.asarray(angles, dtype=float)
        d = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        chord = domain.ray_exit(np.repeat(x[None], len(angles), axis=0), d)
        ds = np.minimum(chord, 2.0 * dist) / n_per
        tr = _integrate(w, domain, np.repeat(x[None], len(angles), axis=0), angles, ds,
                        _max_steps(w, n_per), record=True, smax=np.full(len(angles), smax_val))
        res = []
        for r in range(len(angles)):
            n = int(tr.nsteps[r])
            poly = np.array([tr.traj[i][r] for i in range(n + 1)])
            if n == 0:
                res.append((np.nan, None))
                continue
            if y_on_boundary:
                # target on the boundary: miss is the exit parameter offset
                exited = domain.level(poly[-1, :2]) > -1e-10 * max(1.0, dist)
                m = np.mod(domain.param_of(poly[-1, :2]) - th_y + np.pi, TWO_PI) - np.pi
                res.append((m if exited else np.nan, (poly, n - 1, 1.0)))
                continue
            m, seg, frac, interior = _closest_signed_miss(poly[:, :2], y)
            res.append((m if interior else np.nan, (poly, seg, frac)))
        return res

    def scan(angles):
        vals = shots(angles)
        ms = np.array([v[0] for v in vals])
        out = []
        for i in range(len(angles) - 1):
            a, b = ms[i], ms[i + 1]
            if np.isfinite(a) and np.isfinite(b) and a * b <= 0:
                out.append((angles[i], angles[i + 1], a, b))
        return out

    def solve(brackets):
        found = None
        for lo, hi, flo, fhi in brackets:
            side = 0
            res = None
            f = np.nan
            for _ in range(80):
                m = (lo * fhi - hi * flo) / (fhi - flo)
                if not (min(lo, hi) < m < max(lo, hi)):
                    m = 0.5 * (lo + hi)
                (f, res), = shots([m])
                if not np.isfinite(f) or abs(f) <= 1e-11 * max(1.0, dist) or abs(hi - lo) < 1e-15:
                    break
                if (f > 0) == (fhi > 0):
                    hi, fhi = m, f
                    if side == 1:
                        flo *= 0.5
                    side = 1
                else:
                    lo, flo = m, f
                    if side == -1:
                        fhi *= 0.5
                    side = -1
            # brackets across a jump of the miss function do not converge
            if res is None or not np.isfinite(f) or abs(f) > 1e-8 * max(1.0, dist):
                continue
            poly, seg, frac = res
            sig = poly[seg, 3] + frac * (poly[seg + 1, 3] - poly[seg, 3])
            if found is None or sig < found[0]:
                found = (sig, poly, seg, frac)
        return found

    best = solve(scan(a0 + np.linspace(-0.6, 0.6, 49)))
    if best is None:
        best = solve(scan(a0 + np.linspace(-np.pi, np.pi, 145)))
    if best is None:
        raise NoConvergence("angle search did not hit the target",
                            best=Geodesic(path, float(D)))
    sig, poly, seg, frac = best
    if sig > D * 1.05:
        raise ConvexityViolation(f"geodesic length {sig:.6g} exceeds grid path length {D:.6g}")
    # resample the truncated polyline at constant weighted speed
    keep = poly[: seg + 1]
    end = poly[seg] + frac * (poly[seg + 1] - poly[seg])
    end[:2] = y
    nodes = np.vstack([keep, end[None]])
    sgrid = np.linspace(0.0, sig, n_points)
    pts = np.column_stack([np.interp(sgrid, nodes[:, 3], nodes[:, 0]),
                           np.interp(sgrid, nodes[:, 3], nodes[:, 1])])
    pts[0] = x
    pts[-1] = y
    return Geodesic(pts, float(sig))


def _on_boundary(domain, p, tol=1e-9):
    return domain.has_boundary_curve and abs(float(domain.level(p))) <= tol * max(1.0, domain.diameter())


def connect(w, domain, x, y, n_points=N_POINTS, mode="fan"):
    """Minimizing geodesic from ``x`` to ``y`` inside the closed domain.

    Boundary pairs are solved by exit-parameter shooting (``mode`` as in
    :func:`boundary_pair_angles`); other pairs by shooting toward ``y``
    from a direction seeded by a grid-Dijkstra path.

    Raises
    ------
    NoConvergence
        When the angle search fails; ``err.best`` holds the Dijkstra path.
    ConvexityViolation
        When no interior geodesic realizes the distance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for p in (x, y):
        if domain.level(p) > 1e-9 * max(1.0, domain.diameter()):
            raise DomainError("endpoint outside the domain")
    if np.array_equal(x, y) or np.hypot(*(x - y)) <= 1e-14:
        return Geodesic(np.repeat(x[None], n_points, axis=0), 0.0)
    if w.is_constant and _segment_inside(domain, x, y):
        return Geodesic(np.linspace(x, y, n_points), w.k_min * float(np.hypot(*(y - x))))
    if _on_boundary(domain, x) and _on_boundary(domain, y):
        thx = domain.param_of(x[None])
        thy = domain.param_of(y[None])
        g = boundary_geodesics(w, domain, thx, thy, n_points=n_points, mode=mode)[0]
        g.points[0] = x
        g.points[-1] = y
        return g
    return _connect_general(w, domain, x, y, n_points)


def _segment_inside(domain, x, y, n=65):
    t = np.linspace(0.0, 1.0, n)[:, None]
    tol = 1e-9 * max(1.0, domain.diameter())
    return bool(np.all(domain.level((1 - t) * x + t * y) <= tol))


def distance(w, domain, x, y, mode="fan"):
    """Geodesic distance d_k(x, y)."""
    return connect(w, domain, x, y, n_points=2, mode=mode).weighted_length


def distance_field(w, domain, y, spec: GridSpec, order=2):
    """Eikonal distance |grad D| = k, D(y) = 0, on the cell centers of ``spec``.

    Solved by fast marching over the whole grid box (scikit-fmm).  The
    source is a small disk of radius ``1.5 h`` around ``y`` where ``D`` is
    set to ``k(y) |z - y|``.
    """
    import skfmm

    y = np.asarray(y, dtype=float)
    C = spec.centers()
    r = np.hypot(C[..., 0] - y[0], C[..., 1] - y[1])
    r0 = 1.5 * spec.h
    ky = float(w.value(y))
    if w.is_constant:
        return ScalarGrid(spec, ky * r)
    kk = w.value(C)
    phi = r - r0
    tt = skfmm.travel_time(phi, 1.0 / kk, dx=spec.h, order=order)
    D = np.asarray(tt) + ky * r0
    D = np.where(r <= r0, 0.5 * (kk + ky) * r, D)
    return ScalarGrid(spec, D)


# -- geodesic fan ----------------------------------------------------------

def jacobian_fan(w, domain, s_samples, target_theta, t_samples, ds=None,
                 n_per=400, n_dense=1025, mode="direct"):
    """Jacobian of (s, t) -> gamma_s(t) for geodesics from alpha(s) to x_i.

    Parameters
    ----------
    s_samples : array_like
        Arclength positions of the starting points alpha(s).
    target_theta : float
        Boundary parameter of the common endpoint x_i.
    t_samples : array_like
        Curve parameters in [0, 1] where J is reported.
    ds : float, optional
        Finite-difference step in s; defaults to ``1e-3 * perimeter``.

    Returns
    -------
    GeodesicFan
    """
    s = np.asarray(s_samples, dtype=float)
    t = np.asarray(t_samples, dtype=float)
    per = domain.perimeter
    if ds is None:
        ds = 1e-3 * per
    th_i = float(np.mod(target_theta, TWO_PI))
    s_i = float(domain.arclength(th_i))
    gap = np.abs(np.mod(s - s_i + 0.5 * per, per) - 0.5 * per)
    if np.any(gap <= 2 * ds):
        raise InvalidInput("degenerate fan: a starting point coincides with the target")
    S3 = np.concatenate([s - ds, s, s + ds])
    th3 = domain.theta_at(S3)
    geos = boundary_geodesics(w, domain, th3, np.full(len(S3), th_i), n_points=n_dense,
                              mode=mode, n_per=n_per)
    P = np.array([g.points for g in geos]).reshape(3, len(s), n_dense, 2)
    L = np.array([g.weighted_length for g in geos]).reshape(3, len(s))
    tt = np.linspace(0.0, 1.0, n_dense)
    dPs = (P[2] - P[0]) / (2 * ds)
    dPt = np.gradient(P[1], tt, axis=1, edge_order=2)
    Jd = dPs[..., 0] * dPt[..., 1] - dPs[..., 1] * dPt[..., 0]
    J = np.array([np.interp(t, tt, row) for row in Jd])
    th = th3[len(s): 2 * len(s)]
    nrm = domain.inward_normal(th)
    v0 = dPt[:, 0]
    nu = v0 / np.hypot(v0[:, 0], v0[:, 1])[:, None]
    k0 = w.value(domain.point(th))
    return GeodesicFan(s, domain.point(th_i), t, J, nu, nrm, L[1], k0)
