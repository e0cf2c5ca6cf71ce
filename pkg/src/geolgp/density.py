"""Transport density, partial densities and the flow field on a grid.

Each ray of mass ``m`` and weighted length ``L`` sampled at ``N`` constant
speed points carries ``m * L / (N - 1)`` on every segment.  A segment is
clipped against the grid lines and its share is split among the cells it
crosses in proportion to ``k(midpoint) * length`` of each piece, so the
total deposited mass equals ``sum m L`` to rounding.
"""
from __future__ import annotations

import numpy as np

from .grids import GridSpec, ScalarGrid, VectorGrid


def _ray_segments(rays, tau=None, part=None):
    """Stack the segments of all rays with their mass weights.

    Returns ``P0, P1, W, lo, hi``: ``[lo, hi]`` is the part of each segment
    (as a segment parameter) that is kept.  With ``part="plus"`` only the
    portion ``t <= tau`` of each ray is kept, with ``part="minus"`` the
    portion ``t >= tau``.  The cut segment keeps its full weight and
    geometry so that both parts split its cell shares exactly.
    """
    P0, P1, W, LO, HI = [], [], [], [], []
    for r in rays:
        g = r.geodesic
        pts = g.points
        n = len(pts) - 1
        if n < 1 or g.weighted_length == 0 or r.mass == 0:
            continue
        per = r.mass * g.weighted_length / n
        a, b = pts[:-1], pts[1:]
        lo, hi = np.zeros(n), np.ones(n)
        if part is not None:
            q = tau * n
            iq = min(int(np.floor(q)), n - 1)
            fr = q - iq
            if part == "plus":
                keep = slice(0, iq + 1)
                hi[iq] = fr
            else:
                keep = slice(iq, n)
                lo[iq] = fr
            a, b, lo, hi = a[keep], b[keep], lo[keep], hi[keep]
        P0.append(a)
        P1.append(b)
        W.append(np.full(len(a), per))
        LO.append(lo)
        HI.append(hi)
    if not W:
        z = np.zeros((0, 2))
        e = np.zeros(0)
        return z, z, e, e, e
    return tuple(np.concatenate(x) for x in (P0, P1, W, LO, HI))


def _line_params(g0, g1, K):
    """Segment parameters where g crosses integers strictly between g0 and g1."""
    lo = np.minimum(g0, g1)
    hi = np.maximum(g0, g1)
    c = np.floor(lo)[:, None] + 1 + np.arange(K)[None, :]
    d = (g1 - g0)[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = (c - g0[:, None]) / d
    ok = (c < hi[:, None]) & (d != 0)
    return np.where(ok, lam, np.nan)


def _deposit(P0, P1, W, lo, hi, spec: GridSpec, w, vector=False):
    """Accumulate segment weights into grid cells (flat arrays of sums).

    Each segment's weight is shared among its cell pieces in proportion to
    ``k * length``; only the overlap of a piece with ``[lo, hi]`` counts.
    """
    ncell = spec.nx * spec.ny
    if len(W) == 0:
        return np.zeros(ncell), (np.zeros((ncell, 2)) if vector else None)
    spec.cell_of(P0)
    spec.cell_of(P1)  # raises if a ray leaves the grid
    ox, oy = spec.origin
    h = spec.h
    gx0, gx1 = (P0[:, 0] - ox) / h, (P1[:, 0] - ox) / h
    gy0, gy1 = (P0[:, 1] - oy) / h, (P1[:, 1] - oy) / h
    Kx = int(np.max(np.ceil(np.maximum(gx0, gx1)) - np.floor(np.minimum(gx0, gx1)))) + 1
    Ky = int(np.max(np.ceil(np.maximum(gy0, gy1)) - np.floor(np.minimum(gy0, gy1)))) + 1
    lam = np.concatenate([np.zeros((len(W), 1)), _line_params(gx0, gx1, Kx),
                          _line_params(gy0, gy1, Ky), np.ones((len(W), 1))], axis=1)
    lam = np.sort(np.where(np.isnan(lam), 2.0, lam), axis=1)
    lam = np.minimum(lam, 1.0)
    dl = np.diff(lam, axis=1)
    mid = 0.5 * (lam[:, 1:] + lam[:, :-1])
    seg = P1 - P0
    seglen = np.hypot(seg[:, 0], seg[:, 1])
    live = dl > 0
    r, c = np.nonzero(live)
    mp = P0[r] + mid[r, c][:, None] * seg[r]
    j, i = spec.cell_of(mp)
    kv = w.value(mp)
    piece = kv * dl[r, c] * seglen[r]
    tot = np.bincount(r, piece, minlength=len(W))
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(tot[r] > 0, piece / tot[r], 0.0)
    a0, a1 = lam[r, c], lam[r, c + 1]
    keep = np.clip(np.minimum(a1, hi[r]) - np.maximum(a0, lo[r]), 0.0, None) / dl[r, c]
    amount = W[r] * share * keep
    flat = j * spec.nx + i
    sig = np.bincount(flat, amount, minlength=ncell)
    if not vector:
        return sig, None
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(seglen[:, None] > 0, seg / seglen[:, None], 0.0)
    vec = np.stack([np.bincount(flat, amount * u[r, 0], minlength=ncell),
                    np.bincount(flat, amount * u[r, 1], minlength=ncell)], axis=1)
    return sig, vec


def assemble_density(rays, spec: GridSpec, w, tau_split=0.5):
    """Transport density and its partial densities.

    Returns
    -------
    sigma, sigma_plus, sigma_minus : ScalarGrid
        Mass per unit area.  ``sigma_plus`` collects the part of each ray
        with ``t <= tau_split`` and ``sigma_minus`` the rest; ``sigma`` is
        their sum, so the identity holds cellwise by construction.
    """
    if not 0.0 <= tau_split <= 1.0:
        raise ValueError("tau_split must lie in [0, 1]")
    area = spec.h ** 2
    sp, _ = _deposit(*_ray_segments(rays, tau_split, "plus"), spec, w)
    sm, _ = _deposit(*_ray_segments(rays, tau_split, "minus"), spec, w)
    plus = sp.reshape(spec.shape) / area
    minus = sm.reshape(spec.shape) / area
    return ScalarGrid(spec, plus + minus), ScalarGrid(spec, plus), ScalarGrid(spec, minus)


def assemble_flow(rays, spec: GridSpec, w) -> VectorGrid:
    """Flow field v: the density deposit times the unit ray direction."""
    _, vec = _deposit(*_ray_segments(rays), spec, w, vector=True)
    return VectorGrid(spec, vec.reshape(spec.shape + (2,)) / spec.h ** 2)


def cosine_family(spec: GridSpec, modes=5):
    """Tensor cosines cos(a pi xi) cos(b pi eta) on the grid box, a, b < modes.

    Returns a list of ``(a, b, phi, grad, lip)`` where ``phi`` and ``grad``
    are callables on points and ``lip`` bounds |grad phi|.
    """
    x0, x1, y0, y1 = spec.extent()
    Wx, Wy = x1 - x0, y1 - y0
    out = []
    for a in range(modes):
        for b in range(modes):
            ka, kb = a * np.pi / Wx, b * np.pi / Wy

            def phi(p, ka=ka, kb=kb):
                return np.cos(ka * (p[..., 0] - x0)) * np.cos(kb * (p[..., 1] - y0))

            def grad(p, ka=ka, kb=kb):
                cx, sx = np.cos(ka * (p[..., 0] - x0)), np.sin(ka * (p[..., 0] - x0))
                cy, sy = np.cos(kb * (p[..., 1] - y0)), np.sin(kb * (p[..., 1] - y0))
                return np.stack([-ka * sx * cy, -kb * cx * sy], axis=-1)

            out.append((a, b, phi, grad, float(np.hypot(ka, kb))))
    return out


def divergence_residual(v: VectorGrid, w, sources, targets, modes=5):
    """Weak-divergence defect of k^-1 v against f+ - f-.

    For each test function phi the defect is
    ``|int grad(phi) . v / k dx + sum phi(x_i) m_i - sum phi(y_j) m_j|``
    divided by ``Lip(phi) * mass``; the maximum over the family is
    returned (the constant function contributes the mass imbalance).
    """
    spec = v.spec
    C = spec.centers()
    vv = v.values
    nz = np.any(vv != 0, axis=-1)
    pts = C[nz]
    q = vv[nz] / w.value(pts)[:, None]
    mass = max(sources.total_mass, 1e-300)
    worst = 0.0
    for a, b, phi, grad, lip in cosine_family(spec, modes):
        bnd = float(np.dot(phi(sources.points), sources.mass) - np.dot(phi(targets.points), targets.mass))
        if lip == 0:
            val = abs(sources.total_mass - targets.total_mass) / mass
        else:
            vol = float(np.sum(grad(pts) * q)) * spec.h ** 2
            val = abs(vol + bnd) / (lip * mass)
        worst = max(worst, val)
    return worst


def lp_norm(sigma: ScalarGrid, p, domain=None, collar=None):
    """Discrete L^p norm of a grid density and the mass near the boundary.

    Parameters
    ----------
    p : float
        In [1, inf].
    collar : float, optional
        Width of the boundary collar; defaults to ``2 h``.

    Returns
    -------
    dict with ``norm`` and ``collar_mass`` (None without a domain).
    """
    if not p >= 1:
        raise ValueError("p must be >= 1")
    vals = np.abs(sigma.values)
    area = sigma.spec.h ** 2
    if np.isinf(p):
        norm = float(vals.max()) if vals.size else 0.0
    else:
        norm = float(np.sum(vals ** p) * area) ** (1.0 / p)
    cm = None
    if domain is not None:
        width = 2 * sigma.spec.h if collar is None else collar
        C = sigma.spec.centers().reshape(-1, 2)
        live = vals.ravel() > 0
        cm = 0.0
        if np.any(live):
            d = domain.boundary_distance(C[live])
            cm = float(np.sum(vals.ravel()[live][d <= width]) * area)
    return {"norm": norm, "collar_mass": cm}
