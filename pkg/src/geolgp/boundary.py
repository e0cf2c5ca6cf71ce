"""Boundary data g, its tangential derivative f and atomic discretizations.

Parameters are angles in radians on the counterclockwise boundary curve.
Densities are per unit arclength; masses of a density piece are
integrals against arclength, so a piece of g contributes
``g(end-) - g(start+)`` exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import TWO_PI
from .errors import InvalidInput

PIECE_KINDS = ("constant", "affine", "sinusoid", "power")
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


# -- boundary datum --------------------------------------------------------

@dataclass
class Piece:
    """One analytic piece of g on the parameter interval [start, end).

    kinds and params:

    * ``constant``: ``{value}``
    * ``affine``: ``{a, b}``, g = a + b * (arclength from ``start``)
    * ``sinusoid``: ``{amp, freq, phase, offset}``, g = offset + amp sin(freq theta + phase)
    * ``power``: ``{amp, exponent, freq, phase, offset}``,
      g = offset + amp |sin(freq theta + phase)|**exponent
    """

    start: float
    end: float
    kind: str
    params: dict

    def __post_init__(self):
        if self.kind not in PIECE_KINDS:
            raise InvalidInput(f"unknown piece kind {self.kind!r}")
        if not self.end > self.start:
            raise InvalidInput("piece must have end > start")
        p = self.params
        need = {"constant": ("value",), "affine": ("a", "b"), "sinusoid": ("amp",),
                "power": ("amp", "exponent")}[self.kind]
        for key in need:
            if key not in p:
                raise InvalidInput(f"piece of kind {self.kind!r} needs parameter {key!r}")
        if self.kind == "power" and p["exponent"] < 1:
            raise InvalidInput("power exponent must be >= 1 for BV data")

    def value(self, theta, domain):
        th = np.asarray(theta, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.full(th.shape, float(p["value"]))
        if self.kind == "affine":
            return p["a"] + p["b"] * _arc_from(domain, self.start, th)
        arg = p.get("freq", 1.0) * th + p.get("phase", 0.0)
        if self.kind == "sinusoid":
            return p.get("offset", 0.0) + p["amp"] * np.sin(arg)
        return p.get("offset", 0.0) + p["amp"] * np.abs(np.sin(arg)) ** p["exponent"]

    def dtheta(self, theta, domain):
        """dg / dtheta."""
        th = np.asarray(theta, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.zeros(th.shape)
        if self.kind == "affine":
            return p["b"] * domain.speed(th)
        fr = p.get("freq", 1.0)
        arg = fr * th + p.get("phase", 0.0)
        if self.kind == "sinusoid":
            return p["amp"] * fr * np.cos(arg)
        s = np.sin(arg)
        e = p["exponent"]
        return p["amp"] * e * np.abs(s) ** (e - 1) * np.sign(s) * np.cos(arg) * fr

    def to_config(self):
        return {"from": self.start, "to": self.end, "kind": self.kind, "params": dict(self.params)}


def _arc_from(domain, start, theta):
    """Counterclockwise arclength from ``start`` to ``theta`` (theta >= start)."""
    th = np.asarray(theta, dtype=float)
    s0 = domain.arclength(start)
    s1 = domain.arclength(th)
    turns = np.floor(th / TWO_PI) - np.floor(start / TWO_PI)
    return s1 - s0 + turns * domain.perimeter


class BoundaryDatum:
    """Piecewise-analytic g on the boundary of ``domain``.

    Parameters
    ----------
    pieces : list of Piece
        Must tile one turn of the parameter circle without overlap.
    jumps : list of (theta, height), optional
        Declared discontinuities; checked against the piece mismatches.
    """

    def __init__(self, domain, pieces, jumps=None, tol=1e-9):
        if not pieces:
            raise InvalidInput("boundary datum needs at least one piece")
        self.domain = domain
        pcs = sorted(pieces, key=lambda q: q.start)
        for a, b in zip(pcs[:-1], pcs[1:]):
            if abs(a.end - b.start) > 1e-12:
                raise InvalidInput(f"pieces do not tile the circle near theta={a.end:.6g}")
        if abs(pcs[-1].end - pcs[0].start - TWO_PI) > 1e-9:
            raise InvalidInput("pieces must cover exactly one turn of the boundary")
        self.pieces = pcs
        self.theta0 = pcs[0].start
        computed = self._piece_jumps()
        if jumps is not None:
            declared = [(float(np.mod(t, TWO_PI)), float(hgt)) for t, hgt in jumps]
            cm = {round(t, 9): hgt for t, hgt in computed}
            for t, hgt in declared:
                key = round(t, 9)
                if key not in cm:
                    if abs(hgt) > tol:
                        raise InvalidInput(f"declared jump at {t:.6g} is not at a piece boundary")
                    continue
                if abs(cm[key] - hgt) > tol:
                    raise InvalidInput(f"declared jump {hgt:.6g} at {t:.6g} disagrees with pieces ({cm[key]:.6g})")
            for t, hgt in computed:
                if abs(hgt) > tol and not any(abs(t - d) < 1e-9 for d, _ in declared):
                    raise InvalidInput(f"undeclared jump of height {hgt:.6g} at theta={t:.6g}")
        # mismatches at rounding level (e.g. sin at 0 and 2 pi) are not jumps
        scale = max(1.0, max(abs(float(p.value(p.start, domain))) for p in pcs))
        self.jumps = [(t, hgt) for t, hgt in computed if abs(hgt) > 1e-12 * scale]

    def _piece_jumps(self):
        out = []
        n = len(self.pieces)
        for i in range(n):
            prev = self.pieces[i - 1]
            cur = self.pieces[i]
            at = cur.start
            left = float(prev.value(prev.end, self.domain))
            right = float(cur.value(at, self.domain))
            out.append((float(np.mod(at, TWO_PI)), right - left))
        return out

    def _locate(self, theta):
        th = np.asarray(theta, dtype=float)
        t = self.theta0 + np.mod(th - self.theta0, TWO_PI)
        starts = np.array([p.start for p in self.pieces])
        idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(self.pieces) - 1)
        return t, idx

    def value(self, theta):
        """g(theta); at a jump the right (counterclockwise) limit."""
        t, idx = self._locate(theta)
        out = np.empty(t.shape)
        for i, p in enumerate(self.pieces):
            m = idx == i
            if np.any(m):
                out[m] = p.value(t[m], self.domain)
        return out

    def total_variation(self, n=4096):
        tv = sum(abs(h) for _, h in self.jumps)
        for p in self.pieces:
            th = np.linspace(p.start, p.end, n)
            tv += float(np.sum(np.abs(np.diff(p.value(th, self.domain)))))
        return tv

    def range(self, n=4096):
        th = np.linspace(0.0, TWO_PI, n, endpoint=False)
        vals = [self.value(th)]
        for p in self.pieces:
            vals.append(p.value(np.linspace(p.start, p.end, 257), self.domain))
        v = np.concatenate(vals)
        return float(v.min()), float(v.max())

    def to_config(self):
        return {"pieces": [p.to_config() for p in self.pieces],
                "jumps": [{"at": t, "height": h} for t, h in self.jumps]}

    @classmethod
    def from_config(cls, domain, cfg):
        pieces = [Piece(float(q["from"]), float(q["to"]), q["kind"], dict(q.get("params", {})))
                  for q in cfg["pieces"]]
        jumps = cfg.get("jumps")
        if jumps is not None:
            jumps = [(float(j["at"]), float(j["height"])) for j in jumps]
        return cls(domain, pieces, jumps)


def indicator_arc(domain, a, b, lo=0.0, hi=1.0):
    """g = hi on the arc [a, b), lo elsewhere."""
    a, b = float(a), float(b)
    return BoundaryDatum(domain, [Piece(a, b, "constant", {"value": hi}),
                                  Piece(b, a + TWO_PI, "constant", {"value": lo})])


# -- boundary measures -----------------------------------------------------

@dataclass
class DensityPiece:
    """Density on [start, end] with an exact signed primitive.

    ``primitive(theta)`` is the signed mass between ``start`` and ``theta``.
    """

    start: float
    end: float
    density: callable
    primitive: callable

    @property
    def mass(self):
        return float(self.primitive(self.end))


@dataclass
class BoundaryMeasure:
    domain: object
    pieces: list = field(default_factory=list)
    atom_theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    atom_mass: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.atom_theta = np.mod(np.asarray(self.atom_theta, dtype=float), TWO_PI)
        self.atom_mass = np.asarray(self.atom_mass, dtype=float)

    @property
    def total_mass(self):
        return float(sum(p.mass for p in self.pieces) + self.atom_mass.sum())

    @property
    def abs_mass(self):
        """Total variation: |f| integrated over each interval of constant sign."""
        dens = sum(abs(m) for p in self.pieces for _, _, m in _sign_intervals(p))
        return float(dens + np.abs(self.atom_mass).sum())

    def density(self, theta):
        """Density part evaluated at ``theta`` (atoms excluded)."""
        th = np.mod(np.asarray(theta, dtype=float), TWO_PI)
        out = np.zeros(th.shape)
        for p in self.pieces:
            t = p.start + np.mod(th - p.start, TWO_PI)
            m = t <= p.end
            if np.any(m):
                out[m] += p.density(t[m])
        return out

    def is_zero(self):
        return self.abs_mass == 0.0

    def has_density(self):
        return any(p.mass != 0 for p in self.pieces)

    @classmethod
    def from_density(cls, domain, start, end, func, n=8193):
        """Measure with density ``func`` (per arclength) on [start, end]."""
        from scipy.interpolate import CubicHermiteSpline

        th = np.linspace(start, end, n)
        dm = func(th) * domain.speed(th)
        from scipy.integrate import cumulative_simpson

        cum = np.concatenate([[0.0], cumulative_simpson(dm, x=th)])
        prim = CubicHermiteSpline(th, cum, dm)
        return cls(domain, [DensityPiece(start, end, func, prim)])

    @classmethod
    def atoms(cls, domain, theta, mass):
        return cls(domain, [], np.atleast_1d(theta), np.atleast_1d(mass))

    def lp_norm(self, p):
        """(int |f|^p ds)^(1/p) of the density part."""
        tot = 0.0
        for pc in self.pieces:
            sub = np.linspace(pc.start, pc.end, 65)
            acc = 0.0
            for a, b in zip(sub[:-1], sub[1:]):
                x = 0.5 * (b - a) * (_GL_X + 1) + a
                f = np.abs(pc.density(x))
                acc += 0.5 * (b - a) * np.sum(_GL_W * (f ** p if np.isfinite(p) else 0) * self.domain.speed(x))
            tot += acc
        if not np.isfinite(p):
            return max((float(np.max(np.abs(pc.density(np.linspace(pc.start, pc.end, 4097)))))
                        for pc in self.pieces), default=0.0)
        return tot ** (1.0 / p)


def tangential_derivative(g: BoundaryDatum) -> BoundaryMeasure:
    """f = d g / d s: density from the smooth pieces, atoms from the jumps."""
    dom = g.domain
    pieces = []
    for p in g.pieces:
        if p.kind == "constant":
            continue
        g0 = float(p.value(p.start, dom))

        def dens(th, p=p):
            th = np.asarray(th, dtype=float)
            return p.dtheta(th, dom) / dom.speed(th)

        def prim(th, p=p, g0=g0):
            return p.value(th, dom) - g0

        pieces.append(DensityPiece(p.start, p.end, dens, prim))
    at = np.array([t for t, _ in g.jumps])
    am = np.array([h for _, h in g.jumps])
    return BoundaryMeasure(dom, pieces, at, am)


def _sign_intervals(piece, n=2049):
    """Split a density piece into maximal intervals of constant sign."""
    from scipy.optimize import brentq

    th = np.linspace(piece.start, piece.end, n)
    f = piece.density(th)
    sg = np.sign(f)
    cuts = [piece.start]
    for i in range(n - 1):
        if sg[i] != 0 and sg[i + 1] != 0 and sg[i] != sg[i + 1]:
            cuts.append(brentq(piece.density, th[i], th[i + 1], xtol=1e-15, rtol=1e-15))
        elif sg[i] == 0 and i > 0:
            cuts.append(th[i])
    cuts.append(piece.end)
    cuts = sorted(set(cuts))
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 1e-15:
            continue
        mass = float(piece.primitive(b) - piece.primitive(a))
        out.append((a, b, mass))
    return out


def split(f: BoundaryMeasure, tol=1e-9):
    """Positive and negative parts of f.

    Raises
    ------
    InvalidInput
        If the positive and negative masses differ by more than ``tol``
        (relative to the total variation when that exceeds 1).
    """
    dom = f.domain
    plus, minus = [], []
    for pc in f.pieces:
        ivs = _sign_intervals(pc)
        scale = sum(abs(m) for _, _, m in ivs)
        for a, b, mass in ivs:
            # slivers left by root finding carry only rounding-level mass
            if abs(mass) <= 1e-13 * scale:
                continue
            base = float(pc.primitive(a))
            if mass > 0:
                plus.append(DensityPiece(a, b, lambda th, pc=pc: np.maximum(pc.density(th), 0.0),
                                         lambda th, pc=pc, base=base: pc.primitive(th) - base))
            else:
                minus.append(DensityPiece(a, b, lambda th, pc=pc: np.maximum(-pc.density(th), 0.0),
                                          lambda th, pc=pc, base=base: base - pc.primitive(th)))
    am = f.atom_mass
    fp = BoundaryMeasure(dom, plus, f.atom_theta[am > 0], am[am > 0])
    fm = BoundaryMeasure(dom, minus, f.atom_theta[am < 0], -am[am < 0])
    imbalance = fp.total_mass - fm.total_mass
    if abs(imbalance) > tol * max(1.0, fp.total_mass):
        raise InvalidInput(f"mass imbalance {imbalance:.3e} between positive and negative parts")
    return fp, fm


# -- discretization -----------------------------------------------------------

@dataclass
class AtomSet:
    """Boundary atoms sorted by parameter."""

    theta: np.ndarray
    points: np.ndarray
    mass: np.ndarray

    def __len__(self):
        return len(self.theta)

    @property
    def total_mass(self):
        return float(self.mass.sum())

    @classmethod
    def build(cls, domain, theta, mass):
        theta = np.mod(np.asarray(theta, dtype=float), TWO_PI)
        mass = np.asarray(mass, dtype=float)
        order = np.argsort(theta, kind="stable")
        theta, mass = theta[order], mass[order]
        return cls(theta, domain.point(theta).reshape(-1, 2), mass)

    def to_list(self):
        return [(tuple(p), float(m)) for p, m in zip(self.points, self.mass)]


def _invert_primitive(pc, levels, sign=1.0):
    """Parameters where the (monotone) primitive reaches ``levels``."""
    lo = np.full(len(levels), pc.start)
    hi = np.full(len(levels), pc.end)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        below = sign * pc.primitive(mid) < levels
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _bins(pc, edges):
    """Masses and mass barycenters (in parameter) of bins [e_k, e_k+1]."""
    G = pc.primitive
    a, b = edges[:-1], edges[1:]
    Ga = G(a)
    mass = G(b) - Ga
    x = 0.5 * (b - a)[:, None] * (_GL_X + 1)[None, :] + a[:, None]
    integral = 0.5 * (b - a) * np.sum(_GL_W[None, :] * (G(x) - Ga[:, None]), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        bary = np.where(mass != 0, b - integral / mass, 0.5 * (a + b))
    return mass, np.clip(bary, a, b)


def _allocate(masses, budget):
    """Largest-remainder allocation with at least one atom per positive piece."""
    masses = np.asarray(masses, dtype=float)
    pos = masses > 0
    if budget < pos.sum():
        raise InvalidInput(f"atom budget too small: {pos.sum()} continuous pieces need at least one atom each")
    out = pos.astype(int)
    rest = budget - out.sum()
    if rest > 0 and masses.sum() > 0:
        share = masses / masses.sum() * rest
        base = np.floor(share).astype(int)
        out += base
        left = rest - base.sum()
        order = np.argsort(-(share - base), kind="stable")
        out[order[:left]] += 1
    return out


def discretize(m: BoundaryMeasure, n, scheme="mass", spacing=None) -> AtomSet:
    """Atomic approximation of a nonnegative boundary measure.

    Parameters
    ----------
    n : int
        Atom budget.  Intrinsic atoms are kept verbatim; the remaining
        budget is shared among density pieces in proportion to mass.
    scheme : {"mass", "arclength"}
        ``mass`` cuts each piece into equal-mass bins.  ``arclength`` cuts
        into bins of equal arclength ``spacing`` (``n`` is then ignored
        for density pieces); useful when the atoms must be dense in space.

    Returns
    -------
    AtomSet
        Atoms at the mass barycenter (in parameter) of their bin.  Empty
        bins are dropped.
    """
    dom = m.domain
    if m.atom_mass.size and m.atom_mass.min() < 0 or any(pc.mass < 0 for pc in m.pieces):
        raise InvalidInput("discretize needs a nonnegative measure")
    n_int = len(m.atom_theta)
    if n < n_int:
        raise InvalidInput(f"budget {n} is below the {n_int} intrinsic atoms")
    th = [m.atom_theta]
    ms = [m.atom_mass]
    pieces = [pc for pc in m.pieces if pc.mass > 0]
    if scheme == "mass":
        counts = _allocate([pc.mass for pc in pieces], n - n_int) if pieces else []
        for pc, c in zip(pieces, counts):
            levels = pc.mass * np.arange(1, c) / c
            edges = np.concatenate([[pc.start], _invert_primitive(pc, levels), [pc.end]])
            mass, bary = _bins(pc, edges)
            # telescoping masses keep the piece total exact
            th.append(bary)
            ms.append(mass)
    elif scheme == "arclength":
        if spacing is None or spacing <= 0:
            raise InvalidInput("arclength scheme needs a positive spacing")
        for pc in pieces:
            s0 = float(dom.arclength(pc.start))
            L = float(_arc_from(dom, pc.start, pc.end))
            c = max(1, int(np.ceil(L / spacing - 1e-9)))
            s_edges = s0 + L * np.arange(c + 1) / c
            edges = pc.start + np.mod(dom.theta_at(s_edges) - pc.start, TWO_PI)
            edges[0], edges[-1] = pc.start, pc.end
            edges = np.maximum.accumulate(edges)
            mass, bary = _bins(pc, edges)
            th.append(bary)
            ms.append(mass)
    else:
        raise InvalidInput(f"unknown scheme {scheme!r}")
    theta = np.concatenate(th) if th else np.zeros(0)
    mass = np.concatenate(ms) if ms else np.zeros(0)
    keep = mass > 0
    return AtomSet.build(dom, theta[keep], mass[keep])


def circle_w1(domain, theta_a, mass_a, measure: BoundaryMeasure, n=200001):
    """1-Wasserstein distance, along the boundary, between atoms and a measure.

    Uses the circle formula ``min_c int |F(s) - G(s) - c| ds`` with
    cumulative distribution functions on a fine arclength grid.
    """
    per = domain.perimeter
    s = np.linspace(0.0, per, n)
    th = domain.theta_at(s[:-1])
    th = np.append(th, TWO_PI)
    G = np.zeros(n)
    for pc in measure.pieces:
        t = np.clip(th, pc.start, pc.end)
        G += pc.primitive(t) - pc.primitive(pc.start)
    for t, mm in zip(measure.atom_theta, measure.atom_mass):
        G += mm * (th >= t)
    F = np.zeros(n)
    for t, mm in zip(np.mod(theta_a, TWO_PI), mass_a):
        F += mm * (th >= t)
    d = F - G
    ds = np.diff(s)
    dm = 0.5 * (d[1:] + d[:-1])
    # weighted median minimizes the L1 deviation
    order = np.argsort(dm)
    cw = np.cumsum(ds[order])
    c = dm[order][np.searchsorted(cw, 0.5 * cw[-1])]
    return float(np.sum(np.abs(dm - c) * ds))


def circle_w1_atoms(domain, theta_a, mass_a, theta_b, mass_b):
    """Boundary 1-Wasserstein distance between two atomic measures (exact)."""
    per = domain.perimeter
    sa = domain.arclength(np.mod(theta_a, TWO_PI))
    sb = domain.arclength(np.mod(theta_b, TWO_PI))
    pts = np.concatenate([sa, sb, [0.0, per]])
    jumps = np.concatenate([mass_a, -np.asarray(mass_b), [0.0, 0.0]])
    order = np.argsort(pts, kind="stable")
    pts, jumps = pts[order], jumps[order]
    d = np.cumsum(jumps)[:-1]
    ds = np.diff(pts)
    order = np.argsort(d)
    cw = np.cumsum(ds[order])
    c = d[order][np.searchsorted(cw, 0.5 * cw[-1])]
    return float(np.sum(np.abs(d - c) * ds))


# -- convexity certificate ---------------------------------------------------

@dataclass
class ConvexityReport:
    min_nu_n: float
    c_estimate: float
    violations: int
    multi_solution_pairs: int
    nonmonotone_fans: int
    near_degenerate: bool
    threshold: float
    n_pairs: int

    @property
    def passed(self):
        return self.violations == 0 and self.min_nu_n > 0

    def to_dict(self):
        return {"min_nu_n": self.min_nu_n, "c_estimate": self.c_estimate,
                "violations": self.violations, "multi_solution_pairs": self.multi_solution_pairs,
                "nonmonotone_fans": self.nonmonotone_fans, "near_degenerate": self.near_degenerate,
                "threshold": self.threshold, "n_pairs": self.n_pairs, "pass": self.passed}


def convexity_certificate(domain, w, n_samples=24, threshold=1e-3, fan_size=48):
    """Sampled geodesic-convexity certificate.

    Geodesics are computed between all pairs of ``n_samples`` boundary
    points equally spaced in arclength.  For each pair the initial unit
    direction ``nu`` at the source is compared with the inward normal
    ``n`` and the weighted length ``tau``.

    Returns
    -------
    ConvexityReport
        ``min_nu_n`` is the smallest ``nu . n``; ``c_estimate`` is the
        largest ``c`` with ``nu . n >= c tau`` on all sampled pairs.
        ``violations`` counts pairs with ``nu . n <= 0``, with no interior
        geodesic or with several geodesic solutions, plus fans whose exit parameter is not
        monotone in the shooting angle.
    """
    from .metric import boundary_pair_angles, exit_fan

    s = domain.perimeter * np.arange(n_samples) / n_samples
    th = domain.theta_at(s)
    I, J = np.nonzero(~np.eye(n_samples, dtype=bool))
    thx, thy = th[I], th[J]
    nonmono = 0
    if w.is_constant:
        X, Y = domain.point(thx), domain.point(thy)
        d = Y - X
        tau_e = np.hypot(d[:, 0], d[:, 1])
        nu = d / tau_e[:, None]
        nu_n = np.sum(nu * domain.inward_normal(thx), axis=1)
        tau = w.k_min * tau_e
        nsol = np.ones(len(I), dtype=int)
    else:
        beta, tau, nsol = boundary_pair_angles(w, domain, thx, thy, mode="fan", fan_size=fan_size, strict=False)
        nu_n = np.sin(beta)
        fans = exit_fan(w, domain, th, fan_size)
        nonmono = sum(0 if np.all(np.diff(f[1]) > 0) else 1 for f in fans)
    found = nsol > 0
    ratio = nu_n[found] / tau[found]
    multi = int(np.sum(nsol > 1))
    viol = int(np.sum(nu_n[found] <= 0)) + int(np.sum(~found)) + multi + nonmono
    c = float(ratio.min()) if ratio.size else float("nan")
    min_nu_n = float(nu_n[found].min()) if found.any() else float("nan")
    return ConvexityReport(min_nu_n, c, viol, multi, nonmono, not c >= threshold, threshold, len(I))
