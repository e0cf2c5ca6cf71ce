"""Planar domains with a counterclockwise boundary parametrization.

Every bounded domain exposes a level function that is negative inside,
a bounding box and a boundary curve ``alpha(theta)`` for ``theta`` in
``[0, 2*pi)``.  The curve is traversed counterclockwise, so the inward
normal is the unit tangent rotated by ``+pi/2``.
"""
from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.integrate import cumulative_simpson

from .errors import DomainError

TWO_PI = 2.0 * np.pi


def rot_plus(v):
    """Rotate vectors in the last axis by +pi/2: (a, b) -> (-b, a)."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def rot_minus(v):
    """Rotate vectors in the last axis by -pi/2: (a, b) -> (b, -a)."""
    v = np.asarray(v, dtype=float)
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


class Domain:
    """Base class for bounded planar domains.

    Subclasses implement ``level`` and ``bbox``.  Domains with a smooth
    boundary also implement ``curve`` (position and derivative with
    respect to the parameter) and ``param_of``.
    """

    kind = "abstract"
    has_boundary_curve = False

    def level(self, pts):  # pragma: no cover - abstract
        raise NotImplementedError

    def bbox(self):  # pragma: no cover - abstract
        raise NotImplementedError

    def contains(self, pts, tol=0.0):
        return self.level(pts) <= tol

    def diameter(self):
        x0, x1, y0, y1 = self.bbox()
        return float(np.hypot(x1 - x0, y1 - y0))

    def ray_exit(self, x, d):
        """Euclidean distance from ``x`` along unit direction ``d`` to the exit.

        Works for convex domains by bracketing and bisection.  Returns 0
        for rays that leave immediately (tangent or outward).
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = np.atleast_2d(np.asarray(d, dtype=float))
        n = max(len(x), len(d))
        x = np.broadcast_to(x, (n, 2))
        d = np.broadcast_to(d, (n, 2))
        diam = 2.0 * self.diameter()
        ts = np.linspace(0.0, diam, 257)[1:]
        lv = self.level(x[:, None, :] + ts[None, :, None] * d[:, None, :])
        inside = lv < 0
        # for convex domains the inside set along a line is an interval
        lo = np.zeros(n)
        hi = np.zeros(n)
        ok = inside.any(axis=1)
        last_in = np.where(ok, inside.shape[1] - 1 - np.argmax(inside[:, ::-1], axis=1), 0)
        lo[ok] = ts[last_in[ok]]
        hi[ok] = np.where(last_in[ok] + 1 < len(ts), ts[np.minimum(last_in[ok] + 1, len(ts) - 1)], diam)
        # a ray that is inside only after the first sample is tangent-ish;
        # keep the first-sample bracket from the start point in that case
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            inside_mid = self.level(x + mid[:, None] * d) < 0
            lo = np.where(ok & inside_mid, mid, lo)
            hi = np.where(ok & ~inside_mid, mid, hi)
        out = 0.5 * (lo + hi)
        out[~ok] = 0.0
        return out


class CurveDomain(Domain):
    """Domain bounded by a smooth closed curve parametrized on [0, 2*pi)."""

    has_boundary_curve = True
    _table_size = 4096

    def curve(self, theta):  # pragma: no cover - abstract
        """Return (points, d points / d theta) for parameters ``theta``."""
        raise NotImplementedError

    def param_of(self, pts):  # pragma: no cover - abstract
        raise NotImplementedError

    # -- arclength -------------------------------------------------------
    def _arclength_setup(self):
        if getattr(self, "_s_of_theta", None) is not None:
            return
        th = np.linspace(0.0, TWO_PI, self._table_size + 1)
        _, dp = self.curve(th)
        speed = np.hypot(dp[:, 0], dp[:, 1])
        s = np.concatenate([[0.0], cumulative_simpson(speed, x=th)])
        if np.any(np.diff(s) <= 0):
            raise DomainError("arclength table is not strictly increasing")
        self._theta_table = th
        self._s_table = s
        self._s_of_theta = CubicHermiteSpline(th, s, speed)
        self._theta_of_s = CubicHermiteSpline(s, th, 1.0 / speed)
        self.perimeter = float(s[-1])

    @property
    def arclength_table(self):
        self._arclength_setup()
        return self._theta_table, self._s_table

    def arclength(self, theta):
        """Counterclockwise arclength from parameter 0 to ``theta`` (mod 2*pi)."""
        self._arclength_setup()
        return self._s_of_theta(np.mod(theta, TWO_PI))

    def theta_at(self, s):
        self._arclength_setup()
        return self._theta_of_s(np.mod(s, self.perimeter))

    def speed(self, theta):
        _, dp = self.curve(theta)
        return np.hypot(dp[..., 0], dp[..., 1])

    def point(self, theta):
        return self.curve(theta)[0]

    def tangent(self, theta):
        """Unit counterclockwise tangent."""
        _, dp = self.curve(theta)
        return dp / np.hypot(dp[..., 0], dp[..., 1])[..., None]

    def inward_normal(self, theta):
        return rot_plus(self.tangent(theta))

    def outward_normal(self, theta):
        return rot_minus(self.tangent(theta))

    def centroid(self):
        th = np.linspace(0.0, TWO_PI, 2049)[:-1]
        return self.point(th).mean(axis=0)

    def boundary_distance(self, pts, n=4096):
        """Approximate Euclidean distance from ``pts`` to the boundary curve."""
        from scipy.spatial import cKDTree

        if getattr(self, "_bd_tree", None) is None:
            th = np.linspace(0.0, TWO_PI, n, endpoint=False)
            self._bd_tree = cKDTree(self.point(th))
        pts = np.asarray(pts, dtype=float)
        d, _ = self._bd_tree.query(pts.reshape(-1, 2))
        return d.reshape(pts.shape[:-1])


class Circle(CurveDomain):
    kind = "circle"

    def __init__(self, radius=1.0, center=(0.0, 0.0)):
        if radius <= 0:
            raise DomainError("circle radius must be positive")
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)
        self._arclength_setup()

    def level(self, pts):
        p = np.asarray(pts, dtype=float) - self.center
        return (p[..., 0] ** 2 + p[..., 1] ** 2) / self.radius - self.radius

    def bbox(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cx + r, cy - r, cy + r)

    def curve(self, theta):
        theta = np.asarray(theta, dtype=float)
        c, s = np.cos(theta), np.sin(theta)
        p = self.center + self.radius * np.stack([c, s], axis=-1)
        dp = self.radius * np.stack([-s, c], axis=-1)
        return p, dp

    def param_of(self, pts):
        p = np.asarray(pts, dtype=float) - self.center
        return np.mod(np.arctan2(p[..., 1], p[..., 0]), TWO_PI)

    def arclength(self, theta):
        return self.radius * np.mod(theta, TWO_PI)

    def theta_at(self, s):
        return np.mod(np.asarray(s, dtype=float) / self.radius, TWO_PI)

    def ray_exit(self, x, d):
        x = np.atleast_2d(np.asarray(x, dtype=float)) - self.center
        d = np.atleast_2d(np.asarray(d, dtype=float))
        b = np.sum(x * d, axis=-1)
        c = np.sum(x * x, axis=-1) - self.radius ** 2
        disc = np.maximum(b * b - c, 0.0)
        t = -b + np.sqrt(disc)
        return np.maximum(t, 0.0)

    def to_config(self):
        return {"kind": "circle", "radius": self.radius, "center": self.center.tolist()}


class Ellipse(CurveDomain):
    """Axis-aligned ellipse; parameter is the eccentric angle."""

    kind = "ellipse"

    def __init__(self, a, b, center=(0.0, 0.0)):
        if a <= 0 or b <= 0:
            raise DomainError("ellipse semi-axes must be positive")
        self.a = float(a)
        self.b = float(b)
        self.center = np.asarray(center, dtype=float)
        self._arclength_setup()

    def level(self, pts):
        p = np.asarray(pts, dtype=float) - self.center
        # scaled so that |grad level| is about 1 near the boundary
        m = min(self.a, self.b)
        return m * ((p[..., 0] / self.a) ** 2 + (p[..., 1] / self.b) ** 2 - 1.0)

    def bbox(self):
        cx, cy = self.center
        return (cx - self.a, cx + self.a, cy - self.b, cy + self.b)

    def curve(self, theta):
        theta = np.asarray(theta, dtype=float)
        c, s = np.cos(theta), np.sin(theta)
        p = self.center + np.stack([self.a * c, self.b * s], axis=-1)
        dp = np.stack([-self.a * s, self.b * c], axis=-1)
        return p, dp

    def param_of(self, pts):
        p = np.asarray(pts, dtype=float) - self.center
        return np.mod(np.arctan2(p[..., 1] / self.b, p[..., 0] / self.a), TWO_PI)

    def ray_exit(self, x, d):
        x = np.atleast_2d(np.asarray(x, dtype=float)) - self.center
        d = np.atleast_2d(np.asarray(d, dtype=float))
        sx = x / [self.a, self.b]
        sd = d / [self.a, self.b]
        A = np.sum(sd * sd, axis=-1)
        B = np.sum(sx * sd, axis=-1)
        C = np.sum(sx * sx, axis=-1) - 1.0
        disc = np.maximum(B * B - A * C, 0.0)
        t = (-B + np.sqrt(disc)) / A
        return np.maximum(t, 0.0)

    def to_config(self):
        return {"kind": "ellipse", "a": self.a, "b": self.b, "center": self.center.tolist()}


class SmoothPolar(CurveDomain):
    """Star-shaped domain r < R(theta), R a periodic cubic spline.

    Parameters
    ----------
    radii : array_like
        Samples of R at equally spaced angles ``2*pi*j/len(radii)``.
    """

    kind = "smooth-polar"

    def __init__(self, radii, center=(0.0, 0.0)):
        radii = np.asarray(radii, dtype=float)
        if radii.ndim != 1 or len(radii) < 3 or np.any(radii <= 0):
            raise DomainError("smooth-polar needs at least 3 positive radius samples")
        self.radii = radii
        self.center = np.asarray(center, dtype=float)
        th = np.linspace(0.0, TWO_PI, len(radii) + 1)
        self._R = CubicSpline(th, np.append(radii, radii[0]), bc_type="periodic")
        self._dR = self._R.derivative()
        self._arclength_setup()

    def R(self, theta):
        return self._R(np.mod(theta, TWO_PI))

    def level(self, pts):
        p = np.asarray(pts, dtype=float) - self.center
        r = np.hypot(p[..., 0], p[..., 1])
        return r - self.R(np.arctan2(p[..., 1], p[..., 0]))

    def bbox(self):
        th = np.linspace(0.0, TWO_PI, 4097)
        p = self.point(th)
        return (p[:, 0].min(), p[:, 0].max(), p[:, 1].min(), p[:, 1].max())

    def curve(self, theta):
        theta = np.mod(np.asarray(theta, dtype=float), TWO_PI)
        r = self._R(theta)
        dr = self._dR(theta)
        c, s = np.cos(theta), np.sin(theta)
        p = self.center + np.stack([r * c, r * s], axis=-1)
        dp = np.stack([dr * c - r * s, dr * s + r * c], axis=-1)
        return p, dp

    def param_of(self, pts):
        p = np.asarray(pts, dtype=float) - self.center
        return np.mod(np.arctan2(p[..., 1], p[..., 0]), TWO_PI)

    def to_config(self):
        return {"kind": "smooth-polar", "radii": self.radii.tolist(), "center": self.center.tolist()}


class Box(Domain):
    """Axis-aligned rectangle.  Has no smooth boundary curve; used for
    distance queries between interior points."""

    kind = "box"

    def __init__(self, xmin, xmax, ymin, ymax):
        if not (xmax > xmin and ymax > ymin):
            raise DomainError("empty box")
        self._bbox = (float(xmin), float(xmax), float(ymin), float(ymax))

    def level(self, pts):
        p = np.asarray(pts, dtype=float)
        x0, x1, y0, y1 = self._bbox
        return np.maximum(np.maximum(x0 - p[..., 0], p[..., 0] - x1), np.maximum(y0 - p[..., 1], p[..., 1] - y1))

    def bbox(self):
        return self._bbox

    def to_config(self):
        x0, x1, y0, y1 = self._bbox
        return {"kind": "box", "xmin": x0, "xmax": x1, "ymin": y0, "ymax": y1}


def domain_from_config(cfg):
    kind = cfg.get("kind")
    center = cfg.get("center", (0.0, 0.0))
    if kind == "circle":
        return Circle(cfg.get("radius", 1.0), center)
    if kind == "ellipse":
        return Ellipse(cfg["a"], cfg["b"], center)
    if kind == "smooth-polar":
        return SmoothPolar(cfg["radii"], center)
    if kind == "box":
        return Box(cfg["xmin"], cfg["xmax"], cfg["ymin"], cfg["ymax"])
    raise DomainError(f"unknown domain kind {kind!r}")
