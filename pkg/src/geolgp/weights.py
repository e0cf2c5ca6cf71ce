"""Conformal weights k(x) defining the metric k(x)|dx|."""
from __future__ import annotations

import numpy as np

from .errors import DomainError, InvalidInput


class ConformalWeight:
    """Positive weight with gradient access.

    Subclasses provide ``_value`` and ``_gradient`` on arrays of points of
    shape ``(..., 2)``.  When ``bounds`` is set, queries outside the box
    ``(xmin, xmax, ymin, ymax)`` raise DomainError.
    """

    family = "abstract"
    is_constant = False

    def __init__(self, k_min, k_max, lipschitz_grad_bound, bounds=None):
        if not (0 < k_min <= k_max < np.inf):
            raise InvalidInput(f"weight bounds must satisfy 0 < k_min <= k_max, got {k_min}, {k_max}")
        self.k_min = float(k_min)
        self.k_max = float(k_max)
        self.lipschitz_grad_bound = float(lipschitz_grad_bound)
        self.bounds = bounds

    def _check(self, pts):
        pts = np.asarray(pts, dtype=float)
        if self.bounds is not None:
            x0, x1, y0, y1 = self.bounds
            tol = 1e-9 * max(1.0, x1 - x0, y1 - y0)
            if (np.any(pts[..., 0] < x0 - tol) or np.any(pts[..., 0] > x1 + tol)
                    or np.any(pts[..., 1] < y0 - tol) or np.any(pts[..., 1] > y1 + tol)):
                raise DomainError("weight queried outside its bounding box")
        return pts

    def value(self, pts):
        return self._value(self._check(pts))

    def gradient(self, pts):
        return self._gradient(self._check(pts))

    def __call__(self, pts):
        return self.value(pts)

    def with_bounds(self, bounds):
        """Copy of this weight restricted to a query box."""
        import copy

        w = copy.copy(self)
        w.bounds = None if bounds is None else tuple(float(b) for b in bounds)
        return w

    def scaled(self, c):  # pragma: no cover - abstract
        raise NotImplementedError


def eval_weight(w, x):
    """Value and gradient of ``w`` at a single point."""
    x = np.asarray(x, dtype=float)
    return float(w.value(x)), np.asarray(w.gradient(x), dtype=float)


class ConstantWeight(ConformalWeight):
    family = "constant"
    is_constant = True

    def __init__(self, a, bounds=None):
        super().__init__(a, a, 0.0, bounds)
        self.a = float(a)

    def _value(self, pts):
        return np.full(pts.shape[:-1], self.a)

    def _gradient(self, pts):
        return np.zeros(pts.shape)

    def scaled(self, c):
        return ConstantWeight(self.a * c, self.bounds)

    def to_config(self):
        return {"family": "constant", "a": self.a}


class RadialBumpWeight(ConformalWeight):
    """k(x) = a + b * exp(-|x - center|^2 / width)."""

    family = "radial-bump"

    def __init__(self, a, b, center=(0.0, 0.0), width=1.0, bounds=None):
        if width <= 0:
            raise InvalidInput("bump width must be positive")
        lo, hi = (a, a + b) if b >= 0 else (a + b, a)
        if lo <= 0:
            raise InvalidInput("radial bump weight must stay positive")
        # |D^2 exp(-r^2/w)| <= 2/w
        super().__init__(lo, hi, 2.0 * abs(b) / width, bounds)
        self.a, self.b, self.width = float(a), float(b), float(width)
        self.center = np.asarray(center, dtype=float)

    def _bump(self, pts):
        d = pts - self.center
        r2 = d[..., 0] ** 2 + d[..., 1] ** 2
        return d, np.exp(-r2 / self.width)

    def _value(self, pts):
        _, e = self._bump(pts)
        return self.a + self.b * e

    def _gradient(self, pts):
        d, e = self._bump(pts)
        return (-2.0 * self.b / self.width * e)[..., None] * d

    def value_and_log_gradient(self, pts):
        d, e = self._bump(pts)
        k = self.a + self.b * e
        return k, (-2.0 * self.b / self.width * e / k)[..., None] * d

    def scaled(self, c):
        return RadialBumpWeight(self.a * c, self.b * c, self.center, self.width, self.bounds)

    def to_config(self):
        return {"family": "radial-bump", "a": self.a, "b": self.b,
                "center": self.center.tolist(), "width": self.width}


class GridWeight(ConformalWeight):
    """Bilinear interpolation of nodal samples.

    Parameters
    ----------
    samples : ndarray, shape (ny, nx)
        Values at nodes ``(x0 + i*h, y0 + j*h)``.
    origin : (x0, y0)
    h : float
        Node spacing.

    The gradient is the bilinear interpolant of centered nodal
    differences (one-sided at the edges), so it is continuous and
    second-order accurate for smooth underlying weights.
    """

    family = "bilinear-grid"

    def __init__(self, samples, origin, h, bounds=None):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 2 or min(samples.shape) < 2:
            raise InvalidInput("grid weight needs at least 2x2 samples")
        if not np.all(np.isfinite(samples)) or samples.min() <= 0:
            raise InvalidInput("grid weight samples must be finite and positive")
        if h <= 0:
            raise InvalidInput("grid weight spacing must be positive")
        self.samples = samples
        self.origin = np.asarray(origin, dtype=float)
        self.h = float(h)
        gy, gx = np.gradient(samples, self.h, edge_order=2)
        self._gx, self._gy = gx, gy
        # per-cell bilinear coefficients of (k, k_x, k_y): c0 + c1 fx + c2 fy + c3 fx fy
        st = np.stack([samples, gx, gy], axis=-1)
        a, b, c, d = st[:-1, :-1], st[:-1, 1:], st[1:, :-1], st[1:, 1:]
        self._coef = np.stack([a, b - a, c - a, a - b - c + d], axis=-2).reshape(-1, 12)
        hxx = np.gradient(gx, self.h, axis=1)
        hyy = np.gradient(gy, self.h, axis=0)
        hxy = np.gradient(gx, self.h, axis=0)
        d2 = float(np.max(np.abs(hxx) + np.abs(hyy) + 2 * np.abs(hxy)))
        ny, nx = samples.shape
        box = (self.origin[0], self.origin[0] + (nx - 1) * self.h,
               self.origin[1], self.origin[1] + (ny - 1) * self.h)
        super().__init__(samples.min(), samples.max(), d2, box if bounds is None else bounds)

    def _interp(self, arr, pts):
        ny, nx = arr.shape
        gx = np.clip((pts[..., 0] - self.origin[0]) / self.h, 0.0, nx - 1.0)
        gy = np.clip((pts[..., 1] - self.origin[1]) / self.h, 0.0, ny - 1.0)
        i0 = np.minimum(np.floor(gx).astype(np.int64), nx - 2)
        j0 = np.minimum(np.floor(gy).astype(np.int64), ny - 2)
        fx = gx - i0
        fy = gy - j0
        return ((1 - fx) * (1 - fy) * arr[j0, i0] + fx * (1 - fy) * arr[j0, i0 + 1]
                + (1 - fx) * fy * arr[j0 + 1, i0] + fx * fy * arr[j0 + 1, i0 + 1])

    def _value(self, pts):
        return self._interp(self.samples, pts)

    def value_and_log_gradient(self, pts):
        """k and grad(k) / k from one bilinear lookup (used by the geodesic ODE)."""
        pts = self._check(pts)
        ny, nx = self.samples.shape
        gx = np.clip((pts[..., 0] - self.origin[0]) / self.h, 0.0, nx - 1.0)
        gy = np.clip((pts[..., 1] - self.origin[1]) / self.h, 0.0, ny - 1.0)
        i0 = np.minimum(gx.astype(np.int64), nx - 2)
        j0 = np.minimum(gy.astype(np.int64), ny - 2)
        fx = gx - i0
        fy = gy - j0
        cf = self._coef[j0 * (nx - 1) + i0].reshape(pts.shape[:-1] + (4, 3))
        kg = cf[..., 0, :] + fx[..., None] * cf[..., 1, :] + fy[..., None] * (cf[..., 2, :] + fx[..., None] * cf[..., 3, :])
        return kg[..., 0], kg[..., 1:] / kg[..., :1]

    def _gradient(self, pts):
        return np.stack([self._interp(self._gx, pts), self._interp(self._gy, pts)], axis=-1)

    def scaled(self, c):
        return GridWeight(self.samples * c, self.origin, self.h, self.bounds)

    @classmethod
    def sample_function(cls, func, x0, y0, h, nx, ny):
        xs = x0 + h * np.arange(nx)
        ys = y0 + h * np.arange(ny)
        X, Y = np.meshgrid(xs, ys)
        return cls(func(np.stack([X, Y], axis=-1)), (x0, y0), h)

    @classmethod
    def from_csv(cls, path):
        """Read ``nx,ny,x0,y0,h`` followed by row-major samples (x fastest).

        The first line may be the literal column names, in which case the
        numbers follow on the next line.
        """
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        if not lines:
            raise InvalidInput("empty weight file")
        head = lines[0]
        if head.replace(" ", "").lower() == "nx,ny,x0,y0,h":
            head, body = lines[1], lines[2:]
        else:
            body = lines[1:]
        try:
            nx, ny, x0, y0, h = (float(t) for t in head.split(","))
            vals = np.array([float(t) for ln in body for t in ln.split(",") if t.strip()])
        except ValueError as exc:
            raise InvalidInput(f"bad weight file: {exc}") from None
        nx, ny = int(nx), int(ny)
        if vals.size != nx * ny:
            raise InvalidInput(f"expected {nx * ny} samples, found {vals.size}")
        return cls(vals.reshape(ny, nx), (x0, y0), h)

    def to_csv(self, path):
        ny, nx = self.samples.shape
        with open(path, "w", newline="\n") as fh:
            fh.write("nx,ny,x0,y0,h\n")
            fh.write(f"{nx},{ny},{float(self.origin[0])!r},{float(self.origin[1])!r},{self.h!r}\n")
            for row in self.samples:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    def to_config(self):
        return {"family": "bilinear-grid", "origin": self.origin.tolist(), "h": self.h,
                "shape": list(self.samples.shape)}


def weight_from_config(cfg, base_dir=None):
    import os

    fam = cfg.get("family")
    if fam == "constant":
        return ConstantWeight(cfg.get("a", 1.0))
    if fam == "radial-bump":
        return RadialBumpWeight(cfg["a"], cfg["b"], cfg.get("center", (0.0, 0.0)), cfg.get("width", 1.0))
    if fam == "bilinear-grid":
        path = cfg["path"]
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return GridWeight.from_csv(path)
    raise InvalidInput(f"unknown weight family {fam!r}")
