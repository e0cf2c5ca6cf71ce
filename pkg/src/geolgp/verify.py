"""Numerical checks of the structural and L^p results, and the JSON report."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .grids import ScalarGrid

LADDER_BOUND = 1.5


@dataclass
class Check:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "pass": bool(self.passed), "metrics": _plain(self.metrics)}


def _plain(obj):
    """Convert numpy scalars/arrays to JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class Report:
    checks: list
    instance: dict
    config_hash: str
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_dict(self):
        out = {"checks": [c.to_dict() for c in self.checks], "instance": _plain(self.instance),
               "config_hash": self.config_hash}
        out.update(_plain(self.extra))
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# -- Jacobian lower bound ------------------------------------------------------

def check_jacobian_bound(fan, t_cap=0.95):
    """Smallest C with J(s,t) >= (1-t)^C k^-1 tau (nu . n) on the sampled fan.

    Only samples with ``0 < t <= t_cap`` enter the estimate.  ``min_ratio``
    is the smallest ``J / (k^-1 tau nu.n)`` and ``t0_error`` the largest
    relative deviation of the ``t = 0`` column from 1 (when sampled).
    """
    pred = fan.t0_prediction()
    J = np.asarray(fan.jacobian, dtype=float)
    t = np.asarray(fan.t, dtype=float)
    R = J / pred[:, None]
    use = (t > 0) & (t <= t_cap)
    interior = t < 1
    min_J = float(J[:, interior].min())
    metrics = {"min_J": min_J, "min_ratio": float(R[:, use].min()) if use.any() else float("nan"),
               "t_cap": t_cap}
    z = np.flatnonzero(t == 0)
    if z.size:
        metrics["t0_error"] = float(np.max(np.abs(R[:, z[0]] - 1.0)))
    if min_J <= 0 or not use.any():
        metrics["C_estimate"] = float("inf")
        return Check("jacobian_bound", False, metrics)
    Ru = R[:, use]
    lt = np.log1p(-t[use])[None, :]
    with np.errstate(divide="ignore"):
        need = np.log(Ru) / lt  # C >= log R / log(1 - t)
    C = max(0.0, float(np.max(need)))
    metrics["C_estimate"] = C
    return Check("jacobian_bound", bool(np.isfinite(C)), metrics)


# -- L^p ratios and refinement ladders ------------------------------------------

def boundary_lp(f, p):
    """||f||_p on the boundary; total variation mass for p = 1."""
    if p == 1:
        return f.abs_mass
    if f.atom_mass.size and np.any(f.atom_mass != 0):
        raise InvalidInput("atoms have no L^p density for p > 1")
    return f.lp_norm(p)


def check_lp_ratio(sigma: ScalarGrid, f, p):
    """||sigma||_p / ||f||_p."""
    from .density import lp_norm

    return lp_norm(sigma, p)["norm"] / boundary_lp(f, p)


def ladder(values, bound=LADDER_BOUND):
    """Boundedness of a refinement sequence: last / first below ``bound``."""
    v = np.asarray(values, dtype=float)
    r = float(v[-1] / v[0]) if v[0] != 0 else float("inf")
    return {"values": v.tolist(), "last_over_first": r, "bounded": bool(r < bound),
            "increasing": bool(np.all(np.diff(v) > 0))}


def check_holder_case(norms_by_p, alpha):
    """Boundedness report for ||sigma_h||_p ladders of a C^{1,alpha} datum.

    ``norms_by_p`` maps p to the ladder of norms over refinements.  The
    critical exponent is ``2 / (1 - alpha)`` (infinite for alpha = 1).
    """
    pc = float("inf") if alpha >= 1 else 2.0 / (1.0 - alpha)
    rows = {str(p): ladder(v) for p, v in norms_by_p.items()}
    ok = all(r["bounded"] for p, r in zip(norms_by_p, rows.values()) if p <= pc)
    return Check("holder_case", ok, {"alpha": alpha, "critical_p": pc, "ladders": rows})


# -- dual field -------------------------------------------------------------------

def check_dual_equivalence(psi: ScalarGrid, g, w, domain, cost, n_boundary=None, slack=1e-3,
                           max_fraction=0.01):
    """Rotated potential gradient z = R_{-pi/2} grad psi as an LGP dual field.

    Reports the cellwise ``|z| / k`` (interior cells), the discrete
    divergence of z, and the boundary pairing ``int (z . n) g ds`` with the
    inward normal n, which equals ``int psi d(dg/ds)``, the transport cost.
    """
    spec = psi.spec
    h = spec.h
    P = psi.values
    gy, gx = np.gradient(P, h)
    zx, zy = gy, -gx
    mask = spec.mask(domain)
    inner = mask.copy()
    inner[1:-1, 1:-1] &= mask[:-2, 1:-1] & mask[2:, 1:-1] & mask[1:-1, :-2] & mask[1:-1, 2:]
    inner[0, :] = inner[-1, :] = False
    inner[:, 0] = inner[:, -1] = False
    kv = w.value(spec.centers()[inner])
    ratio = np.hypot(zx[inner], zy[inner]) / kv
    frac = float(np.mean(ratio > 1 + slack)) if ratio.size else 0.0
    dzx = np.gradient(zx, h, axis=1)
    dzy = np.gradient(zy, h, axis=0)
    div = np.abs(dzx + dzy)[inner]
    per = domain.perimeter
    n = n_boundary or max(512, int(np.ceil(8 * per / h)))
    s = per * np.arange(n + 1) / n
    th = domain.theta_at(np.mod(s, per))
    ps = psi.sample(domain.point(th))
    mid = domain.theta_at(np.mod(0.5 * (s[1:] + s[:-1]), per))
    # int (z . n_in) g ds = -int (d psi / ds) g ds
    pairing = float(-np.sum(np.diff(ps) * g.value(mid)))
    gap = cost - pairing
    rel = abs(gap) / max(abs(cost), 1e-300)
    metrics = {"max_z_over_k": float(ratio.max()) if ratio.size else 0.0,
               "fraction_above": frac, "max_div_z": float(div.max()) if div.size else 0.0,
               "pairing": pairing, "cost": cost, "gap": gap, "relative_gap": rel}
    return Check("dual_equivalence", bool(frac <= max_fraction and rel <= 0.02), metrics)


# -- stability ---------------------------------------------------------------------

def barycentric_map(plan):
    """Mass-weighted mean target position for each source atom."""
    n = len(plan.sources)
    m = np.bincount(plan.src, plan.mass, minlength=n)
    out = np.zeros((n, 2))
    for c in range(2):
        out[:, c] = np.bincount(plan.src, plan.mass * plan.targets.points[plan.dst, c], minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        return out / m[:, None]


def check_stability(runs):
    """Convergence table for a refinement sequence.

    Parameters
    ----------
    runs : list of dict
        Each with ``n``, ``cost``, ``sigma``, ``sigma_plus``, ``sigma_minus``
        (ScalarGrid on a common grid) and ``plan``; the source atoms must be
        the same across runs.
    """
    rows = []
    for a, b in zip(runs[:-1], runs[1:]):
        area = a["sigma"].spec.h ** 2
        ta, tb = barycentric_map(a["plan"]), barycentric_map(b["plan"])
        disp = np.hypot(*(ta - tb).T)
        rows.append({"n": [a["n"], b["n"]],
                     "cost_diff": abs(a["cost"] - b["cost"]),
                     "sigma_l1": float(np.sum(np.abs(a["sigma"].values - b["sigma"].values)) * area),
                     "sigma_plus_l1": float(np.sum(np.abs(a["sigma_plus"].values - b["sigma_plus"].values)) * area),
                     "sigma_minus_l1": float(np.sum(np.abs(a["sigma_minus"].values - b["sigma_minus"].values)) * area),
                     "max_displacement": float(np.nanmax(disp)) if disp.size else 0.0})
    mono = {}
    for key in ("cost_diff", "sigma_l1"):
        v = [r[key] for r in rows]
        mono[key] = bool(all(y <= x for x, y in zip(v[:-1], v[1:])))
    return Check("stability", all(mono.values()), {"table": rows, "monotone": mono})


def summarize_convexity(report):
    return Check("convexity", report.passed, report.to_dict())
