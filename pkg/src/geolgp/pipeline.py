"""End-to-end solve: datum -> transport -> density -> u, plus run artifacts."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import verify
from .boundary import BoundaryDatum, convexity_certificate, discretize, split, tangential_derivative
from .density import assemble_density, assemble_flow, divergence_residual, lp_norm
from .domain import TWO_PI, domain_from_config
from .errors import GeoLGPError
from .grids import GridSpec, ScalarGrid, write_csv, write_pgm
from .metric import jacobian_fan
from .reconstruct import contour_distance, flow_to_u, level_set_hausdorff, ray_sweep_u, weighted_tv
from .transport import (PairCost, build_rays, cost_matrix, interior_crossings, potential_from_plan,
                        solve_lp, solve_noncrossing)
from .weights import weight_from_config


@dataclass
class Instance:
    domain: object
    weight: object
    datum: BoundaryDatum

    @classmethod
    def from_config(cls, cfg, base_dir=None):
        dom = domain_from_config(cfg["domain"])
        w = weight_from_config(cfg["weight"], base_dir)
        g = BoundaryDatum.from_config(dom, cfg["boundary_datum"])
        return cls(dom, w, g)


@dataclass
class Solution:
    """Everything computed for one instance on one grid."""

    instance: Instance
    spec: GridSpec
    f_plus: object
    f_minus: object
    sources: object
    targets: object
    plan: object
    cost: object = None
    lp_plan: object = None
    potential: object = None
    rays: object = None
    sigma: ScalarGrid = None
    sigma_plus: ScalarGrid = None
    sigma_minus: ScalarGrid = None
    flow: object = None
    u_flow: object = None
    u_rays: object = None
    certificate: object = None
    timings: dict = field(default_factory=dict)


def atoms_for(f_plus, f_minus, n_source, n_target, scheme="mass", spacing=None):
    return (discretize(f_plus, n_source, scheme, spacing), discretize(f_minus, n_target, scheme, spacing))


def solve(inst: Instance, spec: GridSpec, n_source, n_target, scheme="mass", spacing=None,
          solver="noncrossing", full_costs=True, with_lp=True, potential=True, reconstruct=True,
          tau_split=0.5, n_points=256, mode="direct", certificate=None, stages=None):
    """Run the pipeline.

    Parameters
    ----------
    full_costs : bool
        Build the full cost matrix (needed by the LP and the potential).
        Without it the non-crossing solver evaluates only the pairs it uses.
    stages : dict, optional
        Filled in as stages complete, so callers keep partial results when
        a later stage raises.
    """
    dom, w = inst.domain, inst.weight
    st = {} if stages is None else stages
    f = tangential_derivative(inst.datum)
    fp, fm = split(f)
    S, T = atoms_for(fp, fm, n_source, n_target, scheme, spacing)
    sol = Solution(inst, spec, fp, fm, S, T, None, certificate=certificate)
    st["solution"] = sol
    if full_costs:
        sol.cost = cost_matrix(w, dom, S, T, mode)
        cost = sol.cost
    else:
        cost = PairCost(w, dom, S, T, mode)
    if solver == "lp":
        sol.plan = solve_lp(S, T, sol.cost)
        sol.lp_plan = sol.plan
    else:
        sol.plan = solve_noncrossing(S, T, cost, certificate)
        if with_lp and full_costs:
            sol.lp_plan = solve_lp(S, T, sol.cost)
    if potential and full_costs:
        src = sol.plan if sol.plan.duals is not None or sol.lp_plan is None else sol.lp_plan
        sol.potential = potential_from_plan(src, sol.cost, w, dom, spec)
    sol.rays = build_rays(sol.plan, w, dom, n_points=n_points, mode=mode)
    sol.sigma, sol.sigma_plus, sol.sigma_minus = assemble_density(sol.rays, spec, w, tau_split)
    if reconstruct:
        sol.flow = assemble_flow(sol.rays, spec, w)
        sol.u_flow = flow_to_u(sol.flow, w, inst.datum, dom)
        if sol.plan.levels is not None:
            sol.u_rays = ray_sweep_u(sol.plan, sol.rays, inst.datum, dom, spec, check_crossings=False)
    return sol


def grid_for(inst, grid_cfg):
    if "n" in grid_cfg:
        return GridSpec.covering(inst.domain, n=int(grid_cfg["n"]))
    return GridSpec.covering(inst.domain, h=float(grid_cfg["h"]))


def staircase_levels(u, count=5):
    """Levels between consecutive steps of a staircase field.

    ``count`` targets are spread over 10-90% of the range of ``u``; each is
    replaced by the midpoint of the step it falls in, so that for a
    piecewise-constant u the contour runs along a jump.
    """
    fin = u[np.isfinite(u)]
    vals = np.unique(np.round(fin, 12))
    if vals.size < 2:
        return []
    targets = vals[0] + (vals[-1] - vals[0]) * np.linspace(0.1, 0.9, count)
    out = []
    for q in targets:
        k = int(np.clip(np.searchsorted(vals, q), 1, vals.size - 1))
        t = float(0.5 * (vals[k - 1] + vals[k]))
        if t not in out:
            out.append(t)
    return out


def contour_levels(sol, count=5):
    """Levels for the level-set check, taken from the ray-swept staircase."""
    if sol.u_rays is not None:
        return staircase_levels(sol.u_rays.u.values, count)
    lo, hi = sol.instance.datum.range()
    return [float(t) for t in lo + (hi - lo) * np.linspace(0.1, 0.9, count)]


def run_checks(sol: Solution, checks, p_values=(1, 2), seed=0):
    """Evaluate the named checks on a solution; returns a list of Check."""
    inst, spec = sol.instance, sol.spec
    dom, w, g = inst.domain, inst.weight, inst.datum
    h = spec.h
    diam = dom.diameter()
    out = []
    cost = sol.plan.total_cost
    rng = np.random.default_rng(seed)
    for name in checks:
        if name == "convexity":
            rep = sol.certificate or convexity_certificate(dom, w)
            out.append(verify.summarize_convexity(rep))
        elif name == "duality":
            pot = sol.potential
            rel = abs(pot.gap) / max(cost, 1e-300)
            out.append(verify.Check("duality", rel <= 1e-6, {"cost": cost, "dual_value": pot.dual_value,
                                                             "gap": pot.gap, "relative_gap": rel}))
        elif name == "noncrossing_cost":
            lp = sol.lp_plan.total_cost
            rel = abs(cost - lp) / max(lp, 1e-300)
            out.append(verify.Check("noncrossing_cost", rel <= 1e-9,
                                    {"plan_cost": cost, "lp_cost": lp, "relative_difference": rel}))
        elif name == "ray_crossings":
            bad = interior_crossings(sol.rays, h)
            out.append(verify.Check("ray_crossings", not bad, {"crossings": len(bad), "n_rays": len(sol.rays)}))
        elif name == "mass_balance":
            tot = sol.sigma.integral()
            rel = abs(tot - cost) / max(cost, 1e-300)
            split_err = float(np.max(np.abs(sol.sigma.values - sol.sigma_plus.values - sol.sigma_minus.values)))
            out.append(verify.Check("mass_balance", rel <= 1e-3 and float(sol.sigma.values.min()) >= 0,
                                    {"sigma_mass": tot, "cost": cost, "relative_error": rel,
                                     "split_identity_error": split_err}))
        elif name == "divergence":
            res = divergence_residual(sol.flow, w, sol.sources, sol.targets)
            thr = max(0.02, 4.0 * h / diam)
            out.append(verify.Check("divergence", res <= thr, {"residual": res, "threshold": thr}))
        elif name == "dual_field":
            out.append(verify.check_dual_equivalence(sol.potential.grid, g, w, dom, cost))
        elif name == "lipschitz":
            th = rng.uniform(0, TWO_PI, (200, 2))
            from .metric import boundary_pair_lengths

            pa = sol.potential.on_boundary(w, dom, th[:, 0])
            pb = sol.potential.on_boundary(w, dom, th[:, 1])
            d = boundary_pair_lengths(w, dom, th[:, 0], th[:, 1])
            excess = float(np.max(np.abs(pa - pb) - d))
            out.append(verify.Check("lipschitz", excess <= 1e-6 * max(1.0, diam * w.k_max),
                                    {"pairs": 200, "max_excess": excess}))
        elif name == "reconstruction":
            uf = sol.u_flow
            m = uf.mask
            osc = float(np.ptp(g.value(np.linspace(0, TWO_PI, 4097))))
            area = float(m.sum()) * h * h
            metrics = {"trace_l1_flow": uf.trace_l1, "tv_weighted": weighted_tv(uf.u, w, m), "cost": cost}
            ok = True
            if sol.u_rays is not None:
                diff = float(np.sum(np.abs(uf.u.values[m] - sol.u_rays.u.values[m])) * h * h)
                bound = 5 * h * osc * area
                metrics.update({"l1_difference": diff, "bound": bound, "trace_l1_rays": sol.u_rays.trace_l1})
                ok = diff <= bound
            out.append(verify.Check("reconstruction", ok, metrics))
        elif name == "level_sets":
            levels = contour_levels(sol)
            if sol.u_rays is not None:
                dist = level_set_hausdorff(sol.u_flow, sol.plan, sol.rays, levels, dom, sol.u_rays.shift) / h
                kind = "hausdorff"
            else:
                dist = contour_distance(sol.u_flow, sol.rays, levels) / h
                kind = "contour_to_rays"
            ok = bool(len(levels) > 0 and np.all(np.isfinite(dist)) and np.all(dist <= 2.0))
            worst = float(np.max(dist)) if len(levels) else float("nan")
            out.append(verify.Check("level_sets", ok, {"max_distance_in_cells": worst, "levels": levels,
                                                       "distance_in_cells": dist, "distance_kind": kind}))
        elif name == "jacobian":
            th_i = float(sol.targets.theta[0])
            per = dom.perimeter
            s_i = float(dom.arclength(th_i))
            s = s_i + per * np.linspace(0.1, 0.9, 16)
            fan = jacobian_fan(w, dom, np.mod(s, per), th_i, np.linspace(0.0, 1.0, 41))
            out.append(verify.check_jacobian_bound(fan))
        elif name == "lp_norms":
            metrics = {}
            for p in p_values:
                r = lp_norm(sol.sigma, p, dom)
                metrics[f"sigma_L{p:g}"] = r["norm"]
                metrics[f"collar_mass_p{p:g}"] = r["collar_mass"]
            metrics["sigma_Linf"] = lp_norm(sol.sigma, np.inf)["norm"]
            out.append(verify.Check("lp_norms", all(np.isfinite(v) for v in metrics.values() if v is not None),
                                    metrics))
    return out


# -- artifacts -----------------------------------------------------------------

def _dump(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
        if not text.endswith("\n"):
            fh.write("\n")


def _instance_summary(cfg, spec):
    return {"domain": cfg["domain"], "weight": cfg["weight"],
            "grid": {"nx": spec.nx, "ny": spec.ny, "h": spec.h, "origin": list(spec.origin)}}


def write_artifacts(sol: Solution, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    j = os.path.join
    if sol.plan is not None:
        _dump(j(out_dir, "plan.json"), sol.plan.to_json())
    if sol.rays is not None:
        _dump(j(out_dir, "rays.json"), sol.rays.to_json())
    if sol.sigma is not None:
        write_csv(sol.sigma, j(out_dir, "sigma.csv"))
        write_pgm(sol.sigma, j(out_dir, "sigma.pgm"))
        write_csv(sol.sigma_plus, j(out_dir, "sigma_plus.csv"))
        write_csv(sol.sigma_minus, j(out_dir, "sigma_minus.csv"))
    if sol.u_flow is not None:
        write_csv(sol.u_flow.u, j(out_dir, "u.csv"))
        write_pgm(sol.u_flow.u, j(out_dir, "u.pgm"))
        levels = contour_levels(sol)
        _dump(j(out_dir, "u_levels.json"), json.dumps(level_polylines(sol.u_flow, levels)))
    if sol.potential is not None and sol.potential.grid is not None:
        write_csv(sol.potential.grid, j(out_dir, "psi.csv"))


def level_polylines(field, levels):
    """Marching-squares contours of u as lists of [x, y] points per level."""
    from skimage.measure import find_contours

    spec = field.u.spec
    vals = np.where(field.mask, field.u.values, 0.0)
    out = []
    for t in levels:
        lines = []
        for c in find_contours(vals, t, mask=field.mask):
            xy = np.stack([spec.origin[0] + (c[:, 1] + 0.5) * spec.h,
                           spec.origin[1] + (c[:, 0] + 0.5) * spec.h], axis=1)
            lines.append(xy.tolist())
        out.append({"level": t, "polylines": lines})
    return out


def run_config(cfg, base_dir=None, out_dir=None):
    """Solve a validated config, write artifacts, return (exit code, Report)."""
    out_dir = out_dir or cfg.get("out_dir", "out")
    os.makedirs(out_dir, exist_ok=True)
    # the output location does not change the computation
    h_cfg = verify.config_hash({k: v for k, v in cfg.items() if k != "out_dir"})
    inst = Instance.from_config(cfg, base_dir)
    spec = grid_for(inst, cfg["grid"])
    x0, x1, y0, y1 = spec.extent()
    inst.weight = inst.weight.with_bounds((x0 - spec.h, x1 + spec.h, y0 - spec.h, y1 + spec.h))
    checks = list(cfg["checks"])
    atoms = cfg["atoms"]
    stages = {}
    cert = convexity_certificate(inst.domain, inst.weight) if "convexity" in checks else None
    try:
        sol = solve(inst, spec, atoms["n_source"], atoms["n_target"], atoms.get("scheme", "mass"),
                    atoms.get("spacing"), cfg["solver"], tau_split=cfg["tau_split"],
                    n_points=cfg["rays"]["n_points"], mode=cfg["rays"]["mode"], certificate=cert,
                    stages=stages)
    except GeoLGPError as exc:
        sol = stages.get("solution")
        rep = verify.Report([], _instance_summary(cfg, spec), h_cfg,
                            {"error": f"{type(exc).__name__}: {exc}", "status": "solver_failure"})
        if sol is not None:
            write_artifacts(sol, out_dir)
            if sol.plan is not None:
                try:
                    rep.checks = run_checks(sol, [c for c in checks if c in ("duality", "noncrossing_cost")],
                                            cfg["p_values"], cfg["seed"])
                except (GeoLGPError, AttributeError, TypeError):
                    pass
        _dump(os.path.join(out_dir, "report.json"), rep.to_json())
        return 3, rep
    results = run_checks(sol, checks, cfg["p_values"], cfg["seed"])
    extra = {"status": "ok", "plan_cost": sol.plan.total_cost, "n_sources": len(sol.sources),
             "n_targets": len(sol.targets), "n_rays": len(sol.rays)}
    rep = verify.Report(results, _instance_summary(cfg, spec), h_cfg, extra)
    write_artifacts(sol, out_dir)
    _dump(os.path.join(out_dir, "report.json"), rep.to_json())
    return (0 if rep.passed else 1), rep
