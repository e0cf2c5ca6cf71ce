"""||sigma_h||_p under grid refinement.

A smooth datum gives a bounded ladder for every p; a two-atom datum puts
all mass on one geodesic, and ||sigma_h||_2 grows like h^(-1/2).
"""
import numpy as np

from geolgp import BoundaryDatum, GridSpec, RadialBumpWeight, indicator_arc
from geolgp.boundary import Piece
from geolgp.density import lp_norm
from geolgp.domain import TWO_PI, Ellipse
from geolgp.pipeline import Instance, solve
from geolgp.verify import ladder

dom = Ellipse(1.25, 0.8)
w = RadialBumpWeight(1.0, 0.5, center=(0.2, 0.1), width=0.4)
cases = {
    "sin(theta)": BoundaryDatum(dom, [Piece(0, TWO_PI, "sinusoid", {"amp": 1.0})]),
    "two atoms": indicator_arc(dom, 0.0, np.pi),
}
ps = (1, 2, 4)
for name, g in cases.items():
    rows = []
    for n in (64, 128, 256):
        h = 1.0 / n
        spec = GridSpec.covering(dom, h=h)
        inst = Instance(dom, w, g)
        if name == "two atoms":
            sol = solve(inst, spec, 1, 1, full_costs=False, potential=False, reconstruct=False)
        else:
            sol = solve(inst, spec, 0, 0, scheme="arclength", spacing=h / 2, full_costs=False,
                        potential=False, reconstruct=False)
        rows.append([lp_norm(sol.sigma, p)["norm"] for p in ps])
        print(f"{name:<11} h=1/{n:<4} " + "  ".join(f"L{p}={v:8.4f}" for p, v in zip(ps, rows[-1])))
    for i, p in enumerate(ps):
        r = ladder([row[i] for row in rows])
        print(f"{'':<11} p={p}: last/first = {r['last_over_first']:.3f}  bounded={r['bounded']}")
