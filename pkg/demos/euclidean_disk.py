"""Unit disk, k = 1, g the indicator of the upper arc.

The derivative of g is a unit atom at (1, 0) and a negative unit atom at
(-1, 0).  The optimal plan sends one to the other along the diameter, the
transport density is a line mass of total 2 on that chord, and u is the
indicator of the upper half disk.
"""
import os
import sys

import numpy as np

from geolgp import ConstantWeight, GridSpec, indicator_arc
from geolgp.domain import Circle
from geolgp.pipeline import Instance, solve, write_artifacts

n = int(sys.argv[1]) if len(sys.argv) > 1 else 256
disk = Circle(1.0)
inst = Instance(disk, ConstantWeight(1.0), indicator_arc(disk, 0.0, np.pi))
spec = GridSpec.covering(disk, n=n)
sol = solve(inst, spec, 1, 1)

h = spec.h
C = spec.centers()
exact = (C[..., 1] > 0).astype(float)
m = sol.u_flow.mask
print(f"grid {spec.nx}x{spec.ny}, h = {h:.5f}")
print(f"plan: {sol.plan.flows}  cost {sol.plan.total_cost:.12f}")
print(f"sigma mass {sol.sigma.integral():.6f} (cost {sol.plan.total_cost:.6f})")
for name, field in (("flow", sol.u_flow), ("ray sweep", sol.u_rays)):
    err = np.sum(np.abs(field.u.values[m] - exact[m])) * h * h
    print(f"u from {name:<9}: L1 error {err:.5f}  (4 h pi = {4 * h * np.pi:.5f})")

out = os.path.join(os.path.dirname(__file__), "out", "euclidean_disk")
write_artifacts(sol, out)
print(f"artifacts in {out}")
