"""Linear program with worst-case cost over a polyhedron of cost vectors.

minimize  sup_{c : Fc <= g} c'x   subject to  x in X.

The inner supremum dualizes into an infimum over a multiplier in the dual
cone, so the whole problem becomes a single LP.  The dualized cone program
can be exported and inspected.

Run with:  python3 demos/03_robust_lp_dualization.py
"""

import numpy as np

import saddlecomp as sc
from saddlecomp import conic, demos

# cost set C = [0, 1]^2; with x fixed at (1, 2) the worst case picks the
# upper corner: value 1*1 + 1*2 = 3
x = sc.Variable(2, name="x")
c = sc.LocalVariable(2, name="c")
worst_cost = sc.saddle_max(sc.inner(x, c), [c >= 0, c <= 1])

fixed = sc.Problem(sc.Minimize(worst_cost), [x == np.array([1.0, 2.0])])
print("worst-case cost at x=(1,2):", fixed.solve())
print("worst-case c:", np.round(c.value, 6))

# now optimize x over the simplex against a richer polytope
result = demos.run_demo("robust_lp")
print("\noptimized robust cost:", result["value"])
print("x* =", np.round(result["x"], 6))
for label, err in result["checks"]:
    print(f"check [{label}]: discrepancy {err:.2e}")

# export the dualized cone program for the fixed instance
x2 = sc.Variable(2, name="x2")
c2 = sc.LocalVariable(2, name="c2")
se = sc.saddle_max(sc.inner(x2, c2), [c2 >= 0, c2 <= 1])
from saddlecomp.canon import canonicalize_dcp
_, prog = canonicalize_dcp(se, [x2 == np.array([1.0, 2.0])])
print("\ndualized cone program:", prog.num_vars, "columns,",
      prog.A.shape[0], "rows,", len(prog.cones), "cone blocks")
print("round-trip solve of the exported JSON:",
      conic.solve_cone(conic.ConeProgram.from_json(prog.to_json())).obj)
