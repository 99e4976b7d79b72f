"""Tour of saddle expressions: atoms, compliance checking, variable roles.

Run with:  python3 demos/01_expressions_and_rules.py
"""

import numpy as np

import saddlecomp as sc

# -- a bi-affine saddle function -------------------------------------------
# f(x, y) = x' C y is convex in x and concave in y.  Raw products of
# expressions are not disciplined, so the atom `inner` marks which argument
# is which: the first argument is the convex side by convention.

x = sc.Variable(2, name="x")
y = sc.Variable(2, name="y")
C = np.array([[1.0, 2.0], [3.0, 1.0]])

f = sc.inner(x, C @ y)
ok, _ = sc.is_dsp(f)
print("inner(x, C @ y) is DSP-compliant:", ok)

part = sc.classify_roles(f)
print("convex variables: ", [v.name for v in part.convex_vars])
print("concave variables:", [v.name for v in part.concave_vars])

# the same function written as a raw product is rejected with a diagnostic
raw = (x @ C) @ y
ok, diags = sc.is_dsp(raw)
print("\nraw x' C y compliant:", ok)
for d in diags:
    print("  ", d)

# -- curvature-aware composition ---------------------------------------------
# saddle_inner(F, G) = F(x)'G(y) needs F convex and nonnegative, G concave.
# Weights that are not provably nonnegative get a domain constraint attached.

u = sc.Variable(name="u")
w = sc.Variable(name="w")
g = 2.5 * sc.saddle_inner(sc.square(u), sc.log(w))
print("\nsaddle_inner(square(u), log(w)):")
print("  compliant:", sc.is_dsp(g)[0])
print("  attached domain constraints:", len(g.children[0].attached_constraints)
      if hasattr(g.children[0], "attached_constraints") else "(on the atom)")

# evaluating at a point: x^2 log y at (2, e)
atom = sc.saddle_inner(sc.square(u), sc.log(w))
print("  value at u=2, w=e:", float(sc.evaluate(atom, {u.id: 2.0, w.id: np.e})))

# -- ambiguous roles ----------------------------------------------------------
# Affine variables could sit on either side; a constraint resolves them.

z = sc.Variable(name="z")
v = sc.Variable(name="v")
h = sc.weighted_log_sum_exp(x, y) + sc.exp(u) + sc.log(v) + z
part = sc.classify_roles(h)
print("\nwith no constraints, z is ambiguous:",
      [q.name for q in part.affine_vars])

prob = sc.SaddlePointProblem(sc.MinimizeMaximize(h), [z + v <= 1])
roles = prob.roles()
print("the constraint z + v <= 1 classifies z as concave:",
      [q.name for q in roles.concave_vars])
