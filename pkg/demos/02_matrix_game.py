"""Mixed-strategy matrix game, solved two ways.

A saddle point of x'Cy over probability simplices is a pair of equilibrium
strategies.  The saddle point problem dualizes the objective and its
negation, solves both cone programs, and certifies the duality gap; the
saddle-extremum route minimizes the convex function sup_y x'Cy instead.

Run with:  python3 demos/02_matrix_game.py
"""

import numpy as np

import saddlecomp as sc

C = np.array([[1.0, 2.0], [3.0, 1.0]])

# -- route 1: saddle point problem -------------------------------------------
x = sc.Variable(2, name="x")
y = sc.Variable(2, name="y")
prob = sc.SaddlePointProblem(
    sc.MinimizeMaximize(sc.inner(x, C @ y)),
    [x >= 0, sc.sum(x) == 1, y >= 0, sc.sum(y) == 1])

value = prob.solve()
print("game value:", value)
print("x* =", np.round(x.value, 6), " y* =", np.round(y.value, 6))
print("certified gap:", prob.report.gap)

# no unilateral deviation improves either player
rng = np.random.default_rng(0)
dev = max(float(sc.evaluate(prob.objective.expr,
                            {x.id: x.value, y.id: rng.dirichlet([1, 1])}))
          for _ in range(100))
print("best deviation for the maximizer:", dev, "<= value:", dev <= value + 1e-6)

# -- route 2: minimax with a saddle max --------------------------------------
x2 = sc.Variable(2, name="x2")
y_loc = sc.LocalVariable(2, name="y_loc")
G = sc.saddle_max(sc.inner(x2, C @ y_loc), [y_loc >= 0, sc.sum(y_loc) == 1])
mm = sc.Problem(sc.Minimize(G), [x2 >= 0, sc.sum(x2) == 1])
print("\nminimax value:", mm.solve())
print("x* =", np.round(x2.value, 6))
print("a particular inner maximizer y_loc =", np.round(y_loc.value, 6))
