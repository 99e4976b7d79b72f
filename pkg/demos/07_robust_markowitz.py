"""Robust Markowitz portfolio construction (synthetic 3-asset instance).

The risk-adjusted return mu'w - gamma w'Sigma w is maximized against the
worst perturbation of both the mean (a box around mu) and the covariance
(entrywise-bounded perturbations keeping Sigma + Delta PSD).  The inner
infimum over the perturbations is a saddle min whose value has a closed
form for this uncertainty set, reproduced by the dualized solve.

Requires a backend with PSD cone support (both bundled backends qualify).

Run with:  python3 demos/07_robust_markowitz.py
"""

from saddlecomp import demos

result = demos.run_demo("robust_markowitz")
for label, val in result["rows"]:
    print(f"{label}: {val}")
for label, err in result["checks"]:
    print(f"check [{label}]: discrepancy {err:.2e}")
