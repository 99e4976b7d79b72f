"""Robust bond portfolio construction at desk scale (synthetic data).

A portfolio of coupon bonds is valued by discounting cash flows along a
yield curve.  The curve is uncertain: shocks are bounded elementwise, in
absolute sum, and in smoothness.  The worst-case value is a saddle min
(the discount factors are convex in the shock), used here inside a
constraint: find the portfolio closest to the market portfolio whose
worst-case value stays above a floor.

Run with:  python3 demos/05_robust_bond.py
"""

from saddlecomp import demos

result = demos.run_demo("robust_bond_synthetic")
for label, val in result["rows"]:
    print(f"{label}: {val}")
for label, err in result["checks"]:
    print(f"check [{label}]: discrepancy {err:.2e}")
print("holdings:", result["h"])
