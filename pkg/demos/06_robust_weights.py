"""Classifier fitting that is robust to adversarial data weights.

Hinge-loss fitting where an adversary reweights the training points within
W = {0 <= w <= 1, sum w = k}: the worst-case weighted loss equals the sum
of the k largest per-point losses, which the solved saddle point problem
matches to solver precision.

Run with:  python3 demos/06_robust_weights.py
"""

from saddlecomp import demos

result = demos.run_demo("robust_weights_synthetic")
for label, val in result["rows"]:
    print(f"{label}: {val}")
for label, err in result["checks"]:
    print(f"check [{label}]: discrepancy {err:.2e}")
