"""Production planning with worst-case prices.

Quantities q are chosen from a production set (positive = buy, negative =
sell) against prices known only to lie in a box.  The worst-case price is
the upper limit for goods bought and the lower limit for goods sold, which
the solved saddle problem reproduces.

Run with:  python3 demos/04_robust_production.py
"""

import numpy as np

from saddlecomp import demos

result = demos.run_demo("robust_production")
for label, val in result["rows"]:
    print(f"{label}: {val}")
for label, err in result["checks"]:
    print(f"check [{label}]: discrepancy {err:.2e}")
