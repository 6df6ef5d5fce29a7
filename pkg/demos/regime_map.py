"""
Regime map: which derivatives of the mollified local time stay bounded.

For every pair of Hurst indices on a small grid, and for a few spatial
dimensions and derivative orders, print whether the second moment stays
bounded as the mollification width shrinks, and at what rate it blows up
otherwise. Nothing is integrated here; the verdict is a closed-form rule.

Run with ``python3 demos/regime_map.py``.
"""
import numpy as np

from dltime.rates import classify_regime

H_GRID = np.array([0.25, 0.5, 0.75])
CASES = [(1, (0,)), (1, (1,)), (2, (0, 0)), (2, (1, 0)), (4, (0, 0, 0, 0))]

labels = [f"d={d},k={''.join(map(str, k))}" for d, k in CASES]
header = "H1    H2    r      " + "  ".join(f"{lab:<14}" for lab in labels)
print(header)
print("-" * len(header))
for H1 in H_GRID:
    for H2 in H_GRID:
        cells = []
        for d, k in CASES:
            desc = classify_regime(H1, H2, d, k)
            cells.append(f"{desc.regime:<14}")
        r = H1 * H2 / (H1 + H2)
        print(f"{H1:<5} {H2:<5} {r:.4f} " + "  ".join(cells))

# The boundary case r (2|k| + d) = 1 is where the log-type rates show up.
print()
for d, k in [(2, (0, 0)), (4, (0, 0, 0, 0)), (1, (1,))]:
    print(f"H = 1/2, d = {d}, k = {k}: {classify_regime(0.5, 0.5, d, k).describe()}")
