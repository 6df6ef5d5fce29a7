"""
Second moments along a shrinking mollification grid.

Three Brownian-type configurations are scanned with the graded tensor
quadrature: one where the moment converges, one on the critical boundary
with a squared-log blow-up, and one fractional case with a power law.
The fitted rate is compared with the predicted one. For the log forms the
exponent column is the effective log-log slope, and ``r2`` (predicted form)
is set against ``r2_power`` (pure power law).

Run with ``python3 demos/moment_blowup.py`` (about two minutes on one core).
"""
import time

import numpy as np

from dltime.covariance import CovarianceModel, FieldSpec
from dltime.moments import eps_grid, moment_scan
from dltime.rates import classify_regime, rate_fit

CASES = [
    ("Brownian, d=2, k=0", FieldSpec(CovarianceModel.fbm(0.5), CovarianceModel.fbm(0.5), 2), (0, 0)),
    ("Brownian, d=4, k=0", FieldSpec(CovarianceModel.fbm(0.5), CovarianceModel.fbm(0.5), 4),
     (0, 0, 0, 0)),
    ("fBm 3/4, d=1, k=1", FieldSpec(CovarianceModel.fbm(0.75), CovarianceModel.fbm(0.75), 1), (1,)),
]

eps = eps_grid()
for label, spec, k in CASES:
    t0 = time.perf_counter()
    rows = moment_scan(spec, k, eps)
    values = np.array([r.value for r in rows])
    desc = classify_regime(spec.H1, spec.H2, spec.d, k)
    print(f"\n{label}: {desc.describe()}  ({time.perf_counter() - t0:.0f} s)")
    for e, v in zip(eps[::3], values[::3]):
        print(f"  eps = {e:9.3e}   E|L|^2 = {v:.6f}")
    fit = rate_fit(desc, eps, values)
    shown = {key: fit[key] for key in ("fitted_exponent", "r2", "r2_power")
             if fit.get(key) is not None}
    print("  fit:", ", ".join(f"{key} = {val:.4g}" for key, val in shown.items()) or "none (bounded)")
