"""
Regime classification for ``E|L_eps^{(k)}(T, 0)|^2`` and regression utilities for
measured eps-scans.

With ``r = H1 H2 / (H1 + H2)``:

============================================  =========================================
condition                                     growth as eps -> 0
============================================  =========================================
``r (2|k| + d) < 1``                          bounded (the limit exists)
``r d > 1``, ``k = 0``                        ``eps^{1/r - d}``
``r d = 1``, ``k = 0``                        ``ln^2(1 + eps^{-1/2})``
``r d = 1``, ``k != 0``                       ``ln(1 + eps^{-1/2}) eps^{1/(2r) - d/2 - |k|}``
``r d < 1 < r (2|k| + d)``                    ``eps^{1/(2r) - d/2 - |k|}``
``r d < 1 = r (2|k| + d)``                    ``ln(1 + eps^{-1/2})``
============================================  =========================================
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import optimize, stats

from .kernel import as_multi_index

REGIMES = ("exists", "critical_log", "critical_logsq", "power", "log_times_power")

# |q - 1| below this counts as equality; far tighter than the 1e-12 boundary probes
BOUNDARY_TOL = 1e-13

FIT_POINTS = 8


@dataclass(frozen=True)
class RateDescriptor:
    regime: str
    exponent: float | None = None
    theta1_max: float | None = None
    theta2_max: float | None = None
    r: float | None = None
    note: str = ""

    @property
    def diverges(self) -> bool:
        return self.regime != "exists"

    def describe(self) -> str:
        if self.regime == "exists":
            return (f"exists, theta1<{format_number(self.theta1_max)}, "
                    f"theta2<{format_number(self.theta2_max)}")
        if self.regime == "critical_log":
            return "diverges: ln(1+eps^-1/2)"
        if self.regime == "critical_logsq":
            return "diverges: ln^2(1+eps^-1/2)"
        if self.regime == "power":
            return f"diverges: eps^{format_number(self.exponent)}"
        return f"diverges: ln(1+eps^-1/2)*eps^{format_number(self.exponent)}"


def format_number(x: float) -> str:
    """Short rational form when ``x`` is a fraction with denominator <= 64."""
    frac = Fraction(x).limit_denominator(64)
    if abs(float(frac) - x) <= 1e-12 * max(1.0, abs(x)):
        return str(frac)
    return f"{x:.6g}"


def _cmp_one(q: float) -> int:
    if abs(q - 1.0) <= BOUNDARY_TOL:
        return 0
    return -1 if q < 1.0 else 1


def classify_regime(H1: float, H2: float, d: int, k) -> RateDescriptor:
    """Existence / divergence regime and Hölder bounds for ``(H1, H2, d, k)``."""
    if not (0 < H1 < 1 and 0 < H2 < 1):
        raise ValueError("H1, H2 must lie in (0, 1)")
    if int(d) != d or d < 1:
        raise ValueError("d must be a positive integer")
    k = as_multi_index(k, d)
    K = k.order
    r = H1 * H2 / (H1 + H2)
    top = _cmp_one(r * (2 * K + d))
    if top < 0:
        return RateDescriptor("exists", None, min(1.0, 1 / H1 + 1 / H2 - 2 * K - d),
                              1.0 - r * (K + d), r)
    low = _cmp_one(r * d)
    a_half = 1.0 / (2 * r) - d / 2.0 - K
    if K == 0:
        if low > 0:
            return RateDescriptor("power", 1.0 / r - d, r=r)
        return RateDescriptor("critical_logsq", 0.0, r=r)
    if low == 0:
        return RateDescriptor("log_times_power", a_half, r=r)
    if low < 0:
        if top == 0:
            return RateDescriptor("critical_log", 0.0, r=r)
        return RateDescriptor("power", a_half, r=r)
    # r d > 1 with k != 0 has no row in the table; use the growth of the
    # diagonal lower-bound functional, eps^{(1/(2r) - d/2) + (1/(2r) - d/2 - |k|)}
    return RateDescriptor("power", 1.0 / r - d - K, r=r,
                          note="r*d>1, k!=0: exponent from the diagonal lower bound")


def predicted_rate(desc: RateDescriptor):
    """eps-basis function of the predicted divergence."""
    if desc.regime == "exists":
        raise ValueError("regime 'exists' has no divergence to fit")
    a = desc.exponent
    log_b = lambda e: np.log1p(np.asarray(e, dtype=float) ** -0.5)
    if desc.regime == "power":
        return lambda e: np.asarray(e, dtype=float) ** a
    if desc.regime == "critical_log":
        return log_b
    if desc.regime == "critical_logsq":
        return lambda e: log_b(e) ** 2
    if desc.regime == "log_times_power":
        return lambda e: log_b(e) * np.asarray(e, dtype=float) ** a
    raise ValueError(f"unknown regime {desc.regime!r}")


def _check_xy(eps, values, min_points=5):
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    if eps.shape != values.shape or eps.ndim != 1:
        raise ValueError("eps and values must be 1-D arrays of equal length")
    if eps.size < min_points:
        raise ValueError(f"need at least {min_points} points")
    if np.any(eps <= 0) or np.any(values <= 0):
        raise ValueError("eps and values must be positive")
    return eps, values


def _r2(y, pred):
    ss_tot = np.sum((y - y.mean()) ** 2)
    ss_res = np.sum((y - pred) ** 2)
    return 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot


def fit_power_law(eps, values):
    """Least-squares line through ``(log eps, log value)``: ``(slope, intercept, r2)``."""
    eps, values = _check_xy(eps, values)
    x, y = np.log(eps), np.log(values)
    if np.ptp(y) == 0:
        return 0.0, float(y[0]), 1.0
    res = stats.linregress(x, y)
    return float(res.slope), float(res.intercept), float(res.rvalue ** 2)


def fit_power_offset(eps, values, bracket=(-3.0, 3.0)):
    """Fit ``value = C eps^a + B`` by profiling ``a``; returns ``(a, C, B, r2)``.

    An additive constant is lower order than any divergent power, so this
    recovers the leading exponent when the scan is still far from asymptotic.
    """
    eps, values = _check_xy(eps, values)
    scale = values.max()

    def sse(a):
        X = np.column_stack([eps ** a, np.ones_like(eps)])
        coef, *_ = np.linalg.lstsq(X, values / scale, rcond=None)
        return np.sum((X @ coef - values / scale) ** 2), coef

    grid = np.linspace(*bracket, 601)
    j = int(np.argmin([sse(a)[0] for a in grid]))
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
    a = optimize.minimize_scalar(lambda a: sse(a)[0], bounds=(lo, hi), method="bounded",
                                 options={"xatol": 1e-10}).x
    coef = sse(a)[1] * scale
    pred = coef[0] * eps ** a + coef[1]
    return float(a), float(coef[0]), float(coef[1]), float(_r2(values, pred))


def difference_slope(eps, values):
    """Log-log slope of successive differences ``|v_{j+1} - v_j|`` (offset-free)."""
    eps, values = _check_xy(eps, values, min_points=3)
    diffs = np.abs(np.diff(values))
    return fit_power_law(eps[1:], diffs)[0] if diffs.size >= 5 else float(
        stats.linregress(np.log(eps[1:]), np.log(diffs)).slope)


def fit_log_form(eps, values, form: str = "logsq", a: float = 0.0):
    """Regress ``values`` on ``basis(eps)`` plus a constant; returns ``(scale, r2)``.

    ``form`` is ``'log'``, ``'logsq'`` or ``'log_times_power'`` (the latter uses
    exponent ``a``).
    """
    eps, values = _check_xy(eps, values)
    lb = np.log1p(eps ** -0.5)
    basis = {"log": lb, "logsq": lb ** 2, "log_times_power": lb * eps ** a}.get(form)
    if basis is None:
        raise ValueError(f"unknown form {form!r}")
    res = stats.linregress(basis, values)
    return float(res.slope), float(res.rvalue ** 2)


def tail(eps, values, n: int = FIT_POINTS):
    """The ``n`` smallest-eps points of a scan, in decreasing-eps order."""
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    order = np.argsort(-eps)
    return eps[order][-n:], values[order][-n:]


def rate_fit(desc: RateDescriptor, eps, values, n: int = FIT_POINTS) -> dict:
    """Compare a measured scan with the predicted regime over its smallest ``n`` points."""
    out = {"regime": desc.regime, "predicted_exponent": desc.exponent,
           "fitted_exponent": None, "loglog_slope": None, "r2": None, "r2_power": None}
    if not desc.diverges:
        return out
    e, v = tail(eps, values, n)
    slope, _, r2_pow = fit_power_law(e, v)
    out["loglog_slope"] = slope
    out["r2_power"] = r2_pow
    if desc.regime == "power":
        a, _, _, r2 = fit_power_offset(e, v)
        out.update(fitted_exponent=a, r2=r2)
    else:
        form = {"critical_log": "log", "critical_logsq": "logsq",
                "log_times_power": "log_times_power"}[desc.regime]
        _, r2 = fit_log_form(e, v, form, desc.exponent or 0.0)
        out.update(fitted_exponent=slope, r2=r2)
    return out
