"""
Numerical checks of the supporting inequalities and identities: Dirichlet
simplex integrals, the shifted-simplex bound, eps-asymptotics of singular time
integrals, the quadratic chaining inequality, and bounded-ratio sweeps for the
two Gaussian integral bounds at ``m = 2``.

The Gaussian bounds hold up to unspecified constants, so they are checked by
sweeping parameters and requiring the ratio ``LHS / RHS`` to stay bounded.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .covariance import CovarianceModel, cov, gram_matrix, lnd_constant, variance
from .quadrature import (NonConvergenceWarning, QuadConfig, composite_rule, graded_breaks,
                         levels_for_scale, simplex_integrate)

SLACK = 1e-12


@dataclass(frozen=True)
class LemmaCheck:
    """One row of the verification table."""

    lemma: str
    trials: int
    worst: float
    passed: bool
    detail: str = ""


def _warn(what: str, err: float, value: float):
    warnings.warn(f"{what}: error estimate {err:.3e} on value {value:.6e}",
                  NonConvergenceWarning, stacklevel=3)


def _check_a(a):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.ndim != 1 or a.size == 0:
        raise ValueError("a must be a non-empty vector")
    if np.any(a <= 0) or np.any(a >= 1):
        raise ValueError("every a_i must lie in (0, 1)")
    return a


# ---------------------------------------------------------------------------
# Simplex integrals
# ---------------------------------------------------------------------------

def dirichlet_closed_form(T: float, a) -> float:
    """``prod Gamma(1 - a_j) / Gamma(m + 1 - sum a) * T^{sum(1 - a)}``."""
    a = _check_a(a)
    if not T > 0:
        raise ValueError("T must be positive")
    m = a.size
    log_v = special.gammaln(1 - a).sum() - special.gammaln(m + 1 - a.sum())
    return float(np.exp(log_v + (m - a.sum()) * math.log(T)))


def _tmax_for(a) -> float:
    # the tanh-sinh tail beyond tmax drops mass ~ exp(-2 (1 - a) s_max)
    s_max = 20.0 / (1.0 - float(np.max(a)))
    return max(6.5, math.asinh(2.0 * s_max / math.pi))


def _simplex_with_check(log_f, m, size, tmax, cfg, what):
    h = 1.0 / 8 if m == 3 else 1.0 / 16
    fine = simplex_integrate(log_f, m, size, h, tmax)
    coarse = simplex_integrate(log_f, m, size, 2 * h, tmax)
    err = abs(fine - coarse)
    if not err <= cfg.tolerance(fine):
        _warn(what, err, fine)
    return fine, err


def dirichlet_quadrature(T: float, a, cfg: QuadConfig | None = None) -> float:
    """Quadrature of ``prod u_j^{-a_j}`` over ``{u >= 0, sum u < T}`` for ``m <= 3``.

    Uses tensor tanh-sinh in collapsed coordinates, evaluated in log space.
    """
    a = _check_a(a)
    if a.size > 3:
        raise ValueError("dirichlet_quadrature supports m <= 3")
    cfg = cfg or QuadConfig()
    value, _ = _simplex_with_check(lambda lu: -(lu * a).sum(axis=1), a.size, T,
                                   _tmax_for(a), cfg, "dirichlet_quadrature")
    return value


def shifted_simplex_integral(T: float, h: float, a, cfg: QuadConfig | None = None) -> float:
    """Integral of ``prod u_j^{-a_j}`` over ``{u_1 > T, T < sum u < T + h, u_i >= 0}``."""
    a = _check_a(a)
    if a.size > 3:
        raise ValueError("m <= 3 only")
    if not (0 < h <= T):
        raise ValueError("need 0 < h <= T")
    cfg = cfg or QuadConfig()
    if a.size == 1:
        return float(((T + h) ** (1 - a[0]) - T ** (1 - a[0])) / (1 - a[0]))
    log_T = math.log(T)

    def log_f(lu):
        # u_1 = T + w with (w, u_2, ..., u_m) in the simplex of size h
        return -a[0] * np.logaddexp(log_T, lu[:, 0]) - (lu[:, 1:] * a[1:]).sum(axis=1)

    value, _ = _simplex_with_check(log_f, a.size, h, _tmax_for(a), cfg,
                                   "shifted_simplex_integral")
    return value


def shifted_simplex_bound_check(T: float, h: float, a, cfg: QuadConfig | None = None):
    """``(lhs, rhs, ok)`` for the bound of the shifted-simplex integral by the size-``h`` one."""
    lhs = shifted_simplex_integral(T, h, a, cfg)
    rhs = dirichlet_closed_form(h, a)
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-3))


# ---------------------------------------------------------------------------
# eps-asymptotics of singular time integrals
# ---------------------------------------------------------------------------

def asym_exponent(H1: float, H2: float, d: int, alpha: float):
    """``(case, exponent)`` with case in ``{'power', 'log', 'constant'}``."""
    q = (H1 + H2) / (H1 * H2)
    target = d + 2 * alpha
    if abs(q - target) <= 1e-12 * target:
        return "log", 0.0
    if q < target:
        return "power", q / 2 - d / 2 - alpha
    return "constant", 0.0


def asym_basis(H1, H2, d, alpha, eps):
    """The predicted eps-dependence (up to constants) of both singular integrals."""
    case, a = asym_exponent(H1, H2, d, alpha)
    eps = np.asarray(eps, dtype=float)
    if case == "power":
        return eps ** a
    if case == "log":
        return np.log1p(eps ** -0.5)
    return np.ones_like(eps)


def _check_asym(d, alpha, eps, T):
    if not (0 < eps < T / 2):
        raise ValueError("eps must lie in (0, T/2)")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if d < 0:
        raise ValueError("d must be non-negative")


def _power_substituted_rule(T, gamma, eps, cfg):
    """Rule for ``int_0^T g(u^gamma) du`` in the variable ``w = u^gamma``.

    Returns ``n -> (w, weights)`` with the Jacobian folded into the weights; the
    grid is graded toward ``w = 0`` well below the scale ``eps``, since the
    Jacobian ``w^{1/gamma - 1}`` is itself singular when ``gamma > 1``.
    """
    top = T ** gamma
    levels = levels_for_scale(top, 1e-6 * min(eps, top), cfg.splits, cfg.max_levels)
    breaks = graded_breaks(0.0, top, levels, "left")

    def rule(n):
        w, wt = composite_rule(breaks, n)
        return w, wt * w ** (1.0 / gamma - 1.0) / gamma

    return rule


def asym_integral_1d(H1: float, H2: float, d: int, alpha: float, eps: float, T: float = 1.0,
                     cfg: QuadConfig | None = None) -> float:
    """``int_0^T (u^{2r} + eps)^{-d/2 - alpha} du`` with ``r = H1 H2 / (H1 + H2)``."""
    _check_asym(d, alpha, eps, T)
    cfg = cfg or QuadConfig()
    beta = d / 2 + alpha
    if beta == 0:
        return float(T)
    two_r = 2 * H1 * H2 / (H1 + H2)
    rule = _power_substituted_rule(T, two_r, eps, cfg)

    def total(n):
        w, wt = rule(n)
        return float(np.sum(wt * (w + eps) ** -beta))

    fine, coarse = total(cfg.nodes_per_dim), total(cfg.nodes_per_dim - 2)
    if abs(fine - coarse) > cfg.tolerance(fine):
        _warn("asym_integral_1d", abs(fine - coarse), fine)
    return fine


def asym_integral_2d(H1: float, H2: float, d: int, alpha: float, eps: float, T: float = 1.0,
                     cfg: QuadConfig | None = None) -> float:
    """``int_{[0,T]^2} (u^{2 H1} + v^{2 H2} + eps)^{-d/2 - alpha} du dv``."""
    _check_asym(d, alpha, eps, T)
    cfg = cfg or QuadConfig()
    beta = d / 2 + alpha
    if beta == 0:
        return float(T * T)
    rule_u = _power_substituted_rule(T, 2 * H1, eps, cfg)
    rule_v = _power_substituted_rule(T, 2 * H2, eps, cfg)

    def total(n):
        a, wa = rule_u(n)
        b, wb = rule_v(n)
        return float(wa @ ((a[:, None] + b[None, :] + eps) ** -beta) @ wb)

    fine, coarse = total(cfg.nodes_per_dim), total(cfg.nodes_per_dim - 2)
    if abs(fine - coarse) > cfg.tolerance(fine):
        _warn("asym_integral_2d", abs(fine - coarse), fine)
    return fine


def asym_slope_check(H1, H2, d, alpha, which: str = "1d", T: float = 1.0,
                     eps_values=None, cfg: QuadConfig | None = None):
    """Log-log slope of an integral against that of its predicted basis.

    Returns ``(case, measured_slope, predicted_slope)``; for the bounded case the
    predicted slope is 0.
    """
    eps_values = np.geomspace(1e-8, 1e-2, 13) if eps_values is None else np.asarray(eps_values)
    fn = asym_integral_1d if which == "1d" else asym_integral_2d
    vals = np.array([fn(H1, H2, d, alpha, e, T, cfg) for e in eps_values])
    x = np.log(eps_values)
    measured = float(np.polyfit(x, np.log(vals), 1)[0])
    predicted = float(np.polyfit(x, np.log(asym_basis(H1, H2, d, alpha, eps_values)), 1)[0])
    return asym_exponent(H1, H2, d, alpha)[0], measured, predicted


# ---------------------------------------------------------------------------
# Quadratic chaining inequality
# ---------------------------------------------------------------------------

def quadratic_ineq_check(xs):
    """``(lhs, rhs, ok)`` for ``sum |x_j - x_{j+1}|^2 >= 2/(m(m+1)) sum |x_j|^2``, ``x_{m+1} = 0``."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    m = xs.shape[0]
    if m < 1:
        raise ValueError("need at least one vector")
    ext = np.vstack([xs, np.zeros((1, xs.shape[1]))])
    lhs = float(np.sum(np.diff(ext, axis=0) ** 2))
    rhs = float(2.0 / (m * (m + 1)) * np.sum(xs ** 2))
    return lhs, rhs, bool(lhs >= rhs - SLACK * max(1.0, rhs))


# ---------------------------------------------------------------------------
# Gaussian integral bounds at m = 2
# ---------------------------------------------------------------------------

def _angular_integral(Q: np.ndarray, k: int) -> float:
    """``int_{R^2} exp(-y'Qy/2) |y1 y2|^k dy`` via the exact radial integral."""
    def f(th):
        c, s = math.cos(th), math.sin(th)
        q = Q[0, 0] * c * c + 2 * Q[0, 1] * c * s + Q[1, 1] * s * s
        return abs(c * s) ** k * q ** -(k + 1)

    total = 0.0
    # |cos sin|^k has kinks at multiples of pi/2
    for j in range(4):
        val, err = integrate.quad(f, j * math.pi / 2, (j + 1) * math.pi / 2,
                                  epsabs=0.0, epsrel=1e-11, limit=400)
        if err > 1e-8 * abs(val):
            _warn("fourier bound angular integral", err, val)
        total += val
    return 2.0 ** k * math.factorial(k) * total


def fourier_bound_lhs(model: CovarianceModel, s, k: int, eps: float) -> float:
    s1, s2 = s
    Q = gram_matrix(model, [s1, s2], check=False) + eps * np.eye(2)
    return _angular_integral(Q, k)


def fourier_bound_rhs(model: CovarianceModel, s, k: int, eps: float) -> float:
    """Sum over the two 0/1 patterns whose last entry is 1, with an empty leading pattern."""
    s1, s2 = s
    H = model.H
    w1 = s1 ** (2 * H) + eps
    w2 = (s2 - s1) ** (2 * H) + eps
    total = 0.0
    for p1 in (0, 1):
        q1 = 1 - p1
        e1 = (1 + k * p1) / 2          # first factor, no leading term
        e2 = (1 + k * (1 + q1)) / 2  # second factor
        total += w1 ** -e1 * w2 ** -e2
    return total


def fourier_bound_ratio(model: CovarianceModel, s, k: int, eps: float, T: float = 1.0) -> float:
    """``LHS / RHS`` of the Fourier-integral bound for ``m = 2``, ``d = 1``."""
    s1, s2 = s
    if not (0 < s1 < s2 < 2 * T):
        raise ValueError("need 0 < s1 < s2 < 2T")
    if k < 0 or eps < 0:
        raise ValueError("need k >= 0 and eps >= 0")
    return fourier_bound_lhs(model, s, k, eps) / fourier_bound_rhs(model, s, k, eps)


def _var_pair(model, y, u1, u2):
    """``Var(y1 X_{u1} + y2 X_{u2})`` elementwise."""
    y1, y2 = y
    return (y1 * y1 * variance(model, u1) + 2 * y1 * y2 * cov(model, u1, u2)
            + y2 * y2 * variance(model, u2))


LOG_CELL = 0.5      # width of Gauss-Legendre cells in log-time
LOG_DEPTH = 40.0    # decades (in e-folds) resolved below the smallest decay scale


def _decay_scale(c: float, gamma: float, T: float) -> float:
    """Time scale where ``c * t^gamma`` reaches 1, capped at ``T``."""
    if c <= 0:
        return T
    return min(T, c ** (-1.0 / gamma))


def _log_grid(lo: float, hi: float, n: int):
    """Composite Gauss-Legendre nodes/weights on ``[lo, hi]`` (log-time) with ``LOG_CELL`` cells."""
    cells = max(1, int(math.ceil((hi - lo) / LOG_CELL)))
    return composite_rule(np.linspace(lo, hi, cells + 1), n)


def ordered_pair_integral(f, T: float, scale: float, n: int = 8) -> float:
    """``int_{0 < u1 < u2 < T} f(u1, u2 - u1) du`` for integrands peaked near 0.

    The first increment is integrated in ``log u1`` on ``(0, T/2]`` and in
    ``log(T - u1)`` on ``[T/2, T)``; the second in log-time up to the simplex
    boundary. Grids start ``LOG_DEPTH`` e-folds below ``scale``, so peaks at any
    scale down to roughly 1e-280 are resolved.
    """
    lo = max(math.log(scale) - LOG_DEPTH, -650.0)
    mid = math.log(T / 2)
    la, wa = _log_grid(lo, mid, n)
    lb, wb = _log_grid(lo, mid, n)
    ea, eb = np.exp(la), np.exp(lb)
    d1 = np.concatenate([ea, T - eb])
    w1 = np.concatenate([wa * ea, wb * eb])
    top = np.concatenate([np.log(T - ea), lb])  # log of the room left for u2 - u1
    cells = max(1, int(math.ceil((math.log(T) - lo) / LOG_CELL)))
    x, wx = composite_rule(np.linspace(0.0, 1.0, cells + 1), n)
    span = np.maximum(top - lo, 0.0)
    l2 = lo + span[:, None] * x[None, :]
    d2 = np.exp(l2)
    w2 = span[:, None] * wx[None, :] * d2
    return float(np.sum(w1[:, None] * w2 * f(d1[:, None], d2)))


def occupation_bound_sides(model: CovarianceModel, y, p: float, T: float = 1.0,
                  kappa: float | None = None, n: int = 8):
    """``(lhs, rhs)`` of the occupation-integral bound at ``m = 2``, ``d = 1``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    y1, y2 = (float(v) for v in y)
    if kappa is None:
        kappa = lnd_constant(model, 2, T)
    H = model.H
    g = 2 * H / p
    a, b = (y1 + y2) ** 2, y2 ** 2

    def lhs_f(d1, d2):
        return np.exp(-0.5 * _var_pair(model, (y1, y2), d1, d1 + d2))

    def rhs_f(d1, d2):
        return np.exp(-0.5 * kappa * (a * d1 ** g + b * d2 ** g))

    # the LND bound puts the LHS peak no deeper than the scale kappa |y|^2 t^{2H} ~ 1
    scale_l = min(_decay_scale(0.5 * kappa * c, 2 * H, T) for c in (a, b))
    scale_r = min(_decay_scale(0.5 * kappa * c, g, T) for c in (a, b))
    vals = []
    for f, sc in ((lhs_f, scale_l), (rhs_f, scale_r)):
        fine = ordered_pair_integral(f, T, sc, n)
        coarse = ordered_pair_integral(f, T, sc, n - 2)
        if abs(fine - coarse) > 1e-8 * abs(fine):
            _warn("occupation bound quadrature", abs(fine - coarse), fine)
        vals.append(fine)
    return vals[0] ** p, vals[1]


def occupation_bound_ratio(model: CovarianceModel, y, p: float, T: float = 1.0,
                  kappa: float | None = None) -> float:
    lhs, rhs = occupation_bound_sides(model, y, p, T, kappa)
    return lhs / rhs


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _ratio_verdict(name, ratios, extreme, spread: float = 10.0):
    """Bounded-ratio verdict.

    ``extreme`` marks the grid points at the singular end of the sweep, where a
    blow-up would show. The check is ``max(ratio[extreme]) <= spread * median``
    with every ratio finite and positive; the global spread is reported too.
    """
    ratios = np.asarray(ratios, dtype=float)
    extreme = np.asarray(extreme, dtype=bool)
    med = float(np.median(ratios))
    worst = float(ratios[extreme].max() / med)
    ok = bool(np.all(np.isfinite(ratios)) and np.all(ratios > 0) and worst <= spread)
    return LemmaCheck(name, ratios.size, worst, ok,
                      f"min={ratios.min():.4g} median={med:.4g} max={ratios.max():.4g} "
                      f"max/min={ratios.max() / ratios.min():.4g}")


def sweep_dirichlet(n_trials: int = 50, ms=(1, 2, 3), seed: int = 0, tol: float = 1e-4,
                    cfg: QuadConfig | None = None) -> LemmaCheck:
    rng = np.random.default_rng(seed)
    worst = 0.0
    count = 0
    for m in ms:
        for _ in range(n_trials):
            a = rng.uniform(0.01, 0.99, m)
            T = float(rng.uniform(0.5, 2.0))
            exact = dirichlet_closed_form(T, a)
            worst = max(worst, abs(dirichlet_quadrature(T, a, cfg) / exact - 1))
            count += 1
    return LemmaCheck("dirichlet simplex", count, worst, worst < tol,
                      f"max relative error {worst:.3g} (tol {tol:g})")


def sweep_shifted_simplex(n_trials: int = 50, ms=(1, 2, 3), seed: int = 1,
                          cfg: QuadConfig | None = None) -> LemmaCheck:
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    count = 0
    for m in ms:
        for _ in range(n_trials):
            a = rng.uniform(0.01, 0.99, m)
            T = float(rng.uniform(0.5, 2.0))
            h = float(T * rng.uniform(0.01, 1.0))
            lhs, rhs, good = shifted_simplex_bound_check(T, h, a, cfg)
            worst = max(worst, lhs / rhs)
            ok &= good
            count += 1
    return LemmaCheck("shifted simplex", count, worst, ok, f"max lhs/rhs {worst:.4g}")


ASYM_CASES = (
    # (H1, H2, d, alpha): power, log and bounded cases with (H1+H2)/(H1 H2) = 4
    (0.5, 0.5, 4, 1.0),
    (0.5, 0.5, 2, 1.0),
    (0.5, 0.5, 1, 0.0),
)


def sweep_asymptotics(cases=ASYM_CASES, tol: float = 0.05, T: float = 1.0,
                      cfg: QuadConfig | None = None) -> LemmaCheck:
    worst = 0.0
    parts = []
    for H1, H2, d, alpha in cases:
        for which in ("1d", "2d"):
            case, meas, pred = asym_slope_check(H1, H2, d, alpha, which, T, cfg=cfg)
            worst = max(worst, abs(meas - pred))
            parts.append(f"{case}/{which}: {meas:.4f} vs {pred:.4f}")
    return LemmaCheck("singular asymptotics", 2 * len(cases), worst, worst <= tol, "; ".join(parts))


def sweep_quadratic(n_trials: int = 100_000, m_max: int = 10, d_max: int = 3,
                    seed: int = 2) -> LemmaCheck:
    rng = np.random.default_rng(seed)
    violations = 0
    worst = np.inf
    for _ in range(n_trials):
        m = int(rng.integers(1, m_max + 1))
        d = int(rng.integers(1, d_max + 1))
        lhs, rhs, ok = quadratic_ineq_check(rng.standard_normal((m, d)))
        violations += not ok
        if rhs > 0:
            worst = min(worst, lhs / rhs)
    return LemmaCheck("quadratic chaining", n_trials, float(worst), violations == 0,
                      f"violations={violations}, min lhs/rhs {worst:.4g}")


LEMMA_MODELS = (
    CovarianceModel.fbm(0.5),
    CovarianceModel.fbm(0.3),
    CovarianceModel.fbm(0.75),
    CovarianceModel.bifbm(0.75, 0.8),
    CovarianceModel.subfbm(0.6),
)


def fourier_bound_grid(T: float = 1.0):
    s1 = np.geomspace(1e-3, 0.9, 10) * T
    gaps = np.geomspace(1e-3, 1.0, 10) * T
    eps = (0.0, 1e-4, 1e-2, 1.0)
    return [(a, a + g, e) for a in s1 for g in gaps for e in eps]


def sweep_fourier_bound(model: CovarianceModel, k: int, T: float = 1.0) -> LemmaCheck:
    grid = fourier_bound_grid(T)
    ratios = [fourier_bound_ratio(model, (s1, s2), k, e, T) for s1, s2, e in grid]
    # singular corner: first time and gap both at their smallest values
    s1_min = min(g[0] for g in grid)
    gap_min = min(g[1] - g[0] for g in grid)
    extreme = [np.isclose(a, s1_min) and np.isclose(b - a, gap_min) for a, b, _ in grid]
    return _ratio_verdict(f"fourier bound {model.describe()} k={k}", ratios, extreme)


OCCUPATION_NORMS = (1.0, 10.0, 100.0, 1000.0)
OCCUPATION_DIRECTIONS = tuple(np.linspace(0.0, np.pi, 8, endpoint=False) + 0.1)


def occupation_bound_grid():
    """``y`` vectors: each direction is swept over the magnitudes ``{1, 10, 100, 1000}``."""
    return [(r * math.cos(f), r * math.sin(f)) for f in OCCUPATION_DIRECTIONS
            for r in OCCUPATION_NORMS]


def sweep_occupation_bound(model: CovarianceModel, p: float, T: float = 1.0,
                  spread: float = 10.0) -> LemmaCheck:
    """Each ray is one sweep in ``|y|``; its largest-``|y|`` ratio is compared with its median."""
    kappa = lnd_constant(model, 2, T)
    ratios = np.array([occupation_bound_ratio(model, y, p, T, kappa) for y in occupation_bound_grid()])
    rays = ratios.reshape(len(OCCUPATION_DIRECTIONS), len(OCCUPATION_NORMS))
    worst = float(np.max(rays[:, -1] / np.median(rays, axis=1)))
    ok = bool(np.all(np.isfinite(ratios)) and np.all(ratios > 0) and worst <= spread)
    end = rays[:, -1]
    return LemmaCheck(f"occupation bound {model.describe()} p={p:g}", ratios.size, worst, ok,
                      f"min={ratios.min():.4g} max={ratios.max():.4g} "
                      f"max/min={ratios.max() / ratios.min():.4g} "
                      f"across directions at |y|={OCCUPATION_NORMS[-1]:g}: "
                      f"{end.min():.4g}..{end.max():.4g}")


def run_battery(T: float = 1.0, cfg: QuadConfig | None = None, quick: bool = False,
                dirichlet_tol: float = 1e-4, slope_tol: float = 0.05):
    """Every check, in table order."""
    n = 10 if quick else 50
    rows = [
        sweep_dirichlet(n, tol=dirichlet_tol, cfg=cfg),
        sweep_shifted_simplex(n, cfg=cfg),
        sweep_asymptotics(tol=slope_tol, T=T, cfg=cfg),
        sweep_quadratic(10_000 if quick else 100_000),
    ]
    for model in LEMMA_MODELS[:2] if quick else LEMMA_MODELS:
        for k in (0, 1, 2):
            rows.append(sweep_fourier_bound(model, k, T))
        for p in (1.0, 2.0, 4.0):
            rows.append(sweep_occupation_bound(model, p, T))
    return rows
