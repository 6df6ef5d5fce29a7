"""
Second moment of the mollified local-time derivative by exact Gaussian reduction
and graded tensor quadrature over the four time variables.

For one spatial coordinate, with ``A = Sigma + eps I`` the regularised covariance of
``(Z(t1, s1), Z(t2, s2))``,

    E[p_eps^{(k)}(Z1) p_eps^{(k)}(Z2)]
        = (-1)^k (2 pi)^{-2} * 2 pi det(A)^{-1/2} * E[Y1^k Y2^k],  Y ~ N(0, A^{-1}).

Coordinates are i.i.d., so the full integrand is a product over coordinates. The
mixed Gaussian moment is evaluated with Isserlis' theorem.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np

from .covariance import FieldSpec, cov, field_cov, variance
from .kernel import MultiIndex, as_multi_index
from .quadrature import QuadConfig, composite_rule, graded_breaks, levels_for_scale

_PSD_TOL = 1e-12


def _double_factorial(n: int) -> int:
    return 1 if n <= 0 else math.prod(range(n, 0, -2))


@lru_cache(maxsize=None)
def isserlis_terms(k1: int, k2: int):
    """Terms ``(c, j, a, b)`` with ``E[U1^k1 U2^k2] = sum c C12^j C11^a C22^b``.

    ``j`` counts cross pairings between the ``k1`` copies of ``U1`` and the ``k2``
    copies of ``U2``; the remaining slots pair within each block.
    """
    if (k1 + k2) % 2:
        return ()
    terms = []
    for j in range(min(k1, k2) + 1):
        if (k1 - j) % 2 or (k2 - j) % 2:
            continue
        c = (math.comb(k1, j) * math.comb(k2, j) * math.factorial(j)
             * _double_factorial(k1 - j - 1) * _double_factorial(k2 - j - 1))
        terms.append((c, j, (k1 - j) // 2, (k2 - j) // 2))
    return tuple(terms)


def isserlis_moment(C, k1: int, k2: int) -> float:
    """``E[U1^k1 U2^k2]`` for a centred Gaussian pair with 2x2 covariance ``C``."""
    C = np.asarray(C, dtype=float)
    if C.shape != (2, 2) or not np.allclose(C, C.T, rtol=0, atol=1e-14 * np.abs(C).max(initial=1)):
        raise ValueError("C must be a symmetric 2x2 matrix")
    lam = np.linalg.eigvalsh(C)
    if lam[0] < -_PSD_TOL * max(np.trace(C), 1e-300):
        raise ValueError("C is not positive semidefinite")
    if k1 < 0 or k2 < 0:
        raise ValueError("orders must be non-negative")
    return float(sum(c * C[0, 1] ** j * C[0, 0] ** a * C[1, 1] ** b
                     for c, j, a, b in isserlis_terms(k1, k2)))


# ---------------------------------------------------------------------------
# Point integrand
# ---------------------------------------------------------------------------

def _coord_factor(A, ki: int, diagonal: bool) -> float:
    B = np.linalg.inv(A)
    m = isserlis_moment(B, 0, 2 * ki) if diagonal else isserlis_moment(B, ki, ki)
    return 2.0 * np.pi * np.linalg.det(A) ** -0.5 * m


def _point_value(Sigma, k: MultiIndex, eps: float, diagonal: bool) -> float:
    A = np.asarray(Sigma, dtype=float) + eps * np.eye(2)
    det = A[0, 0] * A[1, 1] - A[0, 1] ** 2
    if not det > 0:
        raise ZeroDivisionError("regularised covariance is singular at this time configuration")
    sign = 1.0 if diagonal else (-1.0) ** k.order
    d = k.d
    return sign * (2 * np.pi) ** (-2 * d) * math.prod(_coord_factor(A, ki, diagonal) for ki in k)


def pair_covariance(spec: FieldSpec, times) -> np.ndarray:
    """Covariance of one coordinate of ``(Z(t1, s1), Z(t2, s2))``; ``times = (s1, s2, t1, t2)``."""
    s1, s2, t1, t2 = times
    c11 = field_cov(spec, (t1, s1), (t1, s1))
    c22 = field_cov(spec, (t2, s2), (t2, s2))
    c12 = field_cov(spec, (t1, s1), (t2, s2))
    return np.array([[c11, c12], [c12, c22]])


def second_moment_integrand(spec: FieldSpec, k, eps: float, times) -> float:
    """Pointwise integrand of ``E[|L_eps^{(k)}(T, 0)|^2]`` at ``times = (s1, s2, t1, t2)``.

    ``(t_i, s_i)`` is the parameter point of the ``i``-th factor, ``t`` belonging to
    the first process and ``s`` to the second.
    """
    k = as_multi_index(k, spec.d)
    if eps < 0:
        raise ValueError("eps must be non-negative")
    return _point_value(pair_covariance(spec, times), k, eps, diagonal=False)


def diagonal_integrand(spec: FieldSpec, k, eps: float, times) -> float:
    """Integrand of ``F^{(k)}_{T,eps}``: the ``x_1`` monomial replaced by ``(-x_2)^k``."""
    k = as_multi_index(k, spec.d)
    return _point_value(pair_covariance(spec, times), k, eps, diagonal=True)


# ---------------------------------------------------------------------------
# Tensor quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentResult:
    value: float
    err_estimate: float
    eps: float
    k: MultiIndex
    spec: FieldSpec
    T: float
    domain: tuple
    converged: bool = True
    n_points: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def flagged(self) -> bool:
        return not self.converged


def _compile_terms(k: MultiIndex, diagonal: bool):
    """Flatten per-coordinate Isserlis polynomials, grouping equal orders."""
    groups = {}
    for ki in k:
        groups[ki] = groups.get(ki, 0) + 1
    c, e12, e11, e22, start, mult = [], [], [], [], [0], []
    for ki, cnt in sorted(groups.items()):
        terms = isserlis_terms(0, 2 * ki) if diagonal else isserlis_terms(ki, ki)
        for cc, j, a, b in terms:
            c.append(float(cc))
            e12.append(j)
            e11.append(a)
            e22.append(b)
        start.append(len(c))
        mult.append(cnt)
    as_i = lambda v: np.asarray(v, dtype=np.int64)
    return (np.asarray(c), as_i(e12), as_i(e11), as_i(e22), as_i(start), as_i(mult))


@numba.njit(cache=True, inline="always")
def _ipow(x, n):
    r = 1.0
    for _ in range(n):
        r *= x
    return r


@numba.njit(cache=True, inline="always")
def _point_kernel(a11, a12, a22, d, c, e12, e11, e22, start, mult):
    det = a11 * a22 - a12 * a12
    if det <= 0.0:
        return np.nan
    inv = 1.0 / det
    val = _ipow(math.sqrt(inv), d)
    if c.size == 1 and e12[0] == 0 and e11[0] == 0 and e22[0] == 0:
        return val
    b11 = a22 * inv
    b22 = a11 * inv
    b12 = -a12 * inv
    for g in range(mult.size):
        m = 0.0
        for q in range(start[g], start[g + 1]):
            m += c[q] * _ipow(b12, e12[q]) * _ipow(b11, e11[q]) * _ipow(b22, e22[q])
        val *= _ipow(m, mult[g])
    return val


@numba.njit(cache=True, parallel=True)
def _tensor_sum(P, wp, Q, wq, eps, d, c, e12, e11, e22, start, mult):
    n_p = wp.size
    n_q = wq.size
    rows = np.empty(n_p)
    for i in numba.prange(n_p):
        p11 = P[i, 0] + eps
        p12 = P[i, 1]
        p22 = P[i, 2] + eps
        acc = 0.0
        for j in range(n_q):
            acc += wq[j] * _point_kernel(p11 + Q[j, 0], p12 + Q[j, 1], p22 + Q[j, 2],
                                         d, c, e12, e11, e22, start, mult)
        rows[i] = wp[i] * acc
    # fixed-order reduction, independent of the thread count
    total = 0.0
    for i in range(n_p):
        total += rows[i]
    return total


def _interval_overlap(I, J):
    lo, hi = max(I[0], J[0]), min(I[1], J[1])
    return (lo, hi) if hi > lo else None


def pair_rule(I, J, scale: float, cfg: QuadConfig, n: int | None = None,
              levels: int | None = None):
    """Nodes ``(u, v, w)`` for ``u in I, v in J``, graded toward ``u = v`` and zero.

    The overlap square is split into the two orderings; in each, the absolute
    gap is graded toward 0 and the lower time toward the origin. Off-overlap
    rectangles are graded toward both ends of each side.
    """
    n = n or cfg.nodes_per_dim
    pieces = []
    O = _interval_overlap(I, J)
    if levels is None:
        span = max(I[1], J[1]) - min(I[0], J[0])
        levels = levels_for_scale(span, scale, cfg.splits, cfg.max_levels)
    if O is not None:
        o0, o1 = O
        L = o1 - o0
        gap, wg = composite_rule(graded_breaks(0.0, L, levels, "left"), n)
        xdir = "left" if o0 <= 0.0 else "none"
        xlev = levels if o0 <= 0.0 else 2
        x, wx = composite_rule(graded_breaks(0.0, 1.0, xlev, xdir), n)
        G, X = np.meshgrid(gap, x, indexing="ij")
        W = np.outer(wg, wx) * (L - G)
        low = o0 + (L - G) * X
        high = low + G
        pieces.append((low.ravel(), high.ravel(), W.ravel()))
        pieces.append((high.ravel(), low.ravel(), W.ravel()))
    rects = []
    for a, b in ((I[0], min(I[1], J[0])), (max(I[0], J[1]), I[1])):
        if b > a:
            rects.append(((a, b), J))
    if O is not None:
        for a, b in ((J[0], min(J[1], I[0])), (max(J[0], I[1]), J[1])):
            if b > a:
                rects.append((O, (a, b)))
    elif not rects:
        rects.append((I, J))
    for (a0, a1), (b0, b1) in rects:
        u, wu = composite_rule(graded_breaks(a0, a1, levels, "both"), n)
        v, wv = composite_rule(graded_breaks(b0, b1, levels, "both"), n)
        U, V = np.meshgrid(u, v, indexing="ij")
        pieces.append((U.ravel(), V.ravel(), np.outer(wu, wv).ravel()))
    u = np.concatenate([p[0] for p in pieces])
    v = np.concatenate([p[1] for p in pieces])
    w = np.concatenate([p[2] for p in pieces])
    return u, v, w


def _pair_cov_entries(model, u, v):
    return np.stack([variance(model, u), cov(model, u, v), variance(model, v)], axis=1)


def _rect(R):
    (a, b), (c, d) = R
    if not (0 <= a < b and 0 <= c < d):
        raise ValueError(f"invalid time rectangle {R}")
    return (float(a), float(b)), (float(c), float(d))


def _quadrature(spec, k, eps, domainA, domainB, cfg, diagonal, n):
    (tA, sA), (tB, sB) = _rect(domainA), _rect(domainB)
    t1, t2, wt = pair_rule(tA, tB, eps ** (0.5 / spec.H1), cfg, n)
    s1, s2, ws = pair_rule(sA, sB, eps ** (0.5 / spec.H2), cfg, n)
    P = _pair_cov_entries(spec.model1, t1, t2)
    Q = _pair_cov_entries(spec.model2, s1, s2)
    c, e12, e11, e22, start, mult = _compile_terms(k, diagonal)
    sign = 1.0 if diagonal else (-1.0) ** k.order
    const = sign * (2 * np.pi) ** (-spec.d)
    total = _tensor_sum(P, wt, Q, ws, float(eps), spec.d, c, e12, e11, e22, start, mult)
    return const * total, wt.size * ws.size


def _run(spec, k, eps, domainA, domainB, cfg, diagonal, T):
    k = as_multi_index(k, spec.d)
    if eps <= 0:
        raise ValueError("eps must be positive")
    cfg = cfg or QuadConfig()
    n = cfg.nodes_per_dim
    fine, npts = _quadrature(spec, k, eps, domainA, domainB, cfg, diagonal, n)
    coarse, _ = _quadrature(spec, k, eps, domainA, domainB, cfg, diagonal, n - 2)
    err = abs(fine - coarse)
    converged = bool(np.isfinite(fine) and err <= cfg.tolerance(fine))
    return MomentResult(value=float(fine), err_estimate=float(err), eps=float(eps), k=k,
                        spec=spec, T=float(T), domain=(domainA, domainB),
                        converged=converged, n_points=npts,
                        meta={"nodes_per_dim": cfg.nodes_per_dim})


def second_moment_quadrature(spec: FieldSpec, k, eps: float, domainA=None, domainB=None,
                             cfg: QuadConfig | None = None, T: float = 1.0) -> MomentResult:
    """``E[L_A L_B]`` where ``L_R`` is the mollified functional over the rectangle ``R``.

    Rectangles are ``((t_lo, t_hi), (s_lo, s_hi))`` with ``t`` the time of the
    first process. By default both are ``[0, T]^2`` and the result is
    ``E[|L_eps^{(k)}(T, 0)|^2]``.
    """
    full = ((0.0, T), (0.0, T))
    return _run(spec, k, eps, domainA or full, domainB or domainA or full, cfg, False, T)


def diagonal_term_F(spec: FieldSpec, k, eps: float, T: float = 1.0,
                    cfg: QuadConfig | None = None) -> MomentResult:
    """The lower-bound functional ``F^{(k)}_{T,eps}`` over ``[0, T]^4``."""
    full = ((0.0, T), (0.0, T))
    return _run(spec, k, eps, full, full, cfg, True, T)


def eps_grid(eps_max: float = 0.1, ratio: float = 0.5, count: int = 14) -> np.ndarray:
    """Geometric scan grid ``eps_j = eps_max * ratio^j``."""
    return eps_max * ratio ** np.arange(count)


def moment_scan(spec: FieldSpec, k, eps_values, T: float = 1.0, cfg: QuadConfig | None = None,
                functional: str = "moment"):
    """Evaluate the second moment (``'moment'``) or ``F`` (``'F'``) along ``eps_values``."""
    if functional not in ("moment", "F"):
        raise ValueError(f"unknown functional {functional!r}")
    if functional == "F":
        return [diagonal_term_F(spec, k, e, T=T, cfg=cfg) for e in eps_values]
    return [second_moment_quadrature(spec, k, e, cfg=cfg, T=T) for e in eps_values]


def set_threads(n: int | None):
    """Worker count for the tensor sums; affects speed only."""
    if n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
