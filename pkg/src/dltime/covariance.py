"""
Component covariance kernels for the Gaussian class (bi-fBm, sub-fBm), Gram
matrices, and numerical certificates for local nondeterminism and the variance
upper bound.

Both families are parametrised by a :class:`CovarianceModel`. Classic fBm is
``CovarianceModel.fbm(H)``, i.e. bi-fBm with ``K0 = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

PSD_RTOL = 1e-10

KINDS = ("bifbm", "subfbm")


class NotPSDError(ValueError):
    """Gram matrix has an eigenvalue below ``-PSD_RTOL * trace``."""


@dataclass(frozen=True)
class CovarianceModel:
    """One-dimensional component covariance with effective Hurst index ``H``.

    For ``kind='subfbm'`` the exponent is ``H0`` and ``K0`` is pinned to 1.
    """

    kind: str
    H0: float
    K0: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 < self.H0 < 1.0:
            raise ValueError(f"H0 must lie in (0, 1), got {self.H0}")
        if not 0.0 < self.K0 <= 1.0:
            raise ValueError(f"K0 must lie in (0, 1], got {self.K0}")
        if self.kind == "subfbm" and self.K0 != 1.0:
            raise ValueError("sub-fBm has no K0 parameter; leave it at 1")

    @classmethod
    def fbm(cls, H: float) -> "CovarianceModel":
        return cls("bifbm", H, 1.0)

    @classmethod
    def bifbm(cls, H0: float, K0: float) -> "CovarianceModel":
        return cls("bifbm", H0, K0)

    @classmethod
    def subfbm(cls, H: float) -> "CovarianceModel":
        return cls("subfbm", H, 1.0)

    @property
    def H(self) -> float:
        """Effective Hurst index (``H0*K0`` for bi-fBm, ``H0`` for sub-fBm)."""
        return self.H0 * self.K0 if self.kind == "bifbm" else self.H0

    @property
    def is_fbm(self) -> bool:
        return self.kind == "bifbm" and self.K0 == 1.0

    def __call__(self, s, t):
        return cov(self, s, t)

    def describe(self) -> str:
        if self.kind == "bifbm":
            return f"bifbm(H0={self.H0!r},K0={self.K0!r})"
        return f"subfbm(H={self.H0!r})"


@dataclass(frozen=True)
class FieldSpec:
    """The pair of component models defining ``Z(t, s) = X_t - X~_s`` in ``R^d``."""

    model1: CovarianceModel
    model2: CovarianceModel
    d: int = 1

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension d must be a positive integer, got {self.d}")

    @property
    def H1(self) -> float:
        return self.model1.H

    @property
    def H2(self) -> float:
        return self.model2.H

    @property
    def r(self) -> float:
        """``H1*H2/(H1+H2)``, always in (0, 1/2)."""
        return self.H1 * self.H2 / (self.H1 + self.H2)


@dataclass(frozen=True)
class LndCertificate:
    times: tuple
    kappa_hat: float
    method: str
    eigenvalues: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def certified(self) -> bool:
        return self.kappa_hat > 0.0


def _check_times(*ts):
    for t in ts:
        if np.any(np.asarray(t) < 0):
            raise ValueError("times must be non-negative")


def cov(model: CovarianceModel, s, t):
    """Covariance ``E[X_s X_t]`` of one component; broadcasts over array inputs."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    _check_times(s, t)
    if model.kind == "bifbm":
        H0, K0 = model.H0, model.K0
        if K0 == 1.0:
            out = 0.5 * (t ** (2 * H0) + s ** (2 * H0) - np.abs(t - s) ** (2 * H0))
        else:
            out = 2.0 ** (-K0) * ((t ** (2 * H0) + s ** (2 * H0)) ** K0
                                   - np.abs(t - s) ** (2 * H0 * K0))
    else:
        h2 = 2 * model.H0
        out = t ** h2 + s ** h2 - 0.5 * ((t + s) ** h2 + np.abs(t - s) ** h2)
    return out if out.ndim else float(out)


def variance(model: CovarianceModel, t):
    """``Var(X_t)`` in closed form (avoids the cancellation in ``cov(t, t)``)."""
    t = np.asarray(t, dtype=float)
    _check_times(t)
    H = model.H
    if model.kind == "bifbm":
        out = t ** (2 * H)
    else:
        out = (2.0 - 2.0 ** (2 * H - 1)) * t ** (2 * H)
    return out if out.ndim else float(out)


def field_cov(spec: FieldSpec, p1, p2) -> float:
    """Covariance of one coordinate of ``Z`` at parameter points ``p = (t, s)``."""
    (t1, s1), (t2, s2) = p1, p2
    return cov(spec.model1, t1, t2) + cov(spec.model2, s1, s2)


def gram_matrix(model: CovarianceModel, times, check: bool = True) -> np.ndarray:
    """Gram matrix ``cov(times[i], times[j])`` on strictly increasing positive times."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-D sequence")
    if np.any(times <= 0):
        raise ValueError("gram_matrix requires positive times (t=0 rows are degenerate)")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing without duplicates")
    G = cov(model, times[:, None], times[None, :])
    G = 0.5 * (G + G.T)
    if check:
        lam_min = np.linalg.eigvalsh(G)[0]
        if lam_min < -PSD_RTOL * np.trace(G):
            raise NotPSDError(
                f"{model.describe()}: Gram matrix min eigenvalue {lam_min:.3e} "
                f"below -{PSD_RTOL:g}*trace")
    return G


def increment_gram(model: CovarianceModel, times) -> np.ndarray:
    """Covariance of increments ``X_{t_i} - X_{t_{i-1}}`` with ``t_0 = 0``."""
    times = np.asarray(times, dtype=float)
    G = gram_matrix(model, times, check=False)
    n = len(times)
    # A maps (X_{t_1},...,X_{t_n}) to increments
    A = np.eye(n) - np.eye(n, k=-1)
    return A @ G @ A.T


def lnd_certificate(model: CovarianceModel, times, T_horizon: float) -> LndCertificate:
    """Smallest ratio ``Var(sum x_i dX_i) / sum x_i^2 dt_i^{2H}`` over unit ``x``.

    This is the minimal generalized eigenvalue of the increment Gram matrix
    against ``diag(dt_i^{2H})``; a positive value certifies local
    nondeterminism at this configuration.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times <= 0) or np.any(times >= 2 * T_horizon):
        raise ValueError("times must lie in (0, 2T)")
    dt = np.diff(np.concatenate([[0.0], times]))
    if np.any(dt <= 0):
        raise ValueError("coincident or unordered times make the LND weight singular")
    G = increment_gram(model, times)
    Dg = dt ** (2 * model.H)
    if model.K0 == 1.0 and model.kind == "bifbm" and model.H0 == 0.5:
        # independent increments: the ratio is identically one
        lam = np.diag(G) / Dg
        method = "exact_h_half"
    else:
        s = 1.0 / np.sqrt(Dg)
        lam = linalg.eigh(G * s[:, None] * s[None, :], eigvals_only=True)
        method = "generalized_eigen"
    return LndCertificate(tuple(times.tolist()), float(np.min(lam)), method, np.asarray(lam))


def lnd_constant(model: CovarianceModel, m: int, T: float, n_configs: int = 200,
                 seed: int = 0) -> float:
    """Empirical uniform LND constant: min ``kappa_hat`` over random ``m``-configurations.

    Configurations are drawn uniformly in (0, 2T), plus one equispaced grid. This
    is an estimate from above of the true infimum.
    """
    rng = np.random.default_rng(seed)
    configs = [np.linspace(2 * T / (m + 1), 2 * T * m / (m + 1), m)]
    for _ in range(n_configs):
        ts = np.sort(rng.uniform(0.0, 2 * T, size=m))
        if np.all(np.diff(ts) > 1e-9 * T) and ts[0] > 0:
            configs.append(ts)
    return min(lnd_certificate(model, ts, T).kappa_hat for ts in configs)


def variance_bound_check(model: CovarianceModel, T: float, n_samples: int = 256):
    """Estimate ``C = sup_{t in (0, 2T]} Var(X_t) / t^{2H}``.

    The sample set is a uniform grid on (0, 2T] plus a geometric grid reaching down
    to ``2T * 1e-8``. Returns ``(C_hat, ok)`` with ``ok`` true when finite.
    """
    if T <= 0 or n_samples < 2:
        raise ValueError("need T > 0 and n_samples >= 2")
    t_uni = np.linspace(2 * T / n_samples, 2 * T, n_samples)
    t_geo = 2 * T * np.geomspace(1e-8, 1.0, n_samples)
    t = np.concatenate([t_uni, t_geo])
    ratio = cov(model, t, t) / t ** (2 * model.H)
    C_hat = float(np.max(ratio))
    return C_hat, bool(np.isfinite(C_hat))
