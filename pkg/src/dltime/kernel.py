"""Gaussian mollifier ``p_eps`` and its partial derivatives via Hermite polynomials."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_UNDERFLOW = -700.0


@dataclass(frozen=True)
class MultiIndex:
    """Derivative order ``k = (k_1, ..., k_d)``."""

    k: tuple

    def __post_init__(self):
        k = tuple(int(v) for v in np.atleast_1d(self.k))
        if len(k) == 0 or any(v < 0 for v in k):
            raise ValueError(f"multi-index must be a non-empty tuple of non-negative ints, got {self.k}")
        object.__setattr__(self, "k", k)

    @classmethod
    def zero(cls, d: int) -> "MultiIndex":
        return cls((0,) * d)

    @classmethod
    def parse(cls, text: str) -> "MultiIndex":
        return cls(tuple(int(v) for v in str(text).split(",") if v.strip() != ""))

    @property
    def order(self) -> int:
        return sum(self.k)

    @property
    def d(self) -> int:
        return len(self.k)

    def __iter__(self):
        return iter(self.k)

    def __str__(self):
        return ",".join(map(str, self.k))


def as_multi_index(k, d: int | None = None) -> MultiIndex:
    if not isinstance(k, MultiIndex):
        k = MultiIndex(k if np.ndim(k) else (int(k),) * (d or 1))
    if d is not None and k.d != d:
        raise ValueError(f"multi-index {k} has length {k.d}, expected d={d}")
    return k


def hermite(n: int, x):
    """Probabilists' Hermite polynomial ``He_n(x)`` by three-term recurrence."""
    if n < 0:
        raise ValueError("Hermite order must be non-negative")
    x = np.asarray(x, dtype=float)
    h_prev, h = np.ones_like(x), x.copy()
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    for j in range(1, n):
        h_prev, h = h, x * h - j * h_prev
    return h if h.ndim else float(h)


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x[..., None] if x.ndim == 0 else x


def heat_kernel(eps: float, x):
    """``(2 pi eps)^{-d/2} exp(-|x|^2 / (2 eps))`` along the last axis of ``x``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = _as_points(x)
    d = x.shape[-1]
    expo = -np.sum(x * x, axis=-1) / (2.0 * eps)
    out = np.where(expo < _UNDERFLOW, 0.0, np.exp(np.maximum(expo, _UNDERFLOW)))
    out = out * (2.0 * np.pi * eps) ** (-0.5 * d)
    return out if out.ndim else float(out)


def heat_kernel_deriv(k, eps: float, x):
    """Mixed partial ``d^k p_eps(x)`` for a multi-index ``k``.

    Uses ``d^n/dx^n exp(-x^2/2e) = (-1)^n e^{-n/2} He_n(x/sqrt(e)) exp(-x^2/2e)``
    coordinatewise. ``x`` has the spatial dimension on its last axis.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = _as_points(x)
    k = as_multi_index(k, x.shape[-1])
    out = heat_kernel(eps, x)
    root = np.sqrt(eps)
    for i, ki in enumerate(k):
        if ki:
            out = out * ((-1) ** ki * root ** (-ki) * hermite(ki, x[..., i] / root))
    return out if np.ndim(out) else float(out)
