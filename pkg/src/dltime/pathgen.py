"""
Exact Gaussian sampling of d-dimensional paths on an equispaced grid.

Every coordinate of every path is driven by its own generator seeded with
``(seed, path, coordinate)``, so the output does not depend on how the work is
split across workers.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .covariance import CovarianceModel, NotPSDError, gram_matrix

JITTER_START = 1e-12
JITTER_MAX = 1e-8
MEMORY_CAP_BYTES = 2 * 1024 ** 3

MAGIC = b"DLTPATH\0"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TimeGrid:
    """Points ``t_j = j T / n`` for ``j = 1..n``; ``t = 0`` is implicit."""

    T: float
    n: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        object.__setattr__(self, "n", int(self.n))

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def points(self) -> np.ndarray:
        return self.T * np.arange(1, self.n + 1) / self.n


@dataclass
class PathSample:
    grid: TimeGrid
    d: int
    n_paths: int
    values: np.ndarray  # (n_paths, d, n)
    seed: int
    model: CovarianceModel
    method: str = "cholesky"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (self.n_paths, self.d, self.grid.n):
            raise ValueError(f"values shape {self.values.shape} does not match "
                             f"(n_paths, d, n) = {(self.n_paths, self.d, self.grid.n)}")

    def with_origin(self) -> np.ndarray:
        """Values with the deterministic ``X_0 = 0`` column prepended."""
        return np.concatenate([np.zeros(self.values.shape[:2] + (1,)), self.values], axis=2)


def _check_request(grid: TimeGrid, d: int, n_paths: int, memory_cap: int):
    if int(d) != d or d < 1:
        raise ValueError("d must be a positive integer")
    if int(n_paths) != n_paths or n_paths < 1:
        raise ValueError("n_paths must be a positive integer")
    need = 8 * grid.n * n_paths * d
    if need > memory_cap:
        raise MemoryError(f"path sample needs {need} bytes, above the cap of {memory_cap}")


def _normals(seed: int, n_paths: int, d: int, size: int) -> np.ndarray:
    """Standard normals of shape ``(n_paths, d, size)``, one stream per (path, coordinate)."""
    out = np.empty((n_paths, d, size))
    key = int(seed) % 2 ** 64  # any signed 64-bit seed maps to a valid entropy word
    for p in range(n_paths):
        for c in range(d):
            out[p, c] = np.random.default_rng([key, p, c]).standard_normal(size)
    return out


def cholesky_factor(G: np.ndarray):
    """Lower Cholesky factor with diagonal jitter escalation; returns ``(L, jitter)``."""
    tr = float(np.trace(G))
    jitter = 0.0
    try:
        return linalg.cholesky(G, lower=True), jitter
    except linalg.LinAlgError:
        pass
    rel = JITTER_START
    while rel <= JITTER_MAX * (1 + 1e-9):
        jitter = rel * tr
        try:
            return linalg.cholesky(G + jitter * np.eye(len(G)), lower=True), jitter
        except linalg.LinAlgError:
            rel *= 10.0
    raise NotPSDError(f"Cholesky failed even with jitter {JITTER_MAX:g}*trace")


def sample_paths(model: CovarianceModel, grid: TimeGrid, d: int, n_paths: int, seed: int,
                 memory_cap: int = MEMORY_CAP_BYTES) -> PathSample:
    """Exact draws of ``n_paths`` paths of a ``d``-dimensional process with i.i.d. coordinates."""
    _check_request(grid, d, n_paths, memory_cap)
    G = gram_matrix(model, grid.points)
    L, jitter = cholesky_factor(G)
    Z = _normals(seed, n_paths, d, grid.n)
    values = Z @ L.T
    return PathSample(grid, int(d), int(n_paths), values, int(seed), model, "cholesky",
                      {"jitter": jitter})


def _fgn_eigenvalues(H: float, n: int) -> np.ndarray:
    """Circulant eigenvalues for unit-step fractional Gaussian noise of length ``n``."""
    k = np.arange(n + 1, dtype=float)
    gamma = 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    return np.fft.fft(row).real


def sample_fbm_fast(H: float, grid: TimeGrid, d: int, n_paths: int, seed: int,
                    memory_cap: int = MEMORY_CAP_BYTES) -> PathSample:
    """fBm paths by circulant embedding of the stationary increments (Davies-Harte).

    Falls back to :func:`sample_paths` if the embedding has a negative eigenvalue;
    the result then carries ``meta['fallback'] = True``.
    """
    model = CovarianceModel.fbm(H)
    _check_request(grid, d, n_paths, memory_cap)
    n = grid.n
    lam = _fgn_eigenvalues(H, n)
    if lam.min() < -1e-10 * lam.max():
        warnings.warn("circulant embedding is not PSD; falling back to Cholesky sampling",
                      RuntimeWarning, stacklevel=2)
        out = sample_paths(model, grid, d, n_paths, seed, memory_cap)
        out.meta["fallback"] = True
        return out
    M = 2 * n
    root = np.sqrt(np.maximum(lam, 0.0) / M)
    Z = _normals(seed, n_paths, d, 2 * M)
    W = Z[..., :M] + 1j * Z[..., M:]
    incr = np.fft.fft(root * W, axis=-1)[..., :n].real
    values = grid.dt ** H * np.cumsum(incr, axis=-1)
    return PathSample(grid, int(d), int(n_paths), values, int(seed), model, "circulant",
                      {"fallback": False})


# ---------------------------------------------------------------------------
# Binary dump
# ---------------------------------------------------------------------------
# Header (little endian): 8-byte magic, u32 version, u32 d, u32 n, u32 n_paths,
# i64 seed, f64 T, u32 descriptor length, descriptor bytes (UTF-8); then the
# values as row-major float64 in (n_paths, d, n) order.

_FIXED = struct.Struct("<8sIIIIqdI")


def dump_paths(sample: PathSample, path) -> None:
    desc = sample.model.describe().encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_FIXED.pack(MAGIC, FORMAT_VERSION, sample.d, sample.grid.n, sample.n_paths,
                             sample.seed, sample.grid.T, len(desc)))
        fh.write(desc)
        fh.write(np.ascontiguousarray(sample.values, dtype="<f8").tobytes())


def _parse_descriptor(text: str) -> CovarianceModel:
    name, _, rest = text.partition("(")
    args = dict(kv.split("=") for kv in rest.rstrip(")").split(","))
    if name == "bifbm":
        return CovarianceModel.bifbm(float(args["H0"]), float(args["K0"]))
    if name == "subfbm":
        return CovarianceModel.subfbm(float(args["H"]))
    raise ValueError(f"unknown model descriptor {text!r}")


def load_paths(path) -> PathSample:
    data = Path(path).read_bytes()
    magic, version, d, n, n_paths, seed, T, dlen = _FIXED.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError("not a path dump (bad magic)")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported dump version {version}")
    off = _FIXED.size
    model = _parse_descriptor(data[off:off + dlen].decode("utf-8"))
    off += dlen
    values = np.frombuffer(data, dtype="<f8", offset=off).astype(float)
    if values.size != n_paths * d * n:
        raise ValueError("truncated path dump")
    return PathSample(TimeGrid(T, n), d, n_paths, values.reshape(n_paths, d, n), seed, model,
                      "loaded")
