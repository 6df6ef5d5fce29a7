import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dltime import pathgen
from dltime.covariance import CovarianceModel, NotPSDError, gram_matrix
from dltime.pathgen import (PathSample, TimeGrid, cholesky_factor, dump_paths, load_paths,
                            sample_fbm_fast, sample_paths)

B = CovarianceModel.fbm(0.5)


def _gram_z_scores(values, G):
    """Entrywise z-scores of the empirical second-moment matrix against ``G``."""
    n_paths = values.shape[0]
    emp = values.T @ values / n_paths
    var = (np.outer(np.diag(G), np.diag(G)) + G ** 2) / n_paths
    return np.abs(emp - G) / np.sqrt(var)


def test_time_grid():
    g = TimeGrid(2.0, 4)
    np.testing.assert_allclose(g.points, [0.5, 1.0, 1.5, 2.0])
    assert g.dt == 0.5
    with pytest.raises(ValueError):
        TimeGrid(0.0, 3)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_brownian_unit_variance():
    s = sample_paths(B, TimeGrid(1.0, 1), 1, 100_000, seed=5)
    v = s.values[:, 0, 0]
    se = np.sqrt(2.0 / v.size)
    assert abs(np.mean(v ** 2) - 1.0) < 5 * se


def test_determinism_and_prefix_stability():
    grid = TimeGrid(1.0, 16)
    m = CovarianceModel.subfbm(0.4)
    a = sample_paths(m, grid, 2, 5, seed=9)
    b = sample_paths(m, grid, 2, 5, seed=9)
    assert a.values.tobytes() == b.values.tobytes()
    c = sample_paths(m, grid, 2, 3, seed=9)
    np.testing.assert_array_equal(a.values[:3], c.values)
    assert not np.array_equal(a.values, sample_paths(m, grid, 2, 5, seed=10).values)


def test_subfbm_gram_matches():
    model = CovarianceModel.subfbm(0.75)
    grid = TimeGrid(1.0, 64)
    s = sample_paths(model, grid, 1, 20_000, seed=1)
    z = _gram_z_scores(s.values[:, 0, :], gram_matrix(model, grid.points))
    assert z.max() < 5


def test_coordinates_independent():
    s = sample_paths(CovarianceModel.bifbm(0.7, 0.8), TimeGrid(1.0, 8), 2, 20_000, seed=3)
    x, y = s.values[:, 0, :], s.values[:, 1, :]
    cross = x.T @ y / x.shape[0]
    se = np.sqrt(np.outer(np.mean(x ** 2, 0), np.mean(y ** 2, 0)) / x.shape[0])
    assert np.max(np.abs(cross) / se) < 5


def test_fast_brownian_increments():
    grid = TimeGrid(2.0, 128)
    s = sample_fbm_fast(0.5, grid, 1, 4000, seed=2)
    inc = np.diff(s.with_origin()[:, 0, :], axis=1)
    var = np.mean(inc ** 2, axis=0)
    se = np.sqrt(2.0) * grid.dt / np.sqrt(inc.shape[0])
    assert np.max(np.abs(var - grid.dt) / se) < 5
    assert s.method == "circulant" and s.meta["fallback"] is False


def test_fast_fbm_gram_matches():
    grid = TimeGrid(1.0, 256)
    s = sample_fbm_fast(0.75, grid, 1, 20_000, seed=4)
    z = _gram_z_scores(s.values[:, 0, :], gram_matrix(CovarianceModel.fbm(0.75), grid.points))
    assert z.max() < 5


def test_fast_fallback(monkeypatch):
    monkeypatch.setattr(pathgen, "_fgn_eigenvalues", lambda H, n: -np.ones(2 * n))
    with pytest.warns(RuntimeWarning):
        s = sample_fbm_fast(0.6, TimeGrid(1.0, 8), 1, 4, seed=0)
    assert s.meta["fallback"] is True and s.method == "cholesky"


def test_cholesky_jitter_and_failure():
    G = np.array([[1.0, 1.0], [1.0, 1.0]])
    L, jitter = cholesky_factor(G)
    assert jitter > 0 and np.allclose(L @ L.T, G, atol=1e-6)
    with pytest.raises(NotPSDError):
        cholesky_factor(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_memory_cap():
    with pytest.raises(MemoryError):
        sample_paths(B, TimeGrid(1.0, 100), 1, 1000, seed=0, memory_cap=1000)


def test_path_sample_shape_check():
    with pytest.raises(ValueError):
        PathSample(TimeGrid(1.0, 4), 1, 2, np.zeros((2, 1, 5)), 0, B)


@pytest.mark.parametrize("model", [B, CovarianceModel.bifbm(0.7, 0.3),
                                   CovarianceModel.subfbm(0.123456789)])
def test_dump_roundtrip(tmp_path, model):
    s = sample_paths(model, TimeGrid(1.5, 10), 2, 3, seed=-7)
    f = tmp_path / "paths.bin"
    dump_paths(s, f)
    back = load_paths(f)
    assert back.values.tobytes() == s.values.tobytes()
    assert (back.d, back.n_paths, back.seed, back.grid, back.model) == (
        s.d, s.n_paths, s.seed, s.grid, s.model)
    f.write_bytes(b"XXXXXXXX" + f.read_bytes()[8:])
    with pytest.raises(ValueError):
        load_paths(f)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 3), st.integers(1, 20))
def test_sampling_is_seed_deterministic(seed, d, n):
    grid = TimeGrid(1.0, n)
    a = sample_fbm_fast(0.3, grid, d, 2, seed)
    b = sample_fbm_fast(0.3, grid, d, 2, seed)
    assert np.array_equal(a.values, b.values)
    assert a.values.shape == (2, d, n)
