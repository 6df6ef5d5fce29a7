import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dltime.covariance import (CovarianceModel, FieldSpec, NotPSDError, cov, field_cov,
                               gram_matrix, lnd_certificate, lnd_constant,
                               variance_bound_check)

BROWNIAN = CovarianceModel.fbm(0.5)

# mpmath at 40 digits: 2^1.5 + 1 - (3^1.5 + 1)/2
SUBFBM_075_COV_1_2 = 0.73035091339287415731


def test_brownian_cov_is_min():
    assert cov(BROWNIAN, 1.0, 2.0) == pytest.approx(1.0, abs=1e-15)
    assert cov(BROWNIAN, 2.0, 2.0) == pytest.approx(2.0, abs=1e-15)


def test_subfbm_values():
    assert cov(CovarianceModel.subfbm(0.5), 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert cov(CovarianceModel.subfbm(0.75), 1.0, 2.0) == pytest.approx(SUBFBM_075_COV_1_2,
                                                                       rel=1e-14)


def test_cov_at_origin_and_domain():
    for m in (BROWNIAN, CovarianceModel.bifbm(0.7, 0.6), CovarianceModel.subfbm(0.3)):
        assert cov(m, 0.0, 1.3) == 0.0
        assert cov(m, 0.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        cov(BROWNIAN, -1.0, 1.0)


def test_model_validation():
    with pytest.raises(ValueError):
        CovarianceModel.bifbm(1.2, 0.5)
    with pytest.raises(ValueError):
        CovarianceModel.bifbm(0.5, 0.0)
    with pytest.raises(ValueError):
        CovarianceModel("subfbm", 0.5, 0.5)
    assert CovarianceModel.bifbm(0.8, 0.5).H == pytest.approx(0.4)


def test_field_cov():
    spec = FieldSpec(BROWNIAN, BROWNIAN, 1)
    assert field_cov(spec, (0, 0), (0, 0)) == 0.0
    assert field_cov(spec, (1, 1), (2, 3)) == pytest.approx(2.0)
    m1, m2 = CovarianceModel.bifbm(0.6, 0.7), CovarianceModel.subfbm(0.4)
    mixed = FieldSpec(m1, m2, 2)
    assert field_cov(mixed, (0.3, 0.9), (0.7, 0.2)) == pytest.approx(
        cov(m1, 0.3, 0.7) + cov(m2, 0.9, 0.2), rel=1e-15)
    assert mixed.r == pytest.approx(0.42 * 0.4 / 0.82)


def test_gram_matrix_examples():
    assert gram_matrix(BROWNIAN, [1.0]) == pytest.approx(np.array([[1.0]]))
    G = gram_matrix(BROWNIAN, [1.0, 2.0])
    np.testing.assert_allclose(G, [[1, 1], [1, 2]])
    assert np.all(np.linalg.eigvalsh(G) > 0)
    rng = np.random.default_rng(4)
    times = np.sort(rng.uniform(0.01, 2.0, 32))
    G = gram_matrix(CovarianceModel.subfbm(0.3), times)
    assert np.linalg.eigvalsh(G)[0] >= -1e-10 * np.trace(G)


def test_gram_matrix_rejects_bad_times():
    with pytest.raises(ValueError):
        gram_matrix(BROWNIAN, [1.0, 1.0])
    with pytest.raises(ValueError):
        gram_matrix(BROWNIAN, [0.0, 1.0])
    assert issubclass(NotPSDError, ValueError)


def test_bifbm_k1_reduces_to_fbm():
    H = 0.37
    t, s = np.meshgrid(np.linspace(0.01, 2, 17), np.linspace(0.02, 1.9, 13))
    ref = 0.5 * (t ** (2 * H) + s ** (2 * H) - np.abs(t - s) ** (2 * H))
    # general bi-fBm branch evaluated at K0 -> 1
    general = 2.0 ** -1 * ((t ** (2 * H) + s ** (2 * H)) - np.abs(t - s) ** (2 * H))
    np.testing.assert_allclose(cov(CovarianceModel.fbm(H), s, t), ref, rtol=1e-12)
    np.testing.assert_allclose(general, ref, rtol=1e-12)


def test_lnd_examples():
    rng = np.random.default_rng(0)
    for _ in range(20):
        times = np.sort(rng.uniform(0.01, 1.99, rng.integers(1, 9)))
        if np.min(np.diff(np.concatenate([[0], times]))) < 1e-6:
            continue
        assert lnd_certificate(BROWNIAN, times, 1.0).kappa_hat == pytest.approx(1.0, abs=1e-10)
    cert = lnd_certificate(CovarianceModel.fbm(0.75), [0.2, 0.4, 0.6, 0.8], 1.0)
    assert cert.kappa_hat > 0 and cert.certified
    assert cert.method == "generalized_eigen"
    single = lnd_certificate(CovarianceModel.bifbm(0.6, 1.0), [0.7], 1.0)
    assert single.kappa_hat == pytest.approx(1.0, rel=1e-12)


def test_lnd_rejects_coincident_times():
    with pytest.raises(ValueError):
        lnd_certificate(BROWNIAN, [0.5, 0.5], 1.0)
    with pytest.raises(ValueError):
        lnd_certificate(BROWNIAN, [0.5, 2.5], 1.0)


def test_lnd_constant_positive():
    assert lnd_constant(CovarianceModel.subfbm(0.6), 2, 1.0, n_configs=50) > 0


def test_variance_bound():
    C, ok = variance_bound_check(BROWNIAN, 1.0)
    assert ok and C == pytest.approx(1.0, rel=1e-12)
    for H in (0.1, 0.5, 0.9):
        C, ok = variance_bound_check(CovarianceModel.subfbm(H), 1.0)
        assert ok and C == pytest.approx(2 - 2 ** (2 * H - 1), rel=1e-9) and C <= 2
    assert variance_bound_check(CovarianceModel.bifbm(0.6, 0.8), 1.0)[1]


models = st.one_of(
    st.builds(CovarianceModel.bifbm, st.floats(0.05, 0.95), st.floats(0.05, 1.0)),
    st.builds(CovarianceModel.subfbm, st.floats(0.05, 0.95)),
)


@settings(max_examples=60, deadline=None)
@given(models, st.floats(0, 3), st.floats(0, 3))
def test_cov_symmetric(model, s, t):
    assert cov(model, s, t) == cov(model, t, s)
    assert cov(model, t, t) >= -1e-14


@settings(max_examples=40, deadline=None)
@given(models, st.lists(st.floats(0.01, 2.0), min_size=2, max_size=64, unique=True))
def test_gram_psd(model, times):
    times = np.sort(times)
    if np.min(np.diff(times)) < 1e-6:
        return
    G = gram_matrix(model, times)
    assert np.linalg.eigvalsh(G)[0] >= -1e-10 * np.trace(G)
