"""Independent reference computations shared by the unit and acceptance tests."""
import math

import mpmath as mp
import numpy as np

from dltime.covariance import field_cov


def gauss_hermite_moment(C, k1, k2, n=24):
    """``E[U1^k1 U2^k2]`` by tensor Gauss-Hermite quadrature after whitening."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    w = w / math.sqrt(2 * math.pi)
    L = np.linalg.cholesky(np.asarray(C, dtype=float))
    Z1, Z2 = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    U1 = L[0, 0] * Z1
    U2 = L[1, 0] * Z1 + L[1, 1] * Z2
    return float(np.sum(W * U1 ** k1 * U2 ** k2))


def x_space_integrand(spec, k, eps, times, n=12):
    """``E[prod_i d^{k_i} p_eps(Z_i(t1,s1)) d^{k_i} p_eps(Z_i(t2,s2))]`` as an x-integral.

    Integrates the kernel derivatives against the joint density of the two
    field values over all ``2d`` coordinates at once: the Gaussian factors are
    merged into one normal law and the Hermite factors are integrated by a
    ``2d``-dimensional tensor Gauss-Hermite rule in whitened coordinates.
    """
    s1, s2, t1, t2 = times
    d = spec.d
    S2 = np.array([[field_cov(spec, (t1, s1), (t1, s1)), field_cov(spec, (t1, s1), (t2, s2))],
                   [field_cov(spec, (t1, s1), (t2, s2)), field_cov(spec, (t2, s2), (t2, s2))]])
    S = np.kron(S2, np.eye(d))                      # coordinates (x1_1..x1_d, x2_1..x2_d)
    P = np.linalg.inv(S) + np.eye(2 * d) / eps
    cov = np.linalg.inv(P)
    const = ((2 * math.pi * eps) ** (-d) * (2 * math.pi) ** (-d) * np.linalg.det(S) ** -0.5
             * (2 * math.pi) ** d * np.linalg.det(P) ** -0.5)
    z, w = np.polynomial.hermite_e.hermegauss(n)
    w = w / math.sqrt(2 * math.pi)
    L = np.linalg.cholesky(cov)
    root = math.sqrt(eps)
    grids = np.meshgrid(*([z] * (2 * d)), indexing="ij")
    X = L @ np.stack([g.ravel() for g in grids])          # (2d, n^{2d})
    W = np.ones(X.shape[1])
    for g in np.meshgrid(*([w] * (2 * d)), indexing="ij"):
        W = W * g.ravel()
    vals = W
    for i, ki in enumerate(k):
        for row in (X[i], X[d + i]):
            vals = vals * ((-1) ** ki * root ** (-ki)
                           * np.polynomial.hermite_e.hermeval(row / root, [0] * ki + [1]))
    total = float(np.sum(vals))
    return const * total


def mp_partial(k, eps, x):
    """Mixed partial of the Gaussian kernel by high-precision finite differences."""
    d = len(x)
    with mp.workdps(40):
        e = mp.mpf(eps)

        def f(*xs):
            return (2 * mp.pi * e) ** (-mp.mpf(d) / 2) * mp.exp(-sum(v * v for v in xs) / (2 * e))

        return float(mp.diff(f, tuple(mp.mpf(v) for v in x), tuple(k)))
