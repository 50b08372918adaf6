"""Independent reference computations and random instances shared by the tests.

The oracles below use plain numpy dense solves and never call into
``fastcv``'s CV code, so agreement with them is a genuine cross-check.
"""

import numpy as np

from fastcv import folds, gp


def oracle_weights(K, F, idx, keep):
    """Kriging weights of the retained points for predicting ``idx``.

    Returns ``W`` with prediction ``W.T @ z[keep]``; with a trend matrix
    ``F`` the bordered system is solved directly.
    """
    if keep.size == 0:
        return np.zeros((0, idx.size))
    Kkk = K[np.ix_(keep, keep)]
    rhs = K[np.ix_(keep, idx)]
    if F is None:
        return np.linalg.solve(Kkk, rhs)
    p = F.shape[1]
    big = np.block([[Kkk, F[keep]], [F[keep].T, np.zeros((p, p))]])
    sol = np.linalg.solve(big, np.vstack([rhs, F[idx].T]))
    return sol[: keep.size]


def oracle_cv(K, z, partition, F=None, mu=None):
    """Residuals and full residual covariance by explicit refits.

    The residual map is linear, ``E = A (z - mu)``, so ``Cov(E) = A K A'``.
    In universal mode ``A F = 0`` and the trend drops out of the covariance.
    """
    n = K.shape[0]
    zc = z - (0.0 if mu is None else mu)
    A = np.eye(n)
    for idx in partition.zero_based():
        keep = np.setdiff1d(np.arange(n), idx)
        W = oracle_weights(K, F, idx, keep)
        A[np.ix_(idx, keep)] = -W.T
    E = A @ (z if F is not None else zc)
    return E, A @ K @ A.T


def random_instance(rng, n=None, universal=None, max_cond=1e6):
    """Random design, kernel, trend, response and partition.

    Kernels are rejected until ``cond(K) <= max_cond`` so that refit and
    closed-form results can be compared at tight tolerances.
    """
    while True:
        n_ = int(rng.integers(5, 65)) if n is None else n
        d = int(rng.integers(1, 3))
        X = rng.uniform(size=(n_, d))
        family = str(rng.choice(gp.KERNELS))
        sigma2 = float(rng.uniform(0.5, 3.0))
        nugget = float(rng.choice([0.0, 1e-3 * sigma2]))
        kernel = gp.KernelSpec(family, sigma2, (float(rng.uniform(0.05, 0.4)),) * d, nugget)
        K = gp.cov_matrix(kernel, X)
        if np.linalg.cond(K) > max_cond:
            continue
        uk = bool(rng.integers(2)) if universal is None else universal
        offset = float(rng.normal())
        if uk:
            trend = gp.TrendSpec.from_name(str(rng.choice(["constant", "linear"])))
        else:
            trend = gp.TrendSpec.from_name("simple", mean=offset)
        p = trend.design_matrix(X).shape[1] if uk else 0
        q = int(rng.integers(1 if not uk else 2, n_ + 1))
        part = folds.regular(n_, q, int(rng.integers(2**31)))
        if uk and n_ - max(part.sizes) < p + 1:
            continue
        z = offset + np.sqrt(sigma2) * rng.normal(size=n_)
        return X, z, kernel, trend, part


def instances(count, seed=0, **kw):
    rng = np.random.default_rng(seed)
    return [random_instance(rng, **kw) for _ in range(count)]


def block_diagonal_instance(sizes, seed=0, family="matern52", sigma2=1.5, spacing=1e4):
    """Clusters so far apart that every cross-cluster covariance underflows to 0.

    Returns ``X, z, kernel, partition`` with one fold per cluster.
    """
    rng = np.random.default_rng(seed)
    xs, groups, start = [], [], 1
    for c, m in enumerate(sizes):
        xs.append(c * spacing + np.arange(m) * 0.4 + rng.uniform(0.0, 0.1, m))
        groups.append(tuple(range(start, start + m)))
        start += m
    X = np.concatenate(xs)
    kernel = gp.KernelSpec(family, sigma2, (0.5,))
    z = rng.normal(size=X.size)
    return X, z, kernel, folds.FoldPartition(groups, X.size)
