"""Multiple-fold cross-validation residuals and their joint covariance.

The fast path works from a single inverse ``P`` of the covariance matrix
(``K^{-1}`` for Simple Kriging, the top-left n x n block of the inverse
bordered matrix for Universal Kriging).  For a fold ``i`` the residual is

    E_i = (P[i])^{-1} (P z)_i

and ``Cov(E_i, E_j) = (P[i])^{-1} P[i, j] (P[j])^{-1}``.  With folds
forming a partition, the whole residual vector is ``D P z`` and its
covariance ``D P D`` where ``D`` holds the blocks ``(P[i_j])^{-1}``.
Everything here is reported in data order; ``D`` is then a scattered
block-diagonal matrix and the identities hold unchanged.

The naive path refits on the retained points of every fold and serves as
the reference implementation.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import (
    FoldSingularityError,
    InputError,
    NotPositiveDefiniteError,
    SingularMatrixError,
)
from .gp import bordered_inverse, check_trend_rank


@dataclass
class CVResult:
    """Cross-validation output in data order.

    Attributes
    ----------
    residuals : ndarray, shape (n,)
        ``z - prediction`` for every row, predicted with its fold left out.
    fold_cov : list of ndarray
        Conditional covariance of each fold's residual vector, in fold order.
    full_cov : ndarray, shape (n, n) or None
        Joint residual covariance; ``None`` for the naive method.
    """

    residuals: np.ndarray
    fold_cov: list
    partition: object
    method: str
    full_cov: np.ndarray = None
    elapsed: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.partition.n

    @property
    def has_full_cov(self):
        return self.full_cov is not None

    @property
    def fold_residuals(self):
        return [self.residuals[idx] for idx in self.partition.zero_based()]

    @property
    def fold_sd(self):
        """Per-row residual standard deviation (data order)."""
        out = np.empty(self.n)
        for idx, C in zip(self.partition.zero_based(), self.fold_cov):
            out[idx] = np.sqrt(np.clip(np.diag(C), 0.0, None))
        return out

    def D(self):
        """Block-diagonal matrix of fold covariances, scattered to data order."""
        return block_matrix(self.partition, self.fold_cov)

    def D_inv(self):
        return block_matrix(self.partition, [linalg.spd_inverse(C, f"fold {j}") for j, C in enumerate(self.fold_cov, 1)])

    def stacked_fold_cov(self):
        """Fold covariance blocks flattened into one vector (for error norms)."""
        return np.concatenate([C.ravel() for C in self.fold_cov])


def block_matrix(partition, blocks):
    n = partition.n
    out = np.zeros((n, n))
    for idx, C in zip(partition.zero_based(), blocks):
        out[np.ix_(idx, idx)] = C
    return out


def _check(model, partition):
    if partition.n != model.n:
        raise InputError(f"partition covers {partition.n} rows but the model has {model.n}")
    partition.check()


def precision_matrix(model, rebuild_chol=False):
    """``K^{-1}`` or ``Ktilde^{-1}[(1..n)]`` recomputed from the Cholesky factor.

    With ``rebuild_chol`` the covariance matrix is first rebuilt from the
    factor and factorized again (the slower variant used in benchmarks).
    """
    L = model.L
    if rebuild_chol:
        L = linalg.chol(L @ L.T)
    if model.universal:
        n = model.n
        return bordered_inverse(L, model.F)[:n, :n]
    return linalg.chol_inverse(L)


def _fold_block_inverse(model, P, idx, j):
    try:
        return linalg.spd_inverse(P[np.ix_(idx, idx)], f"fold {j}")
    except SingularMatrixError as exc:
        if model.universal:
            keep = np.setdiff1d(np.arange(model.n), idx)
            check_trend_rank(model.F[keep], fold=j)
        raise FoldSingularityError(j, str(exc)) from exc


def _loo_blocks(model, P, Pz):
    """Singleton folds: scalar pivots, vectorized."""
    d = np.diag(P).copy()
    bad = np.flatnonzero(~(d > 0))
    if bad.size:
        j = int(bad[0])
        _fold_block_inverse(model, P, np.array([j]), j + 1)
        raise FoldSingularityError(j + 1, f"P[i] = {d[j]:.3e} is not positive")
    c = 1.0 / d
    return c * Pz, list(c.reshape(-1, 1, 1))


def fast_cv(model, partition, full_cov=True, rebuild_chol=False, precision=None):
    """Closed-form CV residuals and covariances from one matrix inverse.

    Parameters
    ----------
    model : GPModel
    partition : FoldPartition
    full_cov : bool
        Also assemble the n x n joint residual covariance ``D P D``.
    rebuild_chol : bool
        Rebuild ``K`` from its factor and refactorize before inverting.
    precision : ndarray, optional
        Precomputed ``P``; skips the inversion.

    Raises
    ------
    FoldSingularityError
        If ``P[i_j]`` is singular for some fold ``j``.
    TrendRankError
        Universal mode, if removing fold ``j`` leaves a rank-deficient trend.
    """
    _check(model, partition)
    t0 = time.perf_counter()
    if partition.q == 1 and not model.universal:
        # one fold holding everything: D = K and E = z - mu exactly
        K = model.K.copy()
        return CVResult(model.centered.copy(), [K], partition, "fast", K if full_cov else None,
                        time.perf_counter() - t0, {"z": model.z})
    P = precision_matrix(model, rebuild_chol) if precision is None else precision
    Pz = P @ model.centered
    if partition.q == model.n:
        residuals, blocks = _loo_blocks(model, P, Pz)
    else:
        residuals = np.empty(model.n)
        blocks = []
        for j, idx in enumerate(partition.zero_based(), start=1):
            C = _fold_block_inverse(model, P, idx, j)
            residuals[idx] = C @ Pz[idx]
            blocks.append(C)
    cov = None
    if full_cov:
        DP = np.empty_like(P)
        for idx, C in zip(partition.zero_based(), blocks):
            DP[idx] = C @ P[idx]
        cov = np.empty_like(P)
        for idx, C in zip(partition.zero_based(), blocks):
            cov[:, idx] = DP[:, idx] @ C
        cov = 0.5 * (cov + cov.T)
    elapsed = time.perf_counter() - t0
    return CVResult(residuals, blocks, partition, "fast", cov, elapsed, {"z": model.z})


def naive_cv(model, partition):
    """Reference CV: refit on the retained points of each fold.

    Every fold refactorizes the retained covariance block.  The fold
    covariance is the conditional covariance of the held-out block (with
    the trend-estimation term in universal mode).  ``full_cov`` is left
    ``None``.
    """
    _check(model, partition)
    t0 = time.perf_counter()
    K = model.K
    zc = model.centered
    n = model.n
    residuals = np.empty(n)
    blocks = []
    for j, idx in enumerate(partition.zero_based(), start=1):
        keep = np.setdiff1d(np.arange(n), idx, assume_unique=True)
        Kii = K[np.ix_(idx, idx)]
        if model.universal:
            check_trend_rank(model.F[keep], fold=j)
        if keep.size == 0:
            residuals[idx] = zc[idx]
            blocks.append(Kii.copy())
            continue
        try:
            Lr = linalg.chol(K[np.ix_(keep, keep)])
        except NotPositiveDefiniteError as exc:
            raise FoldSingularityError(j, f"retained covariance: {exc}") from exc
        W = linalg.tri_solve(Lr, K[np.ix_(keep, idx)])
        v = linalg.tri_solve(Lr, zc[keep])
        if model.universal:
            A = linalg.tri_solve(Lr, model.F[keep])
            Ginv = linalg.spd_inverse(A.T @ A, f"trend information with fold {j} removed")
            beta = Ginv @ (A.T @ v)
            u = model.F[idx] - W.T @ A
            pred = model.F[idx] @ beta + W.T @ (v - A @ beta)
            C = Kii - W.T @ W + u @ Ginv @ u.T
        else:
            pred = W.T @ v
            C = Kii - W.T @ W
        residuals[idx] = zc[idx] - pred
        blocks.append(0.5 * (C + C.T))
    elapsed = time.perf_counter() - t0
    return CVResult(residuals, blocks, partition, "naive", None, elapsed, {"z": model.z})


def cross_cov(model, i, j):
    """``Cov(E_i, E_j)`` for arbitrary 1-based index vectors ``i`` and ``j``.

    The vectors need not be disjoint nor part of a partition.
    """
    P = model.precision
    Ci = linalg.spd_inverse(linalg.extract_block(P, i), "P[i]")
    Cj = linalg.spd_inverse(linalg.extract_block(P, j), "P[j]")
    return Ci @ linalg.extract_block(P, i, j) @ Cj


def loo_corr(model):
    """Correlation matrix of leave-one-out residuals."""
    P = model.precision
    s = 1.0 / np.sqrt(np.diag(P))
    C = s[:, None] * P * s[None, :]
    return C


def rel_err(a, b):
    """``||a - b|| / ||b||`` (Euclidean or Frobenius), ``b`` the reference."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InputError(f"shape mismatch: {a.shape} vs {b.shape}")
    num = np.linalg.norm(a - b)
    den = np.linalg.norm(b)
    if den == 0:
        if num == 0:
            return 0.0
        raise InputError("relative error undefined: reference is zero and differs from the estimate")
    return float(num / den)


def compare(fast, naive):
    """Relative errors of a fast result against a naive reference.

    ``rel_err_mean`` compares the CV predictive means ``z - E``,
    ``rel_err_resid`` the residuals themselves and ``rel_err_cov`` the
    stacked fold covariance blocks.
    """
    z = fast.info.get("z")
    if z is None:
        z = naive.info.get("z")
    out = {
        "rel_err_resid": rel_err(fast.residuals, naive.residuals),
        "rel_err_cov": rel_err(fast.stacked_fold_cov(), naive.stacked_fold_cov()),
    }
    out["rel_err_mean"] = rel_err(z - fast.residuals, z - naive.residuals)
    return out
