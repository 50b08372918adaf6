"""Dense symmetric linear algebra used by the Kriging and CV code.

Index vectors at this module's public boundary are 1-based and strictly
increasing, matching the notation ``M[i, j]`` for the block of ``M`` with
rows ``i`` and columns ``j``.  :func:`minus` builds the complement ``-i``,
which is resolved against the order of the matrix it is applied to.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import NotPositiveDefiniteError, SingularMatrixError

PIVOT_FLOOR = 1e-12


@dataclass(frozen=True)
class minus:
    """Complement marker: ``minus(i)`` stands for ``-i`` in ``M[-i]``."""

    index: tuple

    def __init__(self, index):
        object.__setattr__(self, "index", tuple(int(k) for k in np.atleast_1d(index)))


def index_array(index, n):
    """Convert a 1-based index vector (or a :class:`minus`) to 0-based positions.

    Raises ``IndexError`` on out-of-range entries and ``ValueError`` when the
    vector is empty or not strictly increasing.
    """
    if isinstance(index, minus):
        keep = np.ones(n, dtype=bool)
        keep[index_array(index.index, n)] = False
        return np.flatnonzero(keep)
    idx = np.atleast_1d(np.asarray(index))
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("index vector must be a non-empty 1-d sequence")
    if not np.issubdtype(idx.dtype, np.integer):
        if not np.all(np.equal(np.mod(idx, 1), 0)):
            raise ValueError("index vector entries must be integers")
        idx = idx.astype(np.int64)
    if idx.min() < 1 or idx.max() > n:
        raise IndexError(f"index out of range 1..{n}: {idx.tolist()}")
    if np.any(np.diff(idx) <= 0):
        raise ValueError(f"index vector must be strictly increasing: {idx.tolist()}")
    return idx - 1


def complement(index, n):
    """Return ``-i`` as an explicit 1-based tuple (possibly empty)."""
    return tuple(int(k) + 1 for k in index_array(minus(index), n))


def extract_block(M, rows, cols=None):
    """Return ``M[rows, cols]``; ``cols`` defaults to ``rows``.

    Parameters
    ----------
    M : array_like, shape (m, n)
    rows, cols : sequence of int or minus
        1-based, strictly increasing index vectors, or complements built
        with :class:`minus`.
    """
    M = np.asarray(M)
    if M.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if cols is None:
        cols = rows
    r = index_array(rows, M.shape[0])
    c = index_array(cols, M.shape[1])
    return M[np.ix_(r, c)]


def symmetrize(M):
    """Return ``(M + M.T) / 2`` as a float array."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return 0.5 * (M + M.T)


def chol(K, pivot_floor=PIVOT_FLOOR):
    """Lower Cholesky factor ``L`` with ``K = L @ L.T``.

    A pivot (``L[j, j] ** 2``) at or below ``pivot_floor * max(diag(K))``
    is treated as a positive-definiteness failure.

    Raises
    ------
    NotPositiveDefiniteError
        With the 1-based index of the failing pivot.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {K.shape}")
    n = K.shape[0]
    floor = pivot_floor * max(float(np.max(np.diag(K))), 0.0) if n else 0.0
    if n and np.max(np.diag(K)) <= 0:
        raise NotPositiveDefiniteError(1, float(K[0, 0]), floor)
    L, info = lapack.dpotrf(K, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefiniteError(int(info))
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    pivots = np.diag(L) ** 2
    bad = np.flatnonzero(pivots <= floor)
    if bad.size:
        j = int(bad[0])
        raise NotPositiveDefiniteError(j + 1, float(pivots[j]), floor)
    return L


def tri_solve(L, b, side="lower"):
    """Solve ``L x = b`` (``side="lower"``) or ``L.T x = b`` (``side="upper"``)."""
    L = np.asarray(L, dtype=float)
    b = np.asarray(b, dtype=float)
    if L.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {L.shape} vs {b.shape}")
    d = np.diag(L)
    if np.any(d == 0):
        raise SingularMatrixError("triangular factor", f"zero diagonal at {int(np.flatnonzero(d == 0)[0]) + 1}")
    if side == "lower":
        return sla.solve_triangular(L, b, lower=True, check_finite=False)
    if side == "upper":
        return sla.solve_triangular(L, b, lower=True, trans="T", check_finite=False)
    raise ValueError(f"side must be 'lower' or 'upper', got {side!r}")


def chol_inverse(L):
    """``K^{-1}`` from the lower Cholesky factor of ``K`` (LAPACK potri)."""
    inv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise SingularMatrixError("Cholesky factor", f"potri info={info}")
    # potri only fills the lower triangle
    return np.tril(inv) + np.tril(inv, -1).T


def chol_logdet(L):
    """``log det K`` from the Cholesky factor."""
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def spd_inverse(M, name="block"):
    """Inverse of a symmetric positive definite block via Cholesky."""
    try:
        L = chol(M)
    except NotPositiveDefiniteError as exc:
        raise SingularMatrixError(name, str(exc)) from exc
    return chol_inverse(L)


def general_inverse(M, name="block", rcond_floor=None):
    """Inverse of a square (possibly indefinite) block via LU.

    Raises :class:`SingularMatrixError` naming ``name`` when the block is
    singular to working precision.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if rcond_floor is None:
        rcond_floor = n * np.finfo(float).eps
    lu, piv, info = lapack.dgetrf(M)
    if info > 0:
        raise SingularMatrixError(name, f"exact zero pivot at {info}")
    anorm = np.linalg.norm(M, 1)
    rcond, _ = lapack.dgecon(lu, anorm, norm="1")
    if anorm == 0 or rcond < rcond_floor:
        raise SingularMatrixError(name, f"reciprocal condition {rcond:.2e}")
    inv, info = lapack.dgetri(lu, piv)
    return inv


def _invert(M, name):
    # SPD blocks take the Cholesky path; indefinite ones (bordered systems) fall back to LU
    try:
        return chol_inverse(chol(M))
    except NotPositiveDefiniteError:
        return general_inverse(M, name)


def schur_invert(M, split, via="complement"):
    """Invert ``M`` blockwise around the index vector ``split``.

    With ``A = M[split]``, ``B = M[split, -split]``, ``C = M[-split, split]``
    and ``D = M[-split]``:

    * ``via="complement"`` inverts ``D`` and the Schur complement
      ``S = A - B D^{-1} C``; the ``split`` block of the inverse is ``S^{-1}``.
    * ``via="split"`` inverts ``A`` and ``T = D - C A^{-1} B``; this is the
      route needed for bordered matrices whose ``D`` block is zero.

    If ``split`` covers every index the result is a plain inverse of ``M``.

    Raises
    ------
    SingularMatrixError
        Naming the block (``"M[-split]"``, ``"M[split]"`` or the Schur
        complement) that could not be inverted.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    i = index_array(split, n)
    j = index_array(minus(split), n)
    if j.size == 0:
        return _invert(M, "M")
    A = M[np.ix_(i, i)]
    B = M[np.ix_(i, j)]
    C = M[np.ix_(j, i)]
    D = M[np.ix_(j, j)]
    if via == "complement":
        Dinv = _invert(D, "M[-split]")
        BDinv = B @ Dinv
        Sinv = _invert(A - BDinv @ C, "Schur complement of M[-split]")
        DinvC = Dinv @ C
        top_left = Sinv
        top_right = -Sinv @ BDinv
        bottom_left = -DinvC @ Sinv
        bottom_right = Dinv + DinvC @ Sinv @ BDinv
    elif via == "split":
        Ainv = _invert(A, "M[split]")
        AinvB = Ainv @ B
        CAinv = C @ Ainv
        Tinv = _invert(D - C @ AinvB, "Schur complement of M[split]")
        top_left = Ainv + AinvB @ Tinv @ CAinv
        top_right = -AinvB @ Tinv
        bottom_left = -Tinv @ CAinv
        bottom_right = Tinv
    else:
        raise ValueError(f"via must be 'complement' or 'split', got {via!r}")
    out = np.empty_like(M)
    out[np.ix_(i, i)] = top_left
    out[np.ix_(i, j)] = top_right
    out[np.ix_(j, i)] = bottom_left
    out[np.ix_(j, j)] = bottom_right
    return out
