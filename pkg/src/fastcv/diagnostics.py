"""Pivotal diagnostics for CV residuals: whitening, QQ data, chi-square."""

from dataclasses import dataclass

import numpy as np
from scipy import special

from . import linalg
from .errors import InputError


@dataclass(frozen=True)
class WhitenedResiduals:
    values: np.ndarray
    transform_id: str

    def __len__(self):
        return self.values.size


def _fold_solve(result):
    """``D^{-1} E`` computed fold by fold."""
    out = np.empty(result.n)
    for idx, C in zip(result.partition.zero_based(), result.fold_cov):
        Lc = linalg.chol(C)
        out[idx] = linalg.tri_solve(Lc, linalg.tri_solve(Lc, result.residuals[idx]), side="upper")
    return out


def whiten(model, result):
    """Map CV residuals to a vector with identity covariance under the model.

    Simple Kriging: ``S D^{-1} E`` with ``S = L.T`` the upper Cholesky
    factor (``K = S.T S``); this equals ``L^{-1}(z - mu)`` whatever the
    partition.

    Universal Kriging: ``S D^{-1} E`` has a rank ``n - p`` projector as
    covariance; its coordinates on an orthonormal basis of the range are
    returned, giving ``n - p`` independent standard normals.
    """
    if result.n != model.n:
        raise InputError(f"CV result has {result.n} rows but the model has {model.n}")
    v = model.L.T @ _fold_solve(result)
    if not model.universal:
        return WhitenedResiduals(v, "L^T D^-1 E (K = L L^T)")
    P = model.L.T @ result.info.get("precision", model.precision) @ model.L
    evals, evecs = np.linalg.eigh(0.5 * (P + P.T))
    rank = model.n - model.F.shape[1]
    U = evecs[:, np.argsort(evals)[::-1][:rank]]
    return WhitenedResiduals(U.T @ v, f"U^T L^T Dt^-1 E (rank {rank} projector basis)")


def standardize(result):
    """Residuals divided by their own standard deviations (correlation ignored)."""
    return WhitenedResiduals(result.residuals / result.fold_sd, "E / sd(E)")


def normal_quantiles(n):
    """Standard-normal quantiles at plotting positions ``(i - 0.5) / n``."""
    return special.ndtri((np.arange(1, n + 1) - 0.5) / n)


def qq_data(w):
    """Pairs ``(theoretical, sample)`` as an array of shape (n, 2)."""
    values = np.asarray(getattr(w, "values", w), dtype=float).ravel()
    if values.size < 2:
        raise InputError("QQ data needs at least two values")
    return np.column_stack([normal_quantiles(values.size), np.sort(values)])


def chi2_stat(w):
    """``(||w||^2, len(w))``."""
    values = np.asarray(getattr(w, "values", w), dtype=float).ravel()
    return float(values @ values), int(values.size)


def chi2_pvalue(stat, dof):
    """Upper-tail probability ``P(chi2_dof >= stat)``."""
    return float(special.gammaincc(0.5 * dof, 0.5 * stat))
