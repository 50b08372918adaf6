"""Covariance kernels and Simple/Universal Kriging predictors."""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations_with_replacement

import numpy as np
from scipy.spatial.distance import cdist

from . import linalg
from .errors import InputError, TrendRankError

KERNELS = ("matern52", "gaussian")
SQRT5 = np.sqrt(5.0)
VAR_CLAMP = 1e-10


def matern52(h):
    h = np.asarray(h, dtype=float)
    s = SQRT5 * h
    return (1.0 + s + s * s / 3.0) * np.exp(-s)


def gaussian(h):
    h = np.asarray(h, dtype=float)
    return np.exp(-0.5 * h * h)


_CORRELATIONS = {"matern52": matern52, "gaussian": gaussian}


@dataclass(frozen=True)
class KernelSpec:
    """Stationary kernel ``sigma2 * r(h)`` with ``h = ||(x - y) / ranges||``.

    ``ranges`` is broadcast to the input dimension when a single value is
    given.  The nugget is added on the diagonal of covariance matrices only.
    """

    family: str = "matern52"
    sigma2: float = 1.0
    ranges: tuple = (1.0,)
    nugget: float = 0.0

    def __post_init__(self):
        if self.family not in KERNELS:
            raise InputError(f"unknown kernel family {self.family!r}; expected one of {KERNELS}")
        ranges = tuple(float(r) for r in np.atleast_1d(self.ranges))
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "nugget", float(self.nugget))
        if not self.sigma2 > 0:
            raise InputError(f"sigma2 must be positive, got {self.sigma2}")
        if not ranges or not all(r > 0 for r in ranges):
            raise InputError(f"ranges must be positive, got {ranges}")
        if not self.nugget >= 0:
            raise InputError(f"nugget must be non-negative, got {self.nugget}")

    def correlation(self, h):
        return _CORRELATIONS[self.family](h)

    def with_params(self, **changes):
        kw = dict(family=self.family, sigma2=self.sigma2, ranges=self.ranges, nugget=self.nugget)
        kw.update(changes)
        return KernelSpec(**kw)

    def scaled_ranges(self, d):
        r = np.asarray(self.ranges)
        if r.size == 1:
            return np.full(d, r[0])
        if r.size != d:
            raise InputError(f"kernel has {r.size} ranges but inputs have dimension {d}")
        return r


def kernel_eval(spec, x, y):
    """Covariance ``k(x, y)`` between two points (nugget excluded)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape or x.ndim != 1:
        raise InputError(f"point dimension mismatch: {x.shape} vs {y.shape}")
    if len(spec.ranges) not in (1, x.size):
        raise InputError(f"kernel has {len(spec.ranges)} ranges but points have dimension {x.size}")
    h = np.linalg.norm((x - y) / spec.scaled_ranges(x.size))
    return spec.sigma2 * float(spec.correlation(h))


def as_design(X):
    """Coerce design points to a float array of shape (n, d)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1:
        raise InputError(f"design must be a non-empty (n, d) array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("design contains non-finite coordinates")
    return X


def cross_cov(spec, X, Y):
    """Matrix ``(k(x_i, y_j))_{ij}`` without nugget."""
    X = as_design(X)
    Y = as_design(Y)
    if X.shape[1] != Y.shape[1]:
        raise InputError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    scale = spec.scaled_ranges(X.shape[1])
    h = cdist(X / scale, Y / scale)
    return spec.sigma2 * spec.correlation(h)


def cov_matrix(spec, X):
    """Covariance matrix of the design, nugget added on the diagonal."""
    X = as_design(X)
    K = cross_cov(spec, X, X)
    K = 0.5 * (K + K.T)
    K[np.diag_indices_from(K)] = spec.sigma2 + spec.nugget
    return K


def monomial_basis(X, degree):
    """Columns ``1``, ``x_k`` and ``x_k x_l`` up to the given total degree (<= 2)."""
    X = as_design(X)
    if degree not in (0, 1, 2):
        raise InputError(f"basis degree must be 0, 1 or 2, got {degree}")
    n, d = X.shape
    cols = [np.ones(n)]
    if degree >= 1:
        cols.extend(X[:, k] for k in range(d))
    if degree >= 2:
        cols.extend(X[:, k] * X[:, l] for k, l in combinations_with_replacement(range(d), 2))
    return np.column_stack(cols)


TREND_DEGREES = {"constant": 0, "linear": 1, "quadratic": 2}


@dataclass(frozen=True)
class TrendSpec:
    """Trend of the field.

    ``mode="simple"`` uses a known mean (a constant or a callable mapping an
    (n, d) array to n values).  ``mode="universal"`` estimates coefficients
    of monomial basis functions up to ``degree``; alternatively a tabulated
    design matrix can be supplied through ``basis`` (prediction at new
    points is then unavailable).
    """

    mode: str = "simple"
    mean: object = 0.0
    degree: int = 0
    basis: object = field(default=None, compare=False)

    def __post_init__(self):
        if self.mode not in ("simple", "universal"):
            raise InputError(f"trend mode must be 'simple' or 'universal', got {self.mode!r}")

    @classmethod
    def from_name(cls, name, mean=0.0):
        """``"simple"`` or one of ``constant``/``linear``/``quadratic``."""
        if name == "simple":
            return cls("simple", mean=mean)
        if name in TREND_DEGREES:
            return cls("universal", degree=TREND_DEGREES[name])
        raise InputError(f"unknown trend {name!r}")

    @property
    def universal(self):
        return self.mode == "universal"

    def mean_values(self, X):
        X = as_design(X)
        if callable(self.mean):
            return np.asarray(self.mean(X), dtype=float).reshape(X.shape[0])
        return np.full(X.shape[0], float(self.mean))

    def design_matrix(self, X):
        if self.basis is not None:
            F = np.asarray(self.basis, dtype=float)
            if F.ndim == 1:
                F = F[:, None]
            if F.shape[0] != as_design(X).shape[0]:
                raise InputError("tabulated basis does not match the design size")
            return F
        return monomial_basis(X, self.degree)


@dataclass(frozen=True, eq=False)
class GPModel:
    """A Kriging model at fixed covariance parameters.

    Built by :func:`fit`.  ``L`` is the lower Cholesky factor of ``K``; in
    universal mode ``F`` is the trend design matrix and ``Ktilde_inv`` the
    inverse of the bordered matrix ``[[K, F], [F.T, 0]]``.
    """

    X: np.ndarray
    z: np.ndarray
    kernel: KernelSpec
    trend: TrendSpec
    K: np.ndarray
    L: np.ndarray
    mu: np.ndarray
    F: np.ndarray = None
    Ktilde_inv: np.ndarray = None

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def universal(self):
        return self.trend.universal

    @property
    def centered(self):
        """Data entering the CV formulas (trend-centred in simple mode)."""
        return self.z - self.mu

    @cached_property
    def Kinv(self):
        return linalg.chol_inverse(self.L)

    @cached_property
    def precision(self):
        """``K^{-1}`` (simple) or the top-left block of ``Ktilde^{-1}`` (universal)."""
        if self.universal:
            return self.Ktilde_inv[: self.n, : self.n]
        return self.Kinv

    @cached_property
    def beta(self):
        """GLS trend coefficients (universal mode)."""
        if not self.universal:
            raise InputError("trend coefficients exist only in universal mode")
        return self.Ktilde_inv[self.n :, : self.n] @ self.z

    @property
    def Ktilde(self):
        if not self.universal:
            raise InputError("bordered matrix exists only in universal mode")
        p = self.F.shape[1]
        return np.block([[self.K, self.F], [self.F.T, np.zeros((p, p))]])

    def with_data(self, z):
        """Same design and kernel, new responses (factorizations reused)."""
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.size != self.n:
            raise InputError(f"expected {self.n} responses, got {z.size}")
        return GPModel(self.X, z, self.kernel, self.trend, self.K, self.L, self.mu, self.F, self.Ktilde_inv)


def check_trend_rank(F, fold=None):
    p = F.shape[1]
    rank = np.linalg.matrix_rank(F) if F.shape[0] else 0
    if rank < p:
        raise TrendRankError(rank, p, fold)


def bordered_inverse(L, F):
    """Explicit four-block inverse of ``[[K, F], [F.T, 0]]`` from ``chol(K)``.

    Top-left ``K^-1 - K^-1 F G^-1 F' K^-1``, off-diagonal ``K^-1 F G^-1``,
    bottom-right ``-G^-1`` with ``G = F' K^-1 F``.
    """
    n, p = F.shape
    Kinv = linalg.chol_inverse(L)
    KinvF = Kinv @ F
    Ginv = linalg.spd_inverse(F.T @ KinvF, "F' K^-1 F")
    W = KinvF @ Ginv
    out = np.empty((n + p, n + p))
    out[:n, :n] = Kinv - W @ KinvF.T
    out[:n, n:] = W
    out[n:, :n] = W.T
    out[n:, n:] = -Ginv
    return out


def fit(X, z, kernel, trend=None):
    """Assemble and factorize the covariance system.

    Raises
    ------
    NotPositiveDefiniteError
        If the covariance matrix is not positive definite.
    TrendRankError
        If the universal-mode design matrix is rank deficient.
    """
    X = as_design(X)
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != X.shape[0]:
        raise InputError(f"{X.shape[0]} design points but {z.size} responses")
    if not np.all(np.isfinite(z)):
        raise InputError("responses contain non-finite values")
    trend = trend or TrendSpec()
    kernel.scaled_ranges(X.shape[1])
    K = cov_matrix(kernel, X)
    L = linalg.chol(K)
    n = X.shape[0]
    if not trend.universal:
        return GPModel(X, z, kernel, trend, K, L, trend.mean_values(X))
    F = trend.design_matrix(X)
    check_trend_rank(F)
    p = F.shape[1]
    Ktilde = np.block([[K, F], [F.T, np.zeros((p, p))]])
    Ktilde_inv = linalg.schur_invert(Ktilde, tuple(range(1, n + 1)), via="split")
    Ktilde_inv = 0.5 * (Ktilde_inv + Ktilde_inv.T)
    return GPModel(X, z, kernel, trend, K, L, np.zeros(n), F, Ktilde_inv)


def _points(model, x):
    x = np.asarray(x, dtype=float)
    d = model.X.shape[1]
    if x.ndim <= 1 and x.size == d:
        return x.reshape(1, d), True
    return as_design(x.reshape(-1, d) if x.ndim == 1 else x), False


def predict(model, x):
    """Kriging mean and variance at one point or an (m, d) array of points.

    Returns floats for a single point, arrays of length m otherwise.
    """
    Xnew, single = _points(model, x)
    kern = model.kernel
    k = cross_cov(kern, model.X, Xnew)  # (n, m)
    prior = np.full(Xnew.shape[0], kern.sigma2)
    if model.universal:
        if model.trend.basis is not None:
            raise InputError("prediction requires a functional basis, not a tabulated one")
        f = model.trend.design_matrix(Xnew)  # (m, p)
        n = model.n
        kf = np.vstack([k, f.T])
        weights = model.Ktilde_inv @ kf  # [lambda; ell] per column, bordered system solution
        mean = model.z @ weights[:n]
        var = prior - np.einsum("ij,ij->j", kf, weights)
    else:
        mu = model.trend.mean_values(Xnew)
        alpha = linalg.tri_solve(model.L, linalg.tri_solve(model.L, model.centered), "upper")
        mean = mu + k.T @ alpha
        w = linalg.tri_solve(model.L, k)
        var = prior - np.einsum("ij,ij->j", w, w)
    tol = VAR_CLAMP * kern.sigma2
    var = np.where((var < 0) & (var >= -tol), 0.0, var)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var
