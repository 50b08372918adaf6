"""Covariance-parameter estimation from likelihood and CV criteria.

Criteria take a :class:`~fastcv.gp.KernelSpec` for the covariance
parameters.  ``crit_c2`` only depends on the correlation part (the scale
is divided out); the log-density criteria use the full kernel.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diagnostics, gp, linalg
from .cv import fast_cv, naive_cv
from .errors import FastCVError, InputError, NumericalError, OptimizationError

LOG2PI = math.log(2.0 * math.pi)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def sigma2_ml(R, z):
    """Maximum-likelihood scale ``z' R^-1 z / n`` (centred ``z``)."""
    z = np.asarray(z, dtype=float)
    v = linalg.tri_solve(linalg.chol(R), z)
    return float(v @ v) / z.size


def sigma2_loo(R, z):
    """Leave-one-out scale ``z' R^-1 diag(R^-1)^-1 R^-1 z / n``."""
    z = np.asarray(z, dtype=float)
    P = linalg.chol_inverse(linalg.chol(R))
    Pz = P @ z
    return float(np.sum(Pz * Pz / np.diag(P))) / z.size


def sigma2_loo_corrected(R, z):
    """Scale from the covariance-corrected LOO criterion.

    Computed from the LOO residuals ``e = diag(R^-1)^-1 R^-1 z`` as
    ``e' diag(R^-1) R diag(R^-1) e / n``; algebraically identical to
    :func:`sigma2_ml`.
    """
    R = np.asarray(R, dtype=float)
    z = np.asarray(z, dtype=float)
    P = linalg.chol_inverse(linalg.chol(R))
    d = np.diag(P)
    e = (P @ z) / d
    de = d * e
    return float(de @ R @ de) / z.size


def estimator_variances(R, sigma2):
    """Sampling variances of the ML and LOO scale estimators."""
    R = np.asarray(R, dtype=float)
    n = R.shape[0]
    P = linalg.chol_inverse(linalg.chol(R))
    M = P / np.diag(P)[None, :]
    var_ml = 2.0 * sigma2**2 / n
    var_loo = 2.0 * sigma2**2 * float(np.sum(M * M.T)) / n**2
    return var_ml, var_loo


def _model(kernel, X, z, trend):
    return gp.fit(X, z, kernel, trend)


def _unit_scale(kernel):
    return kernel.with_params(sigma2=1.0, nugget=kernel.nugget / kernel.sigma2)


def _gaussian_logpdf(e, C):
    L = linalg.chol(C)
    v = linalg.tri_solve(L, e)
    return -0.5 * (e.size * LOG2PI + linalg.chol_logdet(L) + float(v @ v))


def cv_result(kernel, X, z, partition, trend=None, naive=False):
    model = _model(kernel, X, z, trend)
    if naive:
        return naive_cv(model, partition)
    return fast_cv(model, partition, full_cov=False)


def crit_c2(kernel, X, z, partition, trend=None, naive=False):
    """Sum of squared CV residuals; independent of the kernel scale."""
    res = cv_result(_unit_scale(kernel), X, z, partition, trend, naive)
    return float(res.residuals @ res.residuals)


def crit_c2_closed(kernel, X, z, partition, trend=None):
    """``z' P Dbar^2 P z`` evaluated with explicit matrices (for checks)."""
    model = _model(_unit_scale(kernel), X, z, trend)
    P = model.precision
    res = fast_cv(model, partition, full_cov=False, precision=P)
    D = res.D()
    Pz = P @ model.centered
    return float(Pz @ D @ D @ Pz)


def crit_c2_sphered(kernel, X, z, partition, trend=None):
    """Squared norm of the whitened CV residuals.

    Whitening removes the dependence on the partition, so in simple mode
    this equals ``z' R^-1 z`` (centred ``z``) for every partition.
    """
    model = _model(_unit_scale(kernel), X, z, trend)
    w = diagnostics.whiten(model, fast_cv(model, partition, full_cov=False)).values
    return float(w @ w)


def crit_c3(kernel, X, z, partition, trend=None, naive=False):
    """Multiple-fold pseudo-likelihood: sum of per-fold conditional log densities."""
    res = cv_result(kernel, X, z, partition, trend, naive)
    return float(sum(_gaussian_logpdf(e, C) for e, C in zip(res.fold_residuals, res.fold_cov)))


def log_likelihood(kernel, X, z, trend=None):
    """Gaussian log-likelihood; universal mode plugs in the GLS trend."""
    model = _model(kernel, X, z, trend)
    r = model.z - model.F @ model.beta if model.universal else model.centered
    v = linalg.tri_solve(model.L, r)
    return -0.5 * (model.n * LOG2PI + linalg.chol_logdet(model.L) + float(v @ v))


def neg_log_lik(kernel, X, z, trend=None):
    return -log_likelihood(kernel, X, z, trend)


def crit_c3_corrected(kernel, X, z, partition, trend=None):
    """Joint log density of all CV residuals.

    The residual vector is ``E = D K^-1 z``, a linear map of the data, so its
    density is ``loglik - log det D + log det K`` where ``D`` stacks the fold
    covariances.  Simple Kriging only (the universal residual covariance is
    singular).
    """
    if trend is not None and trend.universal:
        raise InputError("the corrected pseudo-likelihood is defined for Simple Kriging only")
    model = _model(kernel, X, z, trend)
    res = fast_cv(model, partition, full_cov=False)
    logdet_D = sum(linalg.chol_logdet(linalg.chol(C)) for C in res.fold_cov)
    return log_likelihood(kernel, X, z, trend) - logdet_D + linalg.chol_logdet(model.L)


def profiled_neg_log_lik(kernel, X, z, trend=None):
    """Negative log-likelihood with the scale replaced by its ML estimate.

    Returns ``(value, sigma2_hat)``.
    """
    model = _model(_unit_scale(kernel), X, z, trend)
    r = model.z - model.F @ model.beta if model.universal else model.centered
    v = linalg.tri_solve(model.L, r)
    n = model.n
    s2 = float(v @ v) / n
    if s2 <= 0:
        raise NumericalError("profiled scale estimate is zero")
    return 0.5 * (n * LOG2PI + n * math.log(s2) + linalg.chol_logdet(model.L) + n), s2


CRITERIA = ("c2_cv", "c3_cv", "c3_corrected", "neg_log_lik")


@dataclass(frozen=True)
class CriterionSpec:
    """Which criterion to optimize.

    ``sigma2=None`` profiles the scale; this is only allowed for ``c2_cv``
    (scale-free) and ``neg_log_lik`` (closed-form estimate).
    """

    kind: str
    partition: object = None
    sigma2: float = None

    def __post_init__(self):
        if self.kind not in CRITERIA:
            raise InputError(f"unknown criterion {self.kind!r}; expected one of {CRITERIA}")
        if self.kind in ("c2_cv", "c3_cv", "c3_corrected") and self.partition is None:
            raise InputError(f"criterion {self.kind} needs a fold partition")
        if self.partition is not None:
            self.partition.check()
        if self.sigma2 is None and self.kind in ("c3_cv", "c3_corrected"):
            raise InputError(f"criterion {self.kind} needs a fixed sigma2")

    def objective(self, kernel, X, z, trend=None):
        """Value to minimize and the scale that goes with it."""
        if self.kind == "c2_cv":
            return crit_c2(kernel, X, z, self.partition, trend), None
        if self.kind == "neg_log_lik":
            if self.sigma2 is None:
                return profiled_neg_log_lik(kernel, X, z, trend)
            return neg_log_lik(kernel.with_params(sigma2=self.sigma2), X, z, trend), self.sigma2
        k = kernel.with_params(sigma2=self.sigma2)
        if self.kind == "c3_cv":
            return -crit_c3(k, X, z, self.partition, trend), self.sigma2
        return -crit_c3_corrected(k, X, z, self.partition, trend), self.sigma2


@dataclass
class EstimationReport:
    criterion: str
    theta_grid: list
    values: list
    theta_hat: float
    value_hat: float
    sigma2_hat: float = None
    at_boundary: bool = False
    failures: dict = field(default_factory=dict)
    seed: int = None

    def to_dict(self):
        d = asdict(self)
        d["values"] = [None if not np.isfinite(v) else v for v in self.values]
        d["failures"] = {repr(k): v for k, v in self.failures.items()}
        return d

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def curvature(self):
        """Second difference of the curve at its grid minimum (log-spaced grid)."""
        v = np.asarray(self.values, dtype=float)
        k = int(np.nanargmin(v))
        k = min(max(k, 1), v.size - 2)
        h = np.log(self.theta_grid[1]) - np.log(self.theta_grid[0])
        return float((v[k - 1] - 2 * v[k] + v[k + 1]) / h**2)


def golden_section(f, lo, hi, tol=1e-4, max_iter=200):
    """Minimize a unimodal ``f`` on ``[lo, hi]`` down to a bracket of width ``tol``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _isotropic(kernel, theta):
    return kernel.with_params(ranges=(theta,) * len(kernel.ranges))


def optimize_range(spec, X, z, kernel, bounds, trend=None, n_grid=64, rel_tol=1e-4, seed=None):
    """Grid search over a common range ``theta`` followed by golden-section refinement.

    The grid is log-spaced on ``bounds``; refinement runs on the bracket
    formed by the neighbours of the best grid point.  A minimum on the
    first or last grid point is flagged via ``at_boundary`` and not refined.
    """
    lo, hi = bounds
    if not (0 < lo < hi):
        raise InputError(f"bounds must satisfy 0 < lo < hi, got {bounds}")
    grid = np.geomspace(lo, hi, n_grid)
    values = np.full(n_grid, np.nan)
    scales = [None] * n_grid
    failures = {}
    for k, theta in enumerate(grid):
        try:
            values[k], scales[k] = spec.objective(_isotropic(kernel, theta), X, z, trend)
        except FastCVError as exc:
            failures[float(theta)] = str(exc)
    if np.all(np.isnan(values)):
        raise OptimizationError("criterion failed at every grid point", failures)
    values[~np.isfinite(values)] = np.nan
    k = int(np.nanargmin(values))
    at_boundary = k in (0, n_grid - 1)
    theta_hat, value_hat, s2 = float(grid[k]), float(values[k]), scales[k]
    if not at_boundary:

        def f(t):
            try:
                return spec.objective(_isotropic(kernel, math.exp(t)), X, z, trend)[0]
            except FastCVError:
                return math.inf

        # in log(theta), an absolute bracket width is a relative width in theta
        t, v = golden_section(f, math.log(grid[k - 1]), math.log(grid[k + 1]), tol=rel_tol)
        if v <= value_hat:
            theta_hat, value_hat = math.exp(t), v
            s2 = spec.objective(_isotropic(kernel, theta_hat), X, z, trend)[1]
    if s2 is None:
        model = _model(_unit_scale(_isotropic(kernel, theta_hat)), X, z, trend)
        r = model.z - model.F @ model.beta if model.universal else model.centered
        s2 = sigma2_ml(model.K, r)
    return EstimationReport(
        criterion=spec.kind,
        theta_grid=grid.tolist(),
        values=values.tolist(),
        theta_hat=theta_hat,
        value_hat=value_hat,
        sigma2_hat=s2,
        at_boundary=at_boundary,
        failures=failures,
        seed=seed,
    )
