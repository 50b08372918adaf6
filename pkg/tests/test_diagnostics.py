from statistics import NormalDist

import numpy as np
import pytest
from scipy import stats

from fastcv import corpus, cv, diagnostics, folds, gp, linalg
from fastcv.errors import InputError
from helpers import instances

M52 = gp.KernelSpec("matern52", 1.0, (0.2,))


def test_identity_kernel_whitening_returns_data():
    X = np.arange(6.0) * 100.0
    z = np.random.default_rng(0).normal(size=6)
    model = gp.fit(X, z, gp.KernelSpec("gaussian", 1.0, (0.1,)))
    for part in (folds.loo(6), folds.regular(6, 2)):
        w = diagnostics.whiten(model, cv.fast_cv(model, part))
        np.testing.assert_allclose(w.values, z, rtol=1e-14)


def test_whitening_equals_triangular_solve():
    for X, z, kernel, trend, part in instances(30, seed=31, universal=False):
        model = gp.fit(X, z, kernel, trend)
        w = diagnostics.whiten(model, cv.fast_cv(model, part, full_cov=False)).values
        ref = linalg.tri_solve(np.linalg.cholesky(model.K), z - model.mu)
        assert np.max(np.abs(w - ref)) <= 1e-10


def test_whitening_does_not_depend_on_partition():
    rng = np.random.default_rng(1)
    model = gp.fit(np.linspace(0, 1, 20), rng.normal(size=20), M52)
    parts = [folds.loo(20), folds.regular(20, 4, seed=1), folds.regular(20, 7, seed=2), folds.regular(20, 1)]
    ws = [diagnostics.whiten(model, cv.fast_cv(model, p, full_cov=False)).values for p in parts]
    for w in ws[1:]:
        assert np.max(np.abs(w - ws[0])) <= 1e-9


def test_whitening_rejects_mismatch():
    model = gp.fit(np.linspace(0, 1, 5), np.zeros(5), M52)
    other = gp.fit(np.linspace(0, 1, 6), np.zeros(6), M52)
    with pytest.raises(InputError):
        diagnostics.whiten(model, cv.fast_cv(other, folds.loo(6)))


def _prior_whitened(n, draws, seed, trend=None, q=None):
    rng = np.random.default_rng(seed)
    model = gp.fit(np.linspace(0, 1, n), np.zeros(n), M52, trend)
    part = folds.regular(n, q or n, seed=seed)
    L = linalg.chol(model.K)
    out = []
    for _ in range(draws):
        m = model.with_data(L @ rng.standard_normal(n))
        out.append(diagnostics.whiten(m, cv.fast_cv(m, part, full_cov=False)).values)
    return np.array(out)


def test_whitened_prior_draws_have_identity_covariance():
    W = _prior_whitened(20, 10_000, seed=2, q=4)
    assert np.max(np.abs(np.cov(W.T) - np.eye(20))) <= 5e-2


def test_chi2_mean_and_variance_monte_carlo():
    W = _prior_whitened(25, 10_000, seed=3)
    s = np.array([diagnostics.chi2_stat(w)[0] for w in W])
    assert 24.79 <= s.mean() <= 25.21
    # Var(chi2_25) = 50; the sample variance has standard error about 50 * sqrt(2 / 1e4 * (1 + 6 / 25))
    assert abs(s.var(ddof=1) - 50.0) <= 3 * 50 * np.sqrt(2 / 1e4 * (1 + 6 / 25))


def test_universal_whitening_monte_carlo():
    trend = gp.TrendSpec.from_name("linear")
    W = _prior_whitened(15, 10_000, seed=4, trend=trend, q=5)
    assert W.shape[1] == 13
    assert np.max(np.abs(np.cov(W.T) - np.eye(13))) <= 5e-2


def test_universal_whitening_ignores_trend_coefficients():
    trend = gp.TrendSpec.from_name("linear")
    X = np.linspace(0, 1, 12)
    z = np.random.default_rng(5).normal(size=12)
    part = folds.regular(12, 3, seed=5)
    w = []
    for shift in (0.0, 3.0 - 2.0 * X):
        m = gp.fit(X, z + shift, M52, trend)
        w.append(diagnostics.whiten(m, cv.fast_cv(m, part)).values)
    np.testing.assert_allclose(w[0], w[1], atol=1e-9)


def test_standardized_residuals_stay_correlated():
    ds = corpus.gen_corpus("xiong", n=10)
    model = gp.fit(ds.X, ds.y, gp.KernelSpec("matern52", 0.09, (0.13,)))
    C = cv.loo_corr(model)
    assert np.max(np.abs(C - np.diag(np.diag(C)))) > 0.1
    res = cv.fast_cv(model, folds.loo(10))
    np.testing.assert_allclose(diagnostics.standardize(res).values, res.residuals / np.sqrt(np.diag(res.full_cov)))


def test_normal_quantiles_against_stdlib():
    n = 10
    ref = [NormalDist().inv_cdf((i - 0.5) / n) for i in range(1, n + 1)]
    np.testing.assert_allclose(diagnostics.normal_quantiles(n), ref, rtol=1e-12)


def test_qq_fixed_point():
    q = diagnostics.normal_quantiles(15)
    pts = diagnostics.qq_data(q[::-1])
    np.testing.assert_allclose(pts[:, 0], pts[:, 1], atol=1e-12)


def test_qq_constant_vector():
    pts = diagnostics.qq_data(np.full(6, 2.5))
    assert np.all(pts[:, 1] == 2.5)
    assert np.all(np.diff(pts[:, 0]) > 0)


def test_qq_seeded_draw_against_independent_sort():
    w = np.random.default_rng(6).normal(size=10)
    pts = diagnostics.qq_data(diagnostics.WhitenedResiduals(w, "test"))
    assert pts[:, 1].tolist() == sorted(w.tolist())
    np.testing.assert_allclose(pts[:, 0], [NormalDist().inv_cdf((i + 0.5) / 10) for i in range(10)], rtol=1e-12)


def test_qq_needs_two_values():
    with pytest.raises(InputError):
        diagnostics.qq_data([1.0])


def test_chi2_stat_trivial():
    assert diagnostics.chi2_stat(np.zeros(7)) == (0.0, 7)
    assert diagnostics.chi2_stat(np.eye(5)[0]) == (1.0, 5)


def test_chi2_pvalue_against_scipy():
    for stat, dof in [(3.0, 5), (25.0, 25), (60.0, 40)]:
        assert diagnostics.chi2_pvalue(stat, dof) == pytest.approx(stats.chi2.sf(stat, dof), rel=1e-12)
