"""Acceptance suite: one test per criterion, summarized at the end of the run."""

import numpy as np
import pytest

from fastcv import bench, corpus, cv, diagnostics, folds, gp, linalg
from fastcv import estimation as est
from helpers import block_diagonal_instance, instances


def _fitted_matern(ds, bounds=(0.01, 5.0)):
    start = gp.KernelSpec("matern52", 1.0, (0.1,))
    rep = est.optimize_range(est.CriterionSpec("neg_log_lik"), ds.X, ds.y, start, bounds)
    assert not rep.at_boundary
    return gp.KernelSpec("matern52", rep.sigma2_hat, (rep.theta_hat,))


@pytest.fixture(scope="module")
def oracle_instances():
    return instances(200, seed=2024)


@pytest.mark.criterion(1, "fast_cv equals naive_cv on 200 random instances")
def test_oracle_equivalence(oracle_instances, record):
    worst_mean = worst_cov = 0.0
    modes = set()
    for X, z, kernel, trend, part in oracle_instances:
        model = gp.fit(X, z, kernel, trend)
        errs = cv.compare(cv.fast_cv(model, part), cv.naive_cv(model, part))
        worst_mean = max(worst_mean, errs["rel_err_mean"])
        worst_cov = max(worst_cov, errs["rel_err_cov"])
        modes.add((trend.mode, kernel.family, kernel.nugget > 0))
    record(f"max rel_err_mean {worst_mean:.1e}, max rel_err_cov {worst_cov:.1e}")
    assert len(modes) == 8
    assert worst_mean <= 1e-10
    assert worst_cov <= 1e-9


@pytest.mark.criterion(2, "LOO accuracy at n=100")
def test_loo_accuracy_n100(record):
    ds = corpus.gen_corpus("xiong", n=100)
    model = gp.fit(ds.X, ds.y, _fitted_matern(ds, (0.01, 2.0)))
    part = folds.loo(100)
    errs = cv.compare(cv.fast_cv(model, part), cv.naive_cv(model, part))
    record(f"rel_err_mean {errs['rel_err_mean']:.1e}, rel_err_cov {errs['rel_err_cov']:.1e}")
    assert errs["rel_err_mean"] <= 1e-12
    assert errs["rel_err_cov"] <= 1e-10


@pytest.mark.slow
@pytest.mark.criterion(3, "LOO speed-up at n=1000")
def test_speedup_n1000(record):
    cfg = bench.BenchConfig(sizes=[1000], folds="loo", seeds=10, warmup=0, repeats=1)
    report = bench.run_bench(cfg)
    assert not report.failures
    med = report.median_speedups(1000)[0]
    record(f"median speed-up {med:.0f} over 10 seeds")
    assert med >= 20


@pytest.mark.slow
@pytest.mark.criterion(4, "halvings sweep at n=256")
def test_halvings_n256(record):
    cfg = bench.BenchConfig(sizes=[256], folds="halvings", seeds=10)
    report = bench.run_bench(cfg)
    assert not report.failures
    med = report.median_speedups(256)
    record("medians " + " ".join(f"{m:.2f}" for m in med))
    assert [a["q"] for a in report.aggregates()] == bench.halvings(256)
    assert bench.monotone_nonincreasing(med, allowed_inversions=1)
    assert med[0] > 1


@pytest.mark.criterion(5, "crossover fold count")
def test_crossover(record):
    assert bench.crossover_q(1.0) == 4
    assert bench.crossover_q(1e-6) == 3
    for n in (64, 256, 1024):
        for q in bench.halvings(n):
            if q >= 4:
                naive, close = bench.predicted_costs(n, q, 1.0)
                assert naive / close > 1
    record("q*=4 at alpha=1, q*=3 at alpha=1e-6")


@pytest.mark.criterion(6, "scale estimators")
def test_scale_estimators(record):
    rng = np.random.default_rng(6)
    worst = 0.0
    done = 0
    while done < 100:
        n = int(rng.integers(3, 40))
        X = rng.uniform(size=(n, 2))
        R = gp.cov_matrix(gp.KernelSpec("matern52", 1.0, (float(rng.uniform(0.05, 0.3)),)), X)
        # both routes carry O(cond * eps) round-off
        if np.linalg.cond(R) > 1e4:
            continue
        done += 1
        z = rng.normal(size=n)
        ml = est.sigma2_ml(R, z)
        worst = max(worst, abs(est.sigma2_loo_corrected(R, z) - ml) / ml)
    assert worst <= 1e-12

    n, sigma2, draws = 20, 2.0, 10_000
    R = gp.cov_matrix(gp.KernelSpec("matern52", 1.0, (0.15,)), np.linspace(0, 1, n))
    L = linalg.chol(R)
    Z = np.sqrt(sigma2) * rng.standard_normal((draws, n)) @ L.T
    ml = np.array([est.sigma2_ml(R, z) for z in Z])
    loo = np.array([est.sigma2_loo(R, z) for z in Z])
    var_ml, var_loo = est.estimator_variances(R, sigma2)
    rel = abs(ml.var(ddof=1) / var_ml - 1)
    record(f"identity err {worst:.1e}, Var(ML) off by {100 * rel:.1f}%, Var(LOO)/Var(ML) {loo.var() / ml.var():.2f}")
    assert rel <= 0.05
    assert loo.var(ddof=1) >= ml.var(ddof=1)
    assert var_loo > var_ml


@pytest.mark.criterion(7, "independent folds")
def test_block_diagonal(record):
    worst_cross = worst_c3 = worst_corr = 0.0
    for seed, sizes in enumerate([(3, 2, 4), (1, 5), (2, 2, 2, 2), (6,), (4, 1, 3, 2)]):
        for family in gp.KERNELS:
            X, z, kernel, part = block_diagonal_instance(sizes, seed=seed, family=family)
            model = gp.fit(X, z, kernel)
            res = cv.fast_cv(model, part)
            labels = part.labels
            cross = res.full_cov[labels[:, None] != labels[None, :]]
            worst_cross = max(worst_cross, float(np.max(np.abs(cross), initial=0.0)))
            ll = est.log_likelihood(kernel, X, z)
            worst_c3 = max(worst_c3, abs(est.crit_c3(kernel, X, z, part) - ll) / abs(ll))
            worst_corr = max(worst_corr, abs(est.crit_c3_corrected(kernel, X, z, part) - ll) / abs(ll))
    record(f"max |cross block| {worst_cross:.1e}, c3 err {worst_c3:.1e}, corrected err {worst_corr:.1e}")
    assert worst_cross <= 1e-14
    assert worst_c3 <= 1e-10
    assert worst_corr <= 1e-10


@pytest.mark.criterion(8, "whitening")
def test_whitening(oracle_instances, record):
    worst = 0.0
    for X, z, kernel, trend, part in oracle_instances:
        if trend.universal:
            continue
        model = gp.fit(X, z, kernel, trend)
        w = diagnostics.whiten(model, cv.fast_cv(model, part, full_cov=False)).values
        ref = np.linalg.solve(np.linalg.cholesky(model.K), z - model.mu)
        worst = max(worst, float(np.max(np.abs(w - ref))))
    assert worst <= 1e-10

    rng = np.random.default_rng(8)
    n, draws = 25, 10_000
    X = np.linspace(0, 1, n)
    model = gp.fit(X, np.zeros(n), gp.KernelSpec("matern52", 2.0, (0.2,)))
    part = folds.regular(n, 5, seed=8)
    L = linalg.chol(model.K)
    W = np.empty((draws, n))
    for k in range(draws):
        m = model.with_data(L @ rng.standard_normal(n))
        W[k] = diagnostics.whiten(m, cv.fast_cv(m, part, full_cov=False)).values
    stats = np.sum(W * W, axis=1)
    cov_err = float(np.max(np.abs(np.cov(W.T) - np.eye(n))))
    record(f"identity err {worst:.1e}, mean chi2 {stats.mean():.2f}, cov err {cov_err:.3f}")
    assert 24.5 <= stats.mean() <= 25.5
    assert cov_err <= 5e-2


@pytest.mark.criterion(9, "negative LOO correlation on the 10-point grid")
def test_loo_correlation_sign(record):
    ds = corpus.gen_corpus("xiong", n=10)
    model = gp.fit(ds.X, ds.y, _fitted_matern(ds))
    r12 = cv.loo_corr(model)[0, 1]
    record(f"corr(E1, E2) = {r12:.3f}")
    assert r12 < -0.3


@pytest.mark.criterion(10, "LOO is myopic on the paired design")
def test_paired_design(record):
    ds = corpus.gen_corpus("paired", seed=0)
    model = gp.fit(ds.X, ds.y, _fitted_matern(ds))
    pairs = folds.clusters(ds.X, radius=0.01)
    assert pairs.q == 10
    loo_max = np.max(np.abs(cv.naive_cv(model, folds.loo(ds.n)).residuals))
    pair_max = np.max(np.abs(cv.naive_cv(model, pairs).residuals))
    record(f"max|LOO| / max|pair-fold| = {loo_max / pair_max:.3f}")
    assert loo_max < 0.2 * pair_max


@pytest.mark.criterion(11, "closed-form C2")
def test_c2_closed_form(oracle_instances, record):
    worst = worst_scale = 0.0
    for X, z, kernel, trend, part in oracle_instances:
        c2 = est.crit_c2(kernel, X, z, part, trend)
        unit = kernel.with_params(sigma2=1.0, nugget=kernel.nugget / kernel.sigma2)
        e = cv.naive_cv(gp.fit(X, z, unit, trend), part).residuals
        worst = max(worst, abs(c2 - e @ e) / (e @ e))
        for c in (0.25, 8.0):
            scaled = kernel.with_params(sigma2=c * kernel.sigma2, nugget=c * kernel.nugget)
            worst_scale = max(worst_scale, abs(est.crit_c2(scaled, X, z, part, trend) - c2))
    record(f"max rel err {worst:.1e}, max change under rescaling {worst_scale:.1e}")
    assert worst <= 1e-10
    assert worst_scale == 0.0
