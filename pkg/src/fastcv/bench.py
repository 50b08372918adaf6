"""Timing fast versus naive cross-validation, plus a first-order cost model."""

import csv
import json
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from threadpoolctl import threadpool_limits

from . import folds as folds_mod
from . import gp, linalg
from .cv import compare, fast_cv, naive_cv, rel_err  # noqa: F401  (rel_err re-exported)
from .errors import FastCVError, InputError

CSV_FIELDS = ["n", "q", "seed", "t_naive_s", "t_fast_s", "speedup", "rel_err_mean", "rel_err_cov"]


def halvings(n):
    """``n, n/2, ..., 2`` (integer halving while the fold count stays >= 2)."""
    out = []
    q = n
    while q >= 2:
        out.append(q)
        q //= 2
    return out


def predicted_costs(n, q, alpha=1.0):
    """First-order costs ``(kappa_naive, kappa_close)`` with unit cubic constant.

    ``kappa_naive = q (n - r)^3`` for ``q`` inversions of the retained
    blocks and ``kappa_close = alpha n^3 + q r^3`` for one full inversion
    (damped by ``alpha``) plus ``q`` fold-block inversions, ``r = n / q``.
    A non-integer ``n / q`` is rounded with a warning.
    """
    if not 0 < alpha <= 1:
        raise InputError(f"alpha must lie in (0, 1], got {alpha}")
    if not 1 <= q <= n:
        raise InputError(f"need 1 <= q <= n, got n={n}, q={q}")
    r = n / q
    if n % q:
        r = round(r)
        warnings.warn(f"n={n} is not a multiple of q={q}; using r={r}", stacklevel=2)
    if q == 1:
        warnings.warn("q=1 predicts from an empty set; naive cost is degenerate", stacklevel=2)
    return q * (n - r) ** 3, alpha * n**3 + q * r**3


def crossover_q(alpha=1.0):
    """Smallest integer ``q >= 2`` with ``(q - 1)^3 >= alpha q^2 + 1``."""
    if not 0 < alpha <= 1:
        raise InputError(f"alpha must lie in (0, 1], got {alpha}")
    q = 2
    while (q - 1) ** 3 < alpha * q * q + 1:
        q += 1
    return q


def monotone_nonincreasing(values, allowed_inversions=0):
    """True if ``values`` decreases weakly except for at most ``allowed_inversions`` steps."""
    ups = sum(1 for a, b in zip(values, values[1:]) if b > a)
    return ups <= allowed_inversions


@dataclass
class BenchConfig:
    """Benchmark grid.

    ``folds`` is ``"loo"``, ``"halvings"`` or a list of fold counts.  Each
    (n, q, seed) cell discards ``warmup`` runs per method and keeps the
    minimum of ``repeats`` timed runs.
    """

    sizes: list = field(default_factory=lambda: [100])
    folds: object = "loo"
    seeds: int = 50
    seed0: int = 0
    kernel: gp.KernelSpec = field(default_factory=lambda: gp.KernelSpec("matern52", 1.0, (0.1,)))
    trend: str = "simple"
    rebuild_chol: bool = False
    warmup: int = 3
    repeats: int = 3
    threads: int = 1

    def __post_init__(self):
        if any(n < 2 for n in self.sizes):
            raise InputError("design sizes must be >= 2")
        if self.seeds < 1 or self.repeats < 1 or self.warmup < 0:
            raise InputError("need seeds >= 1, repeats >= 1, warmup >= 0")
        for n in self.sizes:
            if any(q > n or q < 1 for q in self.fold_counts(n)):
                raise InputError(f"fold counts must lie in 1..{n}")

    def fold_counts(self, n):
        if self.folds == "loo":
            return [n]
        if self.folds == "halvings":
            return halvings(n)
        return [int(q) for q in self.folds]

    @classmethod
    def from_mapping(cls, cfg):
        """Build from flat string key-values (config file or CLI overrides)."""
        cfg = dict(cfg)
        known = {"sizes", "folds", "seeds", "seed", "kernel", "sigma2", "range", "nugget", "trend",
                 "rebuild_chol", "unfavourable", "warmup", "repeats", "threads"}
        unknown = set(cfg) - known
        if unknown:
            raise InputError(f"unknown bench config keys: {sorted(unknown)}")
        try:
            sizes = [int(s) for s in str(cfg.get("sizes", "100")).replace(",", " ").split()]
            f = str(cfg.get("folds", "loo")).strip()
            fold_spec = f if f in ("loo", "halvings") else [int(s) for s in f.replace(",", " ").split()]
            kernel = gp.KernelSpec(
                cfg.get("kernel", "matern52"),
                float(cfg.get("sigma2", 1.0)),
                (float(cfg.get("range", 0.1)),),
                float(cfg.get("nugget", 0.0)),
            )
            flag = str(cfg.get("rebuild_chol", cfg.get("unfavourable", "false"))).lower()
            return cls(
                sizes=sizes,
                folds=fold_spec,
                seeds=int(cfg.get("seeds", 50)),
                seed0=int(cfg.get("seed", 0)),
                kernel=kernel,
                trend=str(cfg.get("trend", "simple")),
                rebuild_chol=flag in ("1", "true", "yes", "on"),
                warmup=int(cfg.get("warmup", 3)),
                repeats=int(cfg.get("repeats", 3)),
                threads=int(cfg.get("threads", 1)),
            )
        except ValueError as exc:
            raise InputError(f"bad bench config: {exc}") from exc


@dataclass
class BenchReport:
    records: list
    config: BenchConfig
    alpha: float = None
    gamma: float = None

    def cells(self):
        out = {}
        for r in self.records:
            if r.get("error") is None:
                out.setdefault((r["n"], r["q"]), []).append(r)
        return out

    def aggregates(self):
        rows = []
        for (n, q), recs in sorted(self.cells().items(), key=lambda kv: (kv[0][0], -kv[0][1])):
            s = np.array([r["speedup"] for r in recs])
            rows.append({
                "n": n,
                "q": q,
                "r": n / q,
                "records": len(recs),
                "median_speedup": float(np.median(s)),
                "mean_speedup": float(np.mean(s)),
                "median_rel_err_mean": float(np.median([r["rel_err_mean"] for r in recs])),
                "median_rel_err_cov": float(np.median([r["rel_err_cov"] for r in recs])),
                "max_rel_err_mean": float(np.max([r["rel_err_mean"] for r in recs])),
                "max_rel_err_cov": float(np.max([r["rel_err_cov"] for r in recs])),
            })
        return rows

    def median_speedups(self, n):
        """Median speed-ups for one design size, ordered by increasing fold size."""
        return [a["median_speedup"] for a in self.aggregates() if a["n"] == n]

    @property
    def failures(self):
        return [r for r in self.records if r.get("error") is not None]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, extrasaction="ignore")
            w.writeheader()
            for r in self.records:
                if r.get("error") is None:
                    w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})

    def to_dict(self):
        cfg = self.config
        return {
            "config": {
                "sizes": cfg.sizes,
                "folds": cfg.folds,
                "seeds": cfg.seeds,
                "seed": cfg.seed0,
                "kernel": cfg.kernel.family,
                "sigma2": cfg.kernel.sigma2,
                "range": cfg.kernel.ranges[0],
                "nugget": cfg.kernel.nugget,
                "trend": cfg.trend,
                "rebuild_chol": cfg.rebuild_chol,
                "warmup": cfg.warmup,
                "repeats": cfg.repeats,
                "threads": cfg.threads,
                "timer": "time.perf_counter (monotonic); min over repeats after discarded warm-up runs",
            },
            "aggregates": self.aggregates(),
            "cost_model": {"gamma": self.gamma, "alpha": self.alpha},
            "failures": self.failures,
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _best_time(fn, warmup, repeats):
    for _ in range(warmup):
        fn()
    best = math.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def prior_draw(K, rng):
    """One centred Gaussian sample with covariance ``K``."""
    return linalg.chol(K) @ rng.standard_normal(K.shape[0])


def run_cell(model, partition, cfg):
    t_naive, naive = _best_time(lambda: naive_cv(model, partition), cfg.warmup, cfg.repeats)
    t_fast, fast = _best_time(
        lambda: fast_cv(model, partition, full_cov=False, rebuild_chol=cfg.rebuild_chol),
        cfg.warmup,
        cfg.repeats,
    )
    errs = compare(fast, naive)
    return {"t_naive_s": t_naive, "t_fast_s": t_fast, "speedup": t_naive / t_fast, **errs}


def run_bench(cfg, progress=None):
    """Time naive and fast CV over the configured (n, q, seed) grid.

    For every cell a response vector is drawn from the GP prior with a
    seeded generator, the model is fitted once, and both methods run on the
    same folds (LOO, or seeded random regular folds).  Failures are recorded
    and the run continues.
    """
    trend = gp.TrendSpec.from_name(cfg.trend)
    records = []
    with threadpool_limits(cfg.threads):
        for n in cfg.sizes:
            X = np.linspace(0.0, 1.0, n)[:, None]
            K = gp.cov_matrix(cfg.kernel, X)
            for q in cfg.fold_counts(n):
                for s in range(cfg.seeds):
                    seed = cfg.seed0 + s
                    rec = {"n": n, "q": q, "seed": seed, "error": None}
                    try:
                        rng = np.random.default_rng(seed)
                        z = prior_draw(K, rng)
                        model = gp.fit(X, z, cfg.kernel, trend)
                        partition = folds_mod.loo(n) if q == n else folds_mod.regular(n, q, seed)
                        rec.update(run_cell(model, partition, cfg))
                    except FastCVError as exc:
                        rec["error"] = f"{type(exc).__name__}: {exc}"
                    records.append(rec)
                    if progress is not None:
                        progress(rec)
    report = BenchReport(records, cfg)
    report.gamma, report.alpha = fit_cost_model(report.records)
    return report


def fit_cost_model(records):
    """Least-squares fit of ``log t_fast ~ log(gamma) + log(alpha n^3 + q r^3)``.

    ``gamma`` is profiled out; ``alpha`` is searched on (0, 1].  Returns
    ``(gamma, alpha)`` or ``(None, None)`` with too few records.
    """
    ok = [r for r in records if r.get("error") is None]
    if len({(r["n"], r["q"]) for r in ok}) < 2:
        return None, None
    n = np.array([r["n"] for r in ok], dtype=float)
    q = np.array([r["q"] for r in ok], dtype=float)
    y = np.log([r["t_fast_s"] for r in ok])
    r = n / q

    def sse(alpha):
        x = np.log(alpha * n**3 + q * r**3)
        c = np.mean(y - x)
        return float(np.sum((y - x - c) ** 2))

    res = minimize_scalar(sse, bounds=(1e-6, 1.0), method="bounded", options={"xatol": 1e-8})
    alpha = float(res.x)
    gamma = float(np.exp(np.mean(y - np.log(alpha * n**3 + q * r**3))))
    return gamma, alpha
