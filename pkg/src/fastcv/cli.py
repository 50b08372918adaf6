"""Command-line entry point: ``fastcv {gen,cv,diagnose,estimate,bench}``.

Exit codes: 0 on success, 2 for input or configuration errors, 3 for
numerical failures.  Settings come from command-line flags, then from an
optional ``--config`` key-value file, then from built-in defaults.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, corpus, diagnostics, folds, gp
from . import estimation as est
from .cv import compare, fast_cv, naive_cv
from .errors import InputError, NumericalError

DEFAULTS = {
    "kernel": "matern52",
    "sigma2": "1.0",
    "range": "0.2",
    "nugget": "0.0",
    "trend": "simple",
    "folds": None,
    "seed": "0",
    "out": ".",
}


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors raise instead of exiting."""

    def error(self, message):
        raise InputError(message)


def read_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise InputError(f"{path}:{lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _settings(args):
    """Merge defaults < config file < command line."""
    merged = dict(DEFAULTS)
    if args.config:
        merged.update(read_config(args.config))
    for k, v in vars(args).items():
        if v is not None and k not in ("command", "config", "func"):
            merged[k] = v
    return merged


def _float(s, name):
    try:
        return float(s)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name}: expected a number, got {s!r}") from exc


def _int(s, name):
    try:
        return int(s)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name}: expected an integer, got {s!r}") from exc


def _kernel(cfg):
    ranges = tuple(_float(r, "range") for r in str(cfg["range"]).replace(",", " ").split())
    return gp.KernelSpec(cfg["kernel"], _float(cfg["sigma2"], "sigma2"), ranges, _float(cfg["nugget"], "nugget"))


def _partition(ds, spec, seed):
    """Fold spec string, or the dataset's own ``fold`` column when unspecified."""
    if spec is None:
        if ds.folds is not None:
            return folds.from_labels(ds.folds), "column"
        spec = "loo"
    p = folds.parse_spec(spec, ds.X, seed)
    return p, spec.split("=", 1)[0] if spec != "loo" else "loo"


def _load(cfg):
    ds = corpus.Dataset.read_csv(cfg["data"])
    kernel = _kernel(cfg)
    if ds.d != len(kernel.ranges) and len(kernel.ranges) != 1:
        raise InputError(f"{len(kernel.ranges)} ranges for a {ds.d}-dimensional design")
    trend = gp.TrendSpec.from_name(cfg["trend"])
    return ds, kernel, trend


def _outdir(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format(v, ".17g") if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def cmd_gen(cfg):
    seed = _int(cfg["seed"], "seed")
    kernel = _kernel(cfg) if cfg["name"] == "prior_draw" else None
    ds = corpus.gen_corpus(cfg["name"], n=_int(cfg["n"], "n"), delta=_float(cfg["delta"], "delta"), seed=seed, kernel=kernel)
    path = _outdir(cfg) / f"{cfg['name']}.csv"
    ds.write_csv(path)
    print(f"wrote {path} ({ds.n} rows, seed {seed})")
    return 0


def cmd_cv(cfg):
    ds, kernel, trend = _load(cfg)
    seed = _int(cfg["seed"], "seed")
    partition, fold_tag = _partition(ds, cfg["folds"], seed)
    model = gp.fit(ds.X, ds.y, kernel, trend)
    method = cfg["method"]
    if method not in ("fast", "naive", "both"):
        raise InputError(f"--method must be fast, naive or both, got {method!r}")
    out = _outdir(cfg)
    fast = fast_cv(model, partition) if method in ("fast", "both") else None
    naive = naive_cv(model, partition) if method in ("naive", "both") else None
    main = fast if fast is not None else naive
    _write_rows(
        out / "residuals.csv",
        ["row_index", "fold_label", "residual", "fold_sd"],
        zip(range(1, ds.n + 1), partition.labels, main.residuals, main.fold_sd),
    )
    summary = {
        "method": method,
        "n": ds.n,
        "q": partition.q,
        "folds": fold_tag,
        "seed": seed,
        "kernel": kernel.family,
        "sigma2": kernel.sigma2,
        "range": list(kernel.ranges),
        "nugget": kernel.nugget,
        "trend": cfg["trend"],
        "residual_norm": float(np.linalg.norm(main.residuals)),
    }
    if fast is not None:
        np.savetxt(out / "covariance.csv", fast.full_cov, delimiter=",", fmt="%.17g")
        summary["t_fast_s"] = fast.elapsed
    if naive is not None:
        summary["t_naive_s"] = naive.elapsed
    if method == "both":
        summary.update(compare(fast, naive))
    _write_json(out / "cv_summary.json", summary)
    print(json.dumps(summary))
    return 0


def cmd_diagnose(cfg):
    ds, kernel, trend = _load(cfg)
    seed = _int(cfg["seed"], "seed")
    partition, _ = _partition(ds, cfg["folds"], seed)
    model = gp.fit(ds.X, ds.y, kernel, trend)
    res = fast_cv(model, partition, full_cov=False)
    out = _outdir(cfg)
    std = diagnostics.standardize(res)
    white = diagnostics.whiten(model, res)
    for name, w in (("qq_standardized.csv", std), ("qq_whitened.csv", white)):
        _write_rows(out / name, ["theoretical", "sample"], diagnostics.qq_data(w).tolist())
    stat, dof = diagnostics.chi2_stat(white)
    chi2 = {"stat": stat, "dof": dof, "p_value_upper": diagnostics.chi2_pvalue(stat, dof), "seed": seed}
    _write_json(out / "chi2.json", chi2)
    print(json.dumps(chi2))
    return 0


def _bounds(text):
    parts = str(text).replace(",", " ").split()
    if len(parts) != 2:
        raise InputError(f"--bounds expects 'lo,hi', got {text!r}")
    lo, hi = (_float(p, "bounds") for p in parts)
    if not 0 < lo < hi:
        raise InputError(f"--bounds needs 0 < lo < hi, got {lo}, {hi}")
    return lo, hi


def cmd_estimate(cfg):
    ds, kernel, trend = _load(cfg)
    seed = _int(cfg["seed"], "seed")
    bounds = _bounds(cfg["bounds"])
    n_grid = _int(cfg["grid"], "grid")
    sigma2 = None if cfg.get("fixed_sigma2") is None else _float(cfg["fixed_sigma2"], "fixed_sigma2")
    criteria = [c.strip() for c in str(cfg["criterion"]).split(",") if c.strip()]
    fold_specs = [cfg["folds"]]
    if cfg.get("compare_folds"):
        fold_specs.append(cfg["compare_folds"])
    out = _outdir(cfg)
    summary = []
    for crit in criteria:
        if crit not in est.CRITERIA:
            raise InputError(f"unknown criterion {crit!r}; expected one of {est.CRITERIA}")
        needs_folds = crit != "neg_log_lik"
        for spec in fold_specs if needs_folds else [None]:
            if needs_folds:
                partition, tag = _partition(ds, spec, seed)
            else:
                partition, tag = None, "ml"
            s2 = sigma2
            if s2 is None and crit in ("c3_cv", "c3_corrected"):
                s2 = kernel.sigma2
            spec_obj = est.CriterionSpec(crit, partition, s2)
            report = est.optimize_range(spec_obj, ds.X, ds.y, kernel, bounds, trend, n_grid=n_grid, seed=seed)
            stem = f"{crit}_{tag}"
            report.to_json(out / f"estimate_{stem}.json")
            _write_rows(out / f"curve_{stem}.csv", ["theta", "value"], zip(report.theta_grid, report.values))
            summary.append({"criterion": crit, "folds": tag, "theta_hat": report.theta_hat,
                            "sigma2_hat": report.sigma2_hat, "at_boundary": report.at_boundary})
    print(json.dumps(summary))
    return 0


BENCH_KEYS = ("sizes", "folds", "seeds", "seed", "kernel", "sigma2", "range", "nugget", "trend",
              "rebuild_chol", "unfavourable", "warmup", "repeats", "threads")


def cmd_bench(cfg):
    """``cfg`` holds only explicitly given flags; they override the config file."""
    mapping = read_config(cfg["config"]) if cfg.get("config") else {}
    mapping.update({k: cfg[k] for k in BENCH_KEYS if cfg.get(k) is not None})
    if cfg.get("quick"):
        mapping["seeds"] = "1"
    bcfg = bench.BenchConfig.from_mapping(mapping)
    report = bench.run_bench(bcfg)
    out = _outdir({"out": cfg.get("out", ".")})
    report.write_csv(out / "bench.csv")
    report.write_json(out / "bench.json")
    for a in report.aggregates():
        print(f"n={a['n']} q={a['q']} median_speedup={a['median_speedup']:.3g} "
              f"max_rel_err_mean={a['max_rel_err_mean']:.2e} max_rel_err_cov={a['max_rel_err_cov']:.2e}")
    if report.failures:
        print(f"{len(report.failures)} failed cells (see bench.json)", file=sys.stderr)
    return 0


def build_parser():
    shared = _Parser(add_help=False)
    shared.add_argument("--kernel", choices=sorted(gp.KERNELS))
    shared.add_argument("--sigma2")
    shared.add_argument("--range", help="one range, or comma-separated per-dimension ranges")
    shared.add_argument("--nugget")
    shared.add_argument("--trend", choices=["simple", "constant", "linear", "quadratic"])
    shared.add_argument("--folds", help="loo | q=<k> | file=<path> | radius=<r>")
    shared.add_argument("--seed")
    shared.add_argument("--out", help="output directory")
    shared.add_argument("--config", help="key = value file (command-line flags take precedence)")

    p = _Parser(prog="fastcv", description="Fast multiple-fold cross-validation for GP models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[shared], help="generate a synthetic dataset")
    g.add_argument("name", choices=corpus.CORPUS)
    g.add_argument("--n", default="10")
    g.add_argument("--delta", default="1e-3")
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("cv", parents=[shared], help="CV residuals and covariances")
    c.add_argument("data", help="dataset CSV (x1..xd, y[, fold])")
    c.add_argument("--method", default="fast")
    c.set_defaults(func=cmd_cv)

    d = sub.add_parser("diagnose", parents=[shared], help="QQ data and chi-square statistic")
    d.add_argument("data")
    d.set_defaults(func=cmd_diagnose)

    e = sub.add_parser("estimate", parents=[shared], help="range estimation by likelihood or CV criteria")
    e.add_argument("data")
    e.add_argument("--criterion", default="c2_cv", help=f"comma-separated subset of {','.join(est.CRITERIA)}")
    e.add_argument("--bounds", default="0.01,2.0", help="lo,hi for the range search")
    e.add_argument("--grid", default="64")
    e.add_argument("--fixed-sigma2", dest="fixed_sigma2", help="scale for c3 criteria (default: --sigma2)")
    e.add_argument("--compare-folds", dest="compare_folds", help="second fold spec for CV criteria")
    e.set_defaults(func=cmd_estimate)

    b = sub.add_parser("bench", parents=[shared], help="time fast versus naive CV")
    b.add_argument("--sizes")
    b.add_argument("--seeds")
    b.add_argument("--warmup")
    b.add_argument("--repeats")
    b.add_argument("--threads")
    b.add_argument("--rebuild-chol", dest="rebuild_chol", action="store_const", const="true")
    b.add_argument("--quick", action="store_true", help="one seed per cell")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command == "bench":
            return cmd_bench({k: v for k, v in vars(args).items() if v is not None})
        cfg = _settings(args)
        return args.func(cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
