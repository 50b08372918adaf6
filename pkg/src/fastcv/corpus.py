"""Datasets: CSV round-trip and the synthetic test corpus."""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import gp, linalg
from .errors import InputError

CORPUS = ("xiong", "paired", "grid_plus_cluster", "prior_draw")


def xiong(x):
    """1-d test function on [0, 1]: ``sin(30 (x - 0.9)^4) cos(2 (x - 0.9)) + (x - 0.9) / 2``."""
    x = np.asarray(x, dtype=float)
    u = x - 0.9
    return np.sin(30.0 * u**4) * np.cos(2.0 * u) + u / 2.0


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    folds: np.ndarray = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = gp.as_design(self.X)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.y.size != self.X.shape[0]:
            raise InputError(f"{self.X.shape[0]} design rows but {self.y.size} responses")
        if self.folds is not None:
            self.folds = np.asarray(self.folds)
            if self.folds.size != self.y.size:
                raise InputError("fold column length differs from the number of rows")

    @property
    def n(self):
        return self.y.size

    @property
    def d(self):
        return self.X.shape[1]

    def write_csv(self, path):
        header = [f"x{k}" for k in range(1, self.d + 1)] + ["y"]
        if self.folds is not None:
            header.append("fold")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.n):
                row = [format(v, ".17g") for v in self.X[i]] + [format(self.y[i], ".17g")]
                if self.folds is not None:
                    row.append(str(self.folds[i]))
                w.writerow(row)

    @classmethod
    def read_csv(cls, path):
        """Read columns ``x1..xd, y`` and an optional ``fold`` column."""
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise InputError(f"cannot read dataset: {exc}") from exc
        if not rows:
            raise InputError(f"{path}: empty file")
        header = [h.strip() for h in rows[0]]
        xcols = sorted((h for h in header if h.startswith("x") and h[1:].isdigit()), key=lambda h: int(h[1:]))
        if "y" not in header:
            raise InputError(f"{path}: missing y column")
        if not xcols:
            raise InputError(f"{path}: no x1..xd columns")
        body = [r for r in rows[1:] if any(c.strip() for c in r)]
        if not body:
            raise InputError(f"{path}: no data rows")
        pos = {h: k for k, h in enumerate(header)}
        try:
            X = np.array([[float(r[pos[c]]) for c in xcols] for r in body])
            y = np.array([float(r[pos["y"]]) for r in body])
            f = [r[pos["fold"]].strip() for r in body] if "fold" in pos else None
        except (ValueError, IndexError) as exc:
            raise InputError(f"{path}: malformed row ({exc})") from exc
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputError(f"{path}: missing or non-finite values")
        if f is not None and any(v == "" for v in f):
            raise InputError(f"{path}: missing fold labels")
        return cls(X, y, None if f is None else np.array(f), {"source": str(path)})


def gen_corpus(name, n=10, delta=1e-3, seed=0, kernel=None):
    """Generate one of the synthetic datasets.

    ``xiong``
        Test function on a regular ``n``-point grid of [0, 1].
    ``paired``
        10 base points regularly spaced on ``[delta, 1 - delta]``, each
        replaced by two points jittered by ``Uniform[-delta, delta]``;
        fold labels group the pairs.
    ``grid_plus_cluster``
        10-point grid of [0, 1] plus 10 equispaced points on [0.1, 0.3],
        sorted by x.
    ``prior_draw``
        Regular ``n``-point grid with responses sampled from the GP prior
        of ``kernel``.
    """
    rng = np.random.default_rng(seed)
    prov = {"generator": name, "seed": seed}
    if name == "xiong":
        if n < 1:
            raise InputError("n must be >= 1")
        X = np.linspace(0.0, 1.0, n)
        prov["n"] = n
        return Dataset(X, xiong(X), None, prov)
    if name == "paired":
        if not 0 < delta < 0.05:
            raise InputError(f"delta must lie in (0, 0.05), got {delta}")
        base = np.linspace(delta, 1.0 - delta, 10)
        X = (base[:, None] + rng.uniform(-delta, delta, size=(10, 2))).ravel()
        labels = np.repeat(np.arange(1, 11), 2)
        prov["delta"] = delta
        return Dataset(X, xiong(X), labels, prov)
    if name == "grid_plus_cluster":
        X = np.sort(np.concatenate([np.linspace(0.0, 1.0, 10), np.linspace(0.1, 0.3, 10)]))
        return Dataset(X, xiong(X), None, prov)
    if name == "prior_draw":
        if n < 1:
            raise InputError("n must be >= 1")
        kernel = kernel or gp.KernelSpec("matern52", 1.0, (0.2,))
        X = np.linspace(0.0, 1.0, n)
        K = gp.cov_matrix(kernel, X)
        y = linalg.chol(K) @ rng.standard_normal(n)
        prov.update(n=n, kernel=kernel.family, sigma2=kernel.sigma2, range=list(kernel.ranges), nugget=kernel.nugget)
        return Dataset(X, y, None, prov)
    raise InputError(f"unknown corpus {name!r}; expected one of {CORPUS}")
