"""Fold partitions for multiple-fold cross-validation.

Folds are 1-based, strictly increasing index tuples.  Generators return
them ordered by smallest element; ``FoldPartition.order`` gives the
0-based concatenation permutation used to move between data order and
fold order.
"""

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .errors import InputError, PartitionError


@dataclass(frozen=True)
class Violation:
    kind: str  # "empty", "order", "range", "overlap", "coverage"
    index: int
    message: str

    def __str__(self):
        return self.message


@dataclass(frozen=True)
class FoldPartition:
    folds: tuple
    n: int

    def __init__(self, folds, n):
        object.__setattr__(self, "folds", tuple(tuple(int(k) for k in np.atleast_1d(f)) for f in folds))
        object.__setattr__(self, "n", int(n))

    @property
    def q(self):
        return len(self.folds)

    @property
    def sizes(self):
        return tuple(len(f) for f in self.folds)

    @cached_property
    def order(self):
        """0-based row positions in fold-concatenation order."""
        return np.concatenate([np.asarray(f, dtype=np.int64) - 1 for f in self.folds])

    @cached_property
    def labels(self):
        """1-based fold number of each row, in data order."""
        out = np.zeros(self.n, dtype=np.int64)
        for j, f in enumerate(self.folds, start=1):
            out[np.asarray(f) - 1] = j
        return out

    def zero_based(self):
        return [np.asarray(f, dtype=np.int64) - 1 for f in self.folds]

    def check(self):
        """Raise :class:`PartitionError` unless the partition is valid."""
        v = validate(self)
        if v is not None:
            raise PartitionError(str(v))
        return self

    def __iter__(self):
        return iter(self.folds)

    def __len__(self):
        return self.q


def validate(p):
    """Return the first :class:`Violation` found, or ``None`` if ``p`` is valid."""
    if p.n < 1:
        return Violation("range", 0, f"partition size must be positive, got {p.n}")
    if p.q < 1:
        return Violation("empty", 0, "partition has no folds")
    seen = np.zeros(p.n + 1, dtype=bool)
    for j, fold in enumerate(p.folds, start=1):
        if not fold:
            return Violation("empty", j, f"fold {j} is empty")
        for a, b in zip(fold, fold[1:]):
            if b <= a:
                return Violation("order", b, f"fold {j} is not strictly increasing at index {b}")
        for k in fold:
            if k < 1 or k > p.n:
                return Violation("range", k, f"fold {j}: index {k} outside 1..{p.n}")
            if seen[k]:
                return Violation("overlap", k, f"overlap at index {k} (fold {j})")
            seen[k] = True
    missing = np.flatnonzero(~seen[1:])
    if missing.size:
        k = int(missing[0]) + 1
        return Violation("coverage", k, f"coverage violation: index {k} missing")
    return None


def _sorted_partition(groups, n):
    folds = sorted((tuple(sorted(int(k) for k in g)) for g in groups if len(g)), key=lambda f: f[0])
    return FoldPartition(folds, n)


def loo(n):
    """Singleton folds ``(1), (2), ..., (n)``."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    return FoldPartition([(k,) for k in range(1, n + 1)], n)


def fold_sizes(n, q):
    """Balanced sizes: the first ``n % q`` folds get one extra element."""
    base, extra = divmod(n, q)
    return [base + 1] * extra + [base] * (q - extra)


def regular(n, q, seed=None):
    """Contiguous folds of near-equal size, optionally on seeded shuffled indices.

    With a seed, indices ``1..n`` are permuted by ``numpy.random.default_rng(seed)``
    (PCG64) before chunking; each fold is then sorted.
    """
    if n < 1 or q < 1 or q > n:
        raise InputError(f"need 1 <= q <= n, got n={n}, q={q}")
    idx = np.arange(1, n + 1)
    if seed is not None:
        idx = np.random.default_rng(seed).permutation(idx)
    bounds = np.cumsum([0] + fold_sizes(n, q))
    groups = [idx[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    if seed is None:
        return FoldPartition(groups, n)
    return _sorted_partition(groups, n)


def from_labels(labels):
    """One fold per distinct label (any hashable values)."""
    labels = list(labels)
    if not labels:
        raise InputError("empty label vector")
    groups = {}
    for k, lab in enumerate(labels, start=1):
        groups.setdefault(lab, []).append(k)
    return _sorted_partition(groups.values(), len(labels))


def clusters(X, labels=None, radius=None):
    """Leave-one-cluster-out folds from labels or single-linkage at ``radius``.

    With ``radius``, rows i and j share a fold iff they are connected by a
    chain of points with consecutive Euclidean distances ``<= radius``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if (labels is None) == (radius is None):
        raise InputError("give exactly one of labels or radius")
    if labels is not None:
        if len(labels) != n:
            raise InputError(f"{len(labels)} labels for {n} design points")
        return from_labels(labels)
    if not radius > 0:
        raise InputError(f"radius must be positive, got {radius}")
    adjacency = cdist(X, X) <= radius
    _, comp = connected_components(adjacency, directed=False)
    return from_labels(comp.tolist())


def parse_spec(spec, X=None, seed=None):
    """Build a partition from a CLI-style string.

    ``loo``, ``q=<k>``, ``radius=<r>`` or ``file=<path>`` (CSV with columns
    ``row_index, fold_label``).
    """
    n = None if X is None else np.asarray(X).shape[0]
    spec = spec.strip()
    if spec == "loo":
        return loo(n)
    key, _, value = spec.partition("=")
    try:
        if key == "q":
            return regular(n, int(value), seed)
        if key == "radius":
            return clusters(X, radius=float(value))
    except ValueError as exc:
        raise InputError(f"bad folds spec {spec!r}: {exc}") from exc
    if key == "file":
        return read_csv(value, n)
    raise InputError(f"unknown folds spec {spec!r}; expected loo, q=<k>, radius=<r> or file=<path>")


def read_csv(path, n=None):
    """Read ``row_index, fold_label`` rows (1-based row indices).

    The partition is validated; overlaps and gaps raise :class:`PartitionError`.
    """
    groups = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh, skipinitialspace=True)
            if reader.fieldnames is None or not {"row_index", "fold_label"} <= {c.strip() for c in reader.fieldnames}:
                raise InputError(f"{path}: expected columns row_index, fold_label")
            for row in reader:
                row = {k.strip(): v for k, v in row.items()}
                groups.setdefault(row["fold_label"].strip(), []).append(int(row["row_index"]))
    except OSError as exc:
        raise InputError(f"cannot read folds file: {exc}") from exc
    except InputError:
        raise
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    rows = [k for g in groups.values() for k in g]
    if n is None:
        n = max(rows) if rows else 0
    folds = sorted((sorted(g) for g in groups.values()), key=lambda f: f[0])
    p = FoldPartition(folds, n)
    return p.check()


def write_csv(p, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row_index", "fold_label"])
        for k, lab in enumerate(p.labels, start=1):
            w.writerow([k, int(lab)])
