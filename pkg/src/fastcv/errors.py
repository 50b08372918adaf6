"""Exception hierarchy shared across the package."""


class FastCVError(Exception):
    """Base class for all package errors."""


class NumericalError(FastCVError):
    """A numerical failure (maps to CLI exit code 3)."""


class InputError(FastCVError, ValueError):
    """Invalid user input or configuration (maps to CLI exit code 2)."""


class NotPositiveDefiniteError(NumericalError):
    def __init__(self, pivot, value=None, floor=None):
        self.pivot = pivot
        self.value = value
        self.floor = floor
        msg = f"matrix is not positive definite: pivot {pivot} failed"
        if value is not None:
            msg += f" (value {value:.3e} <= floor {floor:.3e})"
        super().__init__(msg)


class SingularMatrixError(NumericalError):
    def __init__(self, block, detail=""):
        self.block = block
        msg = f"singular block: {block}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class FoldSingularityError(NumericalError):
    def __init__(self, fold, detail=""):
        self.fold = fold
        msg = f"fold {fold}: conditional covariance block is singular"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class TrendRankError(NumericalError):
    def __init__(self, rank, p, fold=None):
        self.rank = rank
        self.p = p
        self.fold = fold
        where = "" if fold is None else f" with fold {fold} removed"
        super().__init__(f"trend matrix{where} has rank {rank} < {p} basis functions")


class PartitionError(InputError):
    """A fold collection failed validation."""


class OptimizationError(NumericalError):
    def __init__(self, message, failures=None):
        self.failures = failures or {}
        super().__init__(message)
