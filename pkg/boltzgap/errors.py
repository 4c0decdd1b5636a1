"""
Error types raised by boltzgap.

Everything derives from BoltzGapError so the sweep manager can record a
failed point and keep going without swallowing unrelated bugs.
"""
from typing import Optional, Tuple


class BoltzGapError(Exception):
    pass


class ConfigError(BoltzGapError, ValueError):
    pass


class SingularEvaluationError(BoltzGapError, ValueError):
    pass


class UnsupportedCrossSectionError(BoltzGapError, ValueError):
    pass


class MemoryBudgetError(BoltzGapError, MemoryError):
    def __init__(self, needed_bytes: int, budget_bytes: int):
        self.needed_bytes = needed_bytes
        self.budget_bytes = budget_bytes
        super().__init__(
            f"matrix storage needs {needed_bytes / 2**30:.2f} GiB, budget is {budget_bytes / 2**30:.2f} GiB"
        )


class QuadratureToleranceError(BoltzGapError):
    def __init__(self, message: str, achieved: float, where: Optional[Tuple[int, ...]] = None):
        self.achieved = achieved
        self.where = where
        loc = f" at (k, kbar, m)={where}" if where is not None else ""
        super().__init__(f"{message}{loc}; achieved error estimate {achieved:.3e}")


class RepresentationMismatchError(BoltzGapError, ValueError):
    pass


class RankDeficiencyError(BoltzGapError):
    pass


class ConditioningError(BoltzGapError):
    pass


class EigenSolverError(BoltzGapError):
    pass


class NullModeCountError(BoltzGapError):
    def __init__(self, found: int, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(f"corrected path produced {found} null modes, expected {expected}")


class AsymmetryError(BoltzGapError):
    def __init__(self, asymmetry: float, bound: float):
        self.asymmetry = asymmetry
        self.bound = bound
        super().__init__(f"pre-symmetrization asymmetry {asymmetry:.3e} exceeds bound {bound:.1e}")
