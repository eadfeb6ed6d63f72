from typing import Optional

import numpy as np


class LevyflowError(Exception):
    """Base class for every error raised by levyflow."""


class UnsupportedModelError(LevyflowError):
    pass


class ParameterError(LevyflowError, ValueError):
    pass


class DomainError(LevyflowError, ValueError):
    pass


class DriftSpecError(LevyflowError, ValueError):
    pass


class NumericError(LevyflowError, ArithmeticError):
    pass


class ConvergenceError(LevyflowError):
    """Picard iteration stopped at max_iter without meeting the tolerance."""

    def __init__(self, message: str, best_iterate: Optional[np.ndarray] = None, defect: float = float("inf")):
        super().__init__(message)
        self.best_iterate = best_iterate
        self.defect = defect


class ResolutionError(LevyflowError):
    """Density grid too narrow for the requested accuracy."""

    def __init__(self, message: str, suggested_width: float):
        super().__init__(message)
        self.suggested_width = suggested_width


class HorizonError(LevyflowError, ValueError):
    pass


class ConfigError(LevyflowError):
    pass


class ArchiveError(LevyflowError):
    pass


class OutputError(LevyflowError, OSError):
    """Output directory or artifact file could not be written."""
