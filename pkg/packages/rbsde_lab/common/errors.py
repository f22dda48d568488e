from typing import Any, Optional

class LabError(Exception):
    """Base class for all rbsde_lab errors"""

# Validation errors. The CLI maps these to exit code 2.

class LatticeError(LabError, ValueError):
    pass

class ProblemError(LabError, ValueError):
    pass

class ConfigError(LabError, ValueError):
    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key

class StepConditionError(LabError, ValueError):
    pass

class EnumerationCapError(LatticeError):
    pass

class AugmentedStateError(LatticeError):
    pass

class EstimateError(LabError, ValueError):
    pass

# Solver failures. The CLI maps these to exit code 3.

class SolverError(LabError, RuntimeError):
    pass

class RootFindingError(SolverError):
    pass

class PicardDivergenceError(SolverError):
    def __init__(self, message: str, trace: Any = None):
        super().__init__(message)
        self.trace = trace
