"""
Alarm hierarchy for rdalab
Every alarm carries a machine-readable code and the process exit status it maps to:
- 2: configuration errors
- 3: numerical alarms (divergence, resolution, K too small, truncation, preconditions)
- 4: structural alarms (method disagreement, model/reflection consistency, structure)
"""

from typing import Any, Optional


class RDALabError(Exception):
    """Base class for every error raised on purpose by rdalab"""

    code = "rdalab_error"
    exit_code = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def payload(self) -> dict:
        """Machine-readable form written into manifests"""
        data = {"code": self.code, "exit_code": self.exit_code, "message": self.message}
        for key, value in self.details.items():
            data[key] = _plain(value)
        return data


class ConfigError(RDALabError):
    code = "config_error"
    exit_code = 2

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None, **details: Any):
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message, path=path, line=line, **details)
        self.path = path
        self.line = line


class NumericalAlarm(RDALabError):
    code = "numerical_alarm"
    exit_code = 3


class DivergenceError(NumericalAlarm):
    """Non-finite state during integration, or a fixed point that would not converge"""

    code = "divergence"

    def __init__(self, message: str, t: Optional[float] = None, last_residual: Optional[float] = None, **details: Any):
        super().__init__(message, t=t, last_residual=last_residual, **details)
        self.t = t
        self.last_residual = last_residual


class ResolutionError(NumericalAlarm):
    code = "resolution"


class KTooSmallError(NumericalAlarm):
    code = "k_too_small"

    def __init__(self, message: str, contraction_factor: float, K: int, **details: Any):
        super().__init__(message, contraction_factor=contraction_factor, K=K, **details)
        self.contraction_factor = contraction_factor
        self.K = K


class TruncationError(NumericalAlarm):
    code = "truncation"


class PreconditionError(NumericalAlarm):
    code = "precondition"


class StructuralAlarm(RDALabError):
    code = "structural_alarm"
    exit_code = 4


class MethodDisagreementError(StructuralAlarm):
    code = "method_disagreement"


class ModelConsistencyError(StructuralAlarm):
    code = "model_consistency"


class ReflectionConsistencyError(StructuralAlarm):
    code = "reflection_consistency"


class StructureError(StructuralAlarm):
    code = "structure"


def _plain(value: Any) -> Any:
    # numpy scalars -> python scalars so json.dumps accepts the payload
    if hasattr(value, "item") and callable(value.item):
        try:
            return value.item()
        except (ValueError, TypeError):
            return str(value)
    return value
