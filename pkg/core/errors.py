from typing import Any, Dict, List, Optional


class NodalLabError(Exception):
    """Base class for every error raised by the laboratory."""


class ParameterError(NodalLabError):
    pass


class DomainError(NodalLabError):
    """Coordinates outside the geometry of a field."""


class ResolutionError(NodalLabError):
    """Grid spacing coarser than the sampling threshold."""


class ConsistencyError(NodalLabError):
    """Nodal extraction produced a structure that cannot come from a nonsingular level set."""


class ExtractionError(NodalLabError):
    """Non-manifold or non-orientable surface mesh."""


class StructuralError(NodalLabError):
    pass


class InsufficientDataError(NodalLabError):
    pass


class ConstructionError(NodalLabError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(NodalLabError):
    def __init__(self, violations: List[str]):
        super().__init__("; ".join(violations))
        self.violations = violations
