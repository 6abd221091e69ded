from typing import List, Optional


class SplitQuantError(Exception):
    """Base toolkit exception"""
    pass

class FormatError(SplitQuantError):
    """Container header or manifest is malformed"""
    pass

class CorruptionError(SplitQuantError):
    """Tensor data offsets overlap, leave gaps or run out of bounds"""
    pass

class ValidationError(SplitQuantError):
    """Model violates graph or tensor invariants"""
    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        shown = '; '.join(self.violations[:5])
        more = len(self.violations) - 5
        if more > 0:
            shown += f" (+{more} more)"
        super().__init__(f"Model validation failed: {shown}")

class ContainerIOError(SplitQuantError, OSError):
    """File could not be read or written"""
    pass

class DegenerateInputError(SplitQuantError):
    """Input has too few distinct values for the requested operation"""
    pass

class ArgumentError(SplitQuantError):
    """Invalid argument value"""
    pass

class UnsupportedLayerError(SplitQuantError):
    """Operation does not apply to this layer kind"""
    def __init__(self, kind: str, operation: str):
        super().__init__(f"Layer kind '{kind}' is not supported by {operation}")

class ComparisonError(SplitQuantError):
    """Two models cannot be compared"""
    pass

class ExecutionError(SplitQuantError):
    """Forward pass failed"""
    def __init__(self, message: str, layer: Optional[str] = None):
        self.layer = layer
        if layer is not None:
            message = f"layer '{layer}': {message}"
        super().__init__(message)

class ConvergenceError(SplitQuantError):
    """Lloyd iteration increased inertia"""
    pass
