"""Frame-level evaluation toolkit for surgical phase recognition."""

from .errors import PhaseEvalError

__all__ = ["PhaseEvalError"]
__version__ = "0.1.0"
