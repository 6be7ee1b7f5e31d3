"""covweave: constraint-verifier evaluation of long-form generation."""

from .core import (AttributeSeed, GenerationResult, TaskInstance, TaskKind, TaskScore,
                   Tier, count_tokens, harmonic_mean, length_score)

__version__ = "0.1.0"

__all__ = ["AttributeSeed", "GenerationResult", "TaskInstance", "TaskKind", "TaskScore",
           "Tier", "__version__", "count_tokens", "harmonic_mean", "length_score"]
