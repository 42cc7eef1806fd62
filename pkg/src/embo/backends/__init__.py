from .base import (
    GREEDY,
    DecodeSpec,
    GenerationBackend,
    GenerationResult,
    InjectionRequest,
    PLACEMENTS,
    temperature,
)
from .http import HttpBackend
from .synthetic import SyntheticBackend, SyntheticWorld

__all__ = [
    "GREEDY",
    "DecodeSpec",
    "GenerationBackend",
    "GenerationResult",
    "HttpBackend",
    "InjectionRequest",
    "PLACEMENTS",
    "SyntheticBackend",
    "SyntheticWorld",
    "temperature",
]
