"""Generation backend contract: request/result types and the backend protocol."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from ..errors import ContractViolation
from ..latent import AnchorEmbedding

PLACEMENTS = ("first", "middle", "last")


@dataclass(frozen=True)
class DecodeSpec:
    """Decoding mode: greedy, or seeded temperature sampling."""

    mode: str = "greedy"
    tau: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("greedy", "temperature"):
            raise ContractViolation(f"unknown decode mode {self.mode!r}")
        if self.mode == "temperature" and not (self.tau is not None and self.tau > 0.0):
            raise ContractViolation("temperature decoding requires tau > 0")


GREEDY = DecodeSpec(mode="greedy")


def temperature(tau: float, seed: int = 0) -> DecodeSpec:
    return DecodeSpec(mode="temperature", tau=tau, seed=seed)


@dataclass(frozen=True)
class GenerationResult:
    """One generation: text, its tokens, and per-token natural-log probs."""

    text: str
    tokens: tuple[str, ...]
    token_logprobs: tuple[float, ...]
    prompt_token_count: int
    truncated: bool = False

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.token_logprobs):
            raise ContractViolation(
                f"{len(self.tokens)} tokens but {len(self.token_logprobs)} logprobs"
            )
        for lp in self.token_logprobs:
            if not (math.isfinite(lp) and lp <= 0.0):
                raise ContractViolation(f"logprobs must be finite and <= 0, got {lp}")

    @property
    def output_token_count(self) -> int:
        return len(self.tokens)

    @property
    def total_logprob(self) -> float:
        return float(sum(self.token_logprobs))


@dataclass(frozen=True)
class InjectionRequest:
    """Greedy generation with reserved special tokens carrying the given
    embeddings, inserted at ``placement``."""

    prompt: str
    injected_embeddings: tuple[np.ndarray, ...]
    placement: str = "last"
    max_tokens: int = 300
    decode: DecodeSpec = field(default=GREEDY)

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ContractViolation("prompt must be non-empty")
        if len(self.injected_embeddings) < 1:
            raise ContractViolation("at least one injected embedding is required")
        if self.placement not in PLACEMENTS:
            raise ContractViolation(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")
        if self.max_tokens < 1:
            raise ContractViolation(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.decode.mode != "greedy":
            raise ContractViolation("injection requires greedy decoding")
        dims = {np.asarray(e).shape for e in self.injected_embeddings}
        if len(dims) != 1 or any(len(s) != 1 for s in dims):
            raise ContractViolation(f"injected embeddings must share one 1-D shape, got {dims}")

    @property
    def inject_count(self) -> int:
        return len(self.injected_embeddings)


@runtime_checkable
class GenerationBackend(Protocol):
    """What the optimizer needs from a generator."""

    embed_dim: int

    def base_first_token(self, prompt: str) -> AnchorEmbedding: ...

    def generate_with_injection(self, request: InjectionRequest) -> GenerationResult: ...

    def generate_plain(
        self, prompt: str, decode: DecodeSpec = GREEDY, max_tokens: int = 300
    ) -> GenerationResult: ...
