"""Random-projection map between the reduced search space and the embedding
space, plus the initial perturbation sampler.

A run searches over u in R^d; the injected embedding is

    x = z + scale * (A @ u) / sqrt(d)

with A a D x d matrix of i.i.d. standard normals drawn once per run. The
1/sqrt(d) factor gives each embedding coordinate of A u / sqrt(d) unit
variance for unit-variance u, so ``scale`` reads directly as a per-coordinate
perturbation magnitude; being a constant multiple of A it leaves the
reachable affine subspace unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation


@dataclass(frozen=True)
class AnchorEmbedding:
    """Embedding of the greedy first answer token and its vocabulary index."""

    vector: np.ndarray
    token_id: int

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=float)
        if vec.ndim != 1:
            raise ContractViolation(f"anchor must be a 1-D vector, got shape {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ContractViolation("anchor embedding must be finite")
        vec = vec.copy()
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class ProjectionMap:
    """Seeded D x d standard-normal projection with a perturbation scale."""

    matrix: np.ndarray
    seed: int
    scale: float

    @property
    def embed_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.matrix.shape[1]


def make_projection(embed_dim: int, latent_dim: int, seed: int, scale: float = 1.0) -> ProjectionMap:
    """Draw the projection matrix for one optimization run."""
    if not 1 <= latent_dim <= embed_dim:
        raise ContractViolation(f"need 1 <= d <= D, got d={latent_dim}, D={embed_dim}")
    if not scale > 0.0:
        raise ContractViolation(f"scale must be positive, got {scale}")
    rng = np.random.default_rng(seed)
    matrix = rng.standard_normal((embed_dim, latent_dim))
    matrix.setflags(write=False)
    return ProjectionMap(matrix=matrix, seed=seed, scale=scale)


def to_embedding(projection: ProjectionMap, anchor: AnchorEmbedding, latent: np.ndarray) -> np.ndarray:
    """Map a latent point to an injected embedding around the anchor."""
    u = np.asarray(latent, dtype=float)
    if u.ndim != 1 or u.shape[0] != projection.latent_dim:
        raise ContractViolation(
            f"latent point of shape {u.shape} does not match projection d={projection.latent_dim}"
        )
    if anchor.dim != projection.embed_dim:
        raise ContractViolation(
            f"anchor dim {anchor.dim} does not match projection D={projection.embed_dim}"
        )
    return anchor.vector + projection.scale * (projection.matrix @ u) / math.sqrt(projection.latent_dim)


def sample_initial(count: int, dim: int, seed: int, include_anchor: bool = False) -> list[np.ndarray]:
    """Draw ``count`` i.i.d. standard-normal latent points.

    With ``include_anchor`` the first point is the zero vector, i.e. the
    unperturbed anchor embedding.
    """
    if count < 1:
        raise ContractViolation(f"count must be >= 1, got {count}")
    if dim < 1:
        raise ContractViolation(f"dim must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((count, dim))
    if include_anchor:
        draws[0] = 0.0
    return [draws[i] for i in range(count)]
