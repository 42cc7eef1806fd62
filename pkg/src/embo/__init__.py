"""Verifier-guided Bayesian optimisation over injected first-token embeddings.

The search perturbs the embedding of a generator's first answer token inside
a low-dimensional random projection, scores each perturbation with a
verifier-plus-coherence objective, and picks the next perturbations by
expected improvement under a Gaussian-process surrogate.
"""

from . import acquisition, gp, harness, latent, optimizer, scoring
from .backends import HttpBackend, SyntheticBackend, SyntheticWorld
from .optimizer import OptimizerConfig, Question, RunRecord, optimize

__all__ = [
    "acquisition",
    "gp",
    "harness",
    "latent",
    "optimizer",
    "scoring",
    "HttpBackend",
    "SyntheticBackend",
    "SyntheticWorld",
    "OptimizerConfig",
    "Question",
    "RunRecord",
    "optimize",
]
