"""Acquisition functions and sampling-based batch maximization.

All scoring functions accept scalars or numpy arrays and are pure; batch
selection draws a seeded standard-normal candidate pool in the latent space,
scores every candidate under the model posterior, and returns the top
``batch`` candidates (descending score, ties broken by lower pool index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import gp
from .errors import ContractViolation

ACQUISITION_KINDS = ("ei", "adaptive-ei", "pi", "ucb")


@dataclass(frozen=True)
class AcquisitionSpec:
    """Which acquisition to score with, plus its kind-specific parameters.

    ``delta`` applies to adaptive-ei only, ``beta`` to ucb only; ``sigma_min``
    is the posterior-scale threshold below which the degenerate (zero
    variance) branch is used.
    """

    kind: str = "adaptive-ei"
    delta: float = 0.1
    beta: float = 1.0
    sigma_min: float = 1e-12

    def __post_init__(self) -> None:
        if self.kind not in ACQUISITION_KINDS:
            raise ContractViolation(f"unknown acquisition kind {self.kind!r}")
        if not (0.0 < self.delta < 1.0):
            raise ContractViolation(f"delta must lie in (0, 1), got {self.delta}")
        if not self.beta > 0.0:
            raise ContractViolation(f"beta must be positive, got {self.beta}")
        if not self.sigma_min > 0.0:
            raise ContractViolation(f"sigma_min must be positive, got {self.sigma_min}")


@dataclass(frozen=True)
class CandidatePool:
    """Seeded standard-normal candidate pool in the latent space."""

    count: int = 5000
    dim: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ContractViolation(f"pool count must be >= 1, got {self.count}")
        if self.dim < 1:
            raise ContractViolation(f"pool dim must be >= 1, got {self.dim}")

    def draw(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return rng.standard_normal((self.count, self.dim))


def scaled_expected_improvement(mu, variance, best, scale: float = 1.0, sigma_min: float = 1e-12):
    """EI with the posterior scale inflated by ``scale``.

    With delta = mu - best and s = scale * sqrt(variance):

        EI = delta * Phi(delta / s) + s * phi(delta / s)   for s > sigma_min
        EI = max(delta, 0)                                 otherwise
    """
    mu_arr = np.asarray(mu, dtype=float)
    var_arr = np.asarray(variance, dtype=float)
    delta = mu_arr - best
    s = scale * np.sqrt(np.clip(var_arr, 0.0, None))
    safe = np.where(s > sigma_min, s, 1.0)
    z = delta / safe
    value = np.where(
        s > sigma_min,
        delta * norm.cdf(z) + s * norm.pdf(z),
        np.maximum(delta, 0.0),
    )
    value = np.maximum(value, 0.0)
    return float(value) if value.ndim == 0 else value


def expected_improvement(mu, variance, best, sigma_min: float = 1e-12):
    """Closed-form expected improvement E[(f - best)^+] under N(mu, variance)."""
    return scaled_expected_improvement(mu, variance, best, 1.0, sigma_min)


def noise_scale(gain: float, delta: float) -> float:
    """Noise-adaptive scale omega = sqrt(gain + 1 + ln(1/delta))."""
    if not (0.0 < delta < 1.0):
        raise ContractViolation(f"delta must lie in (0, 1), got {delta}")
    if gain < 0.0:
        raise ContractViolation(f"information gain must be nonnegative, got {gain}")
    return math.sqrt(gain + 1.0 + math.log(1.0 / delta))


def adaptive_expected_improvement(mu, variance, best, gain: float, delta: float, sigma_min: float = 1e-12):
    """EI with the posterior scale inflated for noisy observations."""
    return scaled_expected_improvement(mu, variance, best, noise_scale(gain, delta), sigma_min)


def probability_of_improvement(mu, variance, best, sigma_min: float = 1e-12):
    """Phi((mu - best) / sigma), degenerating to an indicator at sigma = 0."""
    mu_arr = np.asarray(mu, dtype=float)
    var_arr = np.asarray(variance, dtype=float)
    sigma = np.sqrt(np.clip(var_arr, 0.0, None))
    safe = np.where(sigma > sigma_min, sigma, 1.0)
    value = np.where(
        sigma > sigma_min,
        norm.cdf((mu_arr - best) / safe),
        (mu_arr > best).astype(float),
    )
    return float(value) if value.ndim == 0 else value


def ucb(mu, variance, beta: float):
    """Upper confidence bound mu + sqrt(beta) * sigma."""
    if not beta > 0.0:
        raise ContractViolation(f"beta must be positive, got {beta}")
    mu_arr = np.asarray(mu, dtype=float)
    sigma = np.sqrt(np.clip(np.asarray(variance, dtype=float), 0.0, None))
    value = mu_arr + math.sqrt(beta) * sigma
    return float(value) if value.ndim == 0 else value


def score_candidates(model: gp.GPModel, candidates: np.ndarray, spec: AcquisitionSpec) -> np.ndarray:
    """Acquisition scores for candidate rows under the model posterior."""
    means, variances = gp.posterior_batch(model, candidates)
    best = model.best_value
    if spec.kind == "ei":
        return np.asarray(expected_improvement(means, variances, best, spec.sigma_min))
    if spec.kind == "adaptive-ei":
        gain = gp.information_gain(model)
        return np.asarray(adaptive_expected_improvement(means, variances, best, gain, spec.delta, spec.sigma_min))
    if spec.kind == "pi":
        return np.asarray(probability_of_improvement(means, variances, best, spec.sigma_min))
    return np.asarray(ucb(means, variances, spec.beta))


def select_batch(
    model: gp.GPModel,
    pool: CandidatePool,
    spec: AcquisitionSpec,
    batch: int,
) -> list[np.ndarray]:
    """Top ``batch`` pool candidates by acquisition score.

    Deterministic given (model, pool seed, spec, batch): the sort is stable,
    so bit-identical scores rank by lower pool index.
    """
    if not 1 <= batch <= pool.count:
        raise ContractViolation(f"batch must lie in [1, {pool.count}], got {batch}")
    if pool.dim != model.dim:
        raise ContractViolation(f"pool dim {pool.dim} does not match model dim {model.dim}")
    candidates = pool.draw()
    scores = score_candidates(model, candidates, spec)
    order = np.argsort(-scores, kind="stable")[:batch]
    return [candidates[i].copy() for i in order]
