"""Gaussian-process surrogate over the latent search space.

Model
-----
Zero-mean GP prior with a Gaussian (RBF) kernel of bandwidth ``l``:

    k(a, b) = exp(-||a - b||^2 / (2 l^2))

Conditioning on observations ``(U, y)`` gives the posterior at a query ``u``:

    mean(u) = k(u, U) G^{-1} y
    var(u)  = k(u, u) - k(u, U) G^{-1} k(U, u)

where ``G`` is the Gram matrix, augmented by ``noise * I`` in noisy mode or by
a small jitter in noiseless mode. All solves go through a cached Cholesky
factor; no explicit inverse is ever formed.

The information gain of a noisy model with noise constant ``noise`` is

    gain = 1/2 * log det(I + noise^{-1} K)

computed from the Cholesky factor of ``I + K / noise`` by summing the log of
its diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import ContractViolation, InconsistentDataError, NumericalConditioningError

PRIOR_MEAN = 0.0

# Jitter ladder for positive-definiteness repair in noiseless mode.
_JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)

# Duplicate observations whose values agree within this tolerance collapse to one.
_DUPLICATE_VALUE_TOL = 1e-9


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel configuration.

    ``bandwidth_mode="median"`` recomputes the bandwidth at fit time as the
    median pairwise distance of the observed points (falling back to 1.0 when
    every pairwise distance is zero). ``"fixed"`` uses ``bandwidth`` as given.
    """

    bandwidth: float = 1.0
    bandwidth_mode: str = "fixed"

    def __post_init__(self) -> None:
        if not (self.bandwidth > 0.0 and math.isfinite(self.bandwidth)):
            raise ContractViolation(f"bandwidth must be a positive finite real, got {self.bandwidth}")
        if self.bandwidth_mode not in ("fixed", "median"):
            raise ContractViolation(f"unknown bandwidth_mode {self.bandwidth_mode!r}")


def median_bandwidth(points: np.ndarray) -> float:
    """Median pairwise distance of ``points``; 1.0 when there is no spread."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(pts)))
    return med if med > 0.0 else 1.0


def kernel_eval(a: np.ndarray, b: np.ndarray, spec: KernelSpec) -> float:
    """Evaluate the Gaussian kernel between two latent points."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ContractViolation(f"dimension mismatch: {a.shape} vs {b.shape}")
    sq = float(np.dot(a - b, a - b))
    return float(np.exp(-sq / (2.0 * spec.bandwidth**2)))


def gram_matrix(points: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix K[i, j] = k(points[i], points[j])."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    sq = cdist(pts, pts, metric="sqeuclidean")
    return np.exp(-sq / (2.0 * spec.bandwidth**2))


def cross_kernel(queries: np.ndarray, points: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix between query rows and observed rows."""
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if q.shape[1] != p.shape[1]:
        raise ContractViolation(f"dimension mismatch: query dim {q.shape[1]} vs model dim {p.shape[1]}")
    sq = cdist(q, p, metric="sqeuclidean")
    return np.exp(-sq / (2.0 * spec.bandwidth**2))


@dataclass(frozen=True)
class GPModel:
    """Fitted surrogate. Immutable after ``fit``; safe for concurrent reads.

    ``gram`` is the raw kernel matrix; ``gram_factor`` is the lower Cholesky
    factor of the augmented matrix ``gram + (noise or jitter) * I``.
    """

    points: np.ndarray
    values: np.ndarray
    kernel: KernelSpec
    noise: float
    noise_mode: str
    gram: np.ndarray
    gram_factor: np.ndarray
    jitter: float
    weights: np.ndarray  # (gram + aug I)^{-1} values, via the factorization

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def best_value(self) -> float:
        return float(np.max(self.values))


@dataclass(frozen=True)
class PosteriorStat:
    """Posterior mean and (clamped, nonnegative) variance at one query."""

    mean: float
    variance: float


def _dedupe(points: np.ndarray, values: np.ndarray, noise_mode: str) -> tuple[np.ndarray, np.ndarray]:
    keep: list[int] = []
    for i in range(points.shape[0]):
        duplicate_of = None
        for j in keep:
            if np.array_equal(points[i], points[j]):
                duplicate_of = j
                break
        if duplicate_of is None:
            keep.append(i)
        elif abs(values[i] - values[duplicate_of]) <= _DUPLICATE_VALUE_TOL:
            continue  # identical observation, keep the first
        elif noise_mode == "noiseless":
            raise InconsistentDataError(
                f"duplicate point with conflicting values {values[duplicate_of]} vs {values[i]}"
            )
        else:
            keep.append(i)  # noise explains conflicting repeats
    return points[keep], values[keep]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def fit(
    points: np.ndarray,
    values: np.ndarray,
    spec: KernelSpec = KernelSpec(),
    noise: float = 0.0,
    noise_mode: str = "noiseless",
) -> GPModel:
    """Fit the GP on observed latent points and objective values."""
    pts = np.atleast_2d(np.asarray(points, dtype=float)).copy()
    vals = np.asarray(values, dtype=float).ravel().copy()
    if pts.shape[0] == 0:
        raise ContractViolation("at least one observation is required")
    if pts.shape[0] != vals.shape[0]:
        raise ContractViolation(f"{pts.shape[0]} points but {vals.shape[0]} values")
    if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(vals)):
        raise ContractViolation("points and values must be finite")
    if noise_mode not in ("noiseless", "noisy"):
        raise ContractViolation(f"unknown noise_mode {noise_mode!r}")
    if noise_mode == "noisy" and not noise > 0.0:
        raise ContractViolation(f"noisy mode requires noise > 0, got {noise}")
    if noise_mode == "noiseless" and noise != 0.0:
        raise ContractViolation("noiseless mode must use noise = 0")

    pts, vals = _dedupe(pts, vals, noise_mode)

    if spec.bandwidth_mode == "median":
        spec = KernelSpec(bandwidth=median_bandwidth(pts), bandwidth_mode="fixed")
    gram = gram_matrix(pts, spec)
    n = gram.shape[0]

    if noise_mode == "noisy":
        attempts = [(noise, 0.0)]
    else:
        attempts = [(j, j) for j in _JITTERS]

    factor = None
    used_jitter = 0.0
    for aug, jit in attempts:
        try:
            factor = np.linalg.cholesky(gram + aug * np.eye(n))
            used_jitter = jit
            break
        except np.linalg.LinAlgError:
            continue
    if factor is None:
        raise NumericalConditioningError(
            f"Cholesky factorization failed for {n} points even at jitter {_JITTERS[-1]}"
        )

    weights = _solve_cholesky(factor, vals - PRIOR_MEAN)
    return GPModel(
        points=_freeze(pts),
        values=_freeze(vals),
        kernel=spec,
        noise=noise,
        noise_mode=noise_mode,
        gram=_freeze(gram),
        gram_factor=_freeze(factor),
        jitter=used_jitter,
        weights=_freeze(weights),
    )


def _solve_cholesky(factor: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    from scipy.linalg import solve_triangular

    half = solve_triangular(factor, rhs, lower=True)
    return solve_triangular(factor.T, half, lower=False)


def posterior_batch(model: GPModel, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means and variances for a batch of query rows."""
    from scipy.linalg import solve_triangular

    k_star = cross_kernel(queries, model.points, model.kernel)
    means = k_star @ model.weights + PRIOR_MEAN
    half = solve_triangular(model.gram_factor, k_star.T, lower=True)
    variances = 1.0 - np.einsum("ij,ij->j", half, half)
    return means, np.clip(variances, 0.0, None)


def posterior(model: GPModel, query: np.ndarray) -> PosteriorStat:
    """Posterior at a single query point."""
    q = np.asarray(query, dtype=float)
    if q.ndim != 1 or q.shape[0] != model.dim:
        raise ContractViolation(f"query dimension {q.shape} does not match model dim {model.dim}")
    means, variances = posterior_batch(model, q[None, :])
    return PosteriorStat(mean=float(means[0]), variance=float(variances[0]))


def information_gain(model: GPModel) -> float:
    """1/2 * log det(I + noise^{-1} K) for a noisy model."""
    if model.noise_mode != "noisy" or not model.noise > 0.0:
        raise ContractViolation("information gain requires a noisy model with noise > 0")
    n = model.gram.shape[0]
    factor = np.linalg.cholesky(np.eye(n) + model.gram / model.noise)
    return float(np.sum(np.log(np.diag(factor))))
