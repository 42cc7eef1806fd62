"""Search driver: initialization, evaluate-fit-acquire iterations,
convergence, final answer selection.

Iteration 1 is the initial perturbation batch; iterations 2..K are GP-guided.
The surrogate is always fitted in noisy mode (the adaptive acquisition needs
the information gain), on observations frozen at the iteration that created
them. Convergence compares consecutive best-so-far objective values.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import gp
from .acquisition import ACQUISITION_KINDS, AcquisitionSpec, CandidatePool, select_batch
from .backends.base import GenerationBackend, GenerationResult, InjectionRequest, PLACEMENTS, temperature
from .errors import ContractViolation, TransportError
from .latent import AnchorEmbedding, ProjectionMap, make_projection, sample_initial, to_embedding
from .scoring import (
    COHERENCE_MODES,
    NormalizedAnswer,
    VERIFIER_STRATEGIES,
    VerifierOutcome,
    coherence,
    extract_answer,
    majority_answer,
    normalize_answer,
    objective,
    run_verifier,
)
from .seeding import derive_seed


@dataclass(frozen=True)
class Question:
    """One problem instance: stable id, bare question text, and the full
    generation prompt built by the harness."""

    id: str
    text: str
    prompt: str


@dataclass(frozen=True)
class OptimizerConfig:
    samples_per_iteration: int = 5
    max_iterations: int = 4
    epsilon: float = 0.01
    latent_dim: int = 50
    sigma: float = 1.0
    delta: float = 0.1
    noise: float = 0.1
    pool_size: int = 5000
    acquisition: str = "adaptive-ei"
    ucb_beta: float = 1.0
    placement: str = "last"
    inject_count: int = 1
    verifier: str = "multi-generate"
    coherence_mode: str = "paper"
    max_tokens: int = 300
    seed: int = 0

    def __post_init__(self) -> None:
        if self.samples_per_iteration < 1:
            raise ContractViolation("samples_per_iteration must be >= 1")
        if self.max_iterations < 1:
            raise ContractViolation("max_iterations must be >= 1")
        if self.epsilon < 0.0:
            raise ContractViolation("epsilon must be >= 0")
        if self.latent_dim < 1:
            raise ContractViolation("latent_dim must be >= 1")
        if self.pool_size < self.samples_per_iteration:
            raise ContractViolation("pool_size must be >= samples_per_iteration")
        if not self.sigma > 0.0:
            raise ContractViolation("sigma must be positive")
        if not self.noise > 0.0:
            raise ContractViolation("noise must be positive")
        if self.inject_count < 1:
            raise ContractViolation("inject_count must be >= 1")
        if self.acquisition not in ACQUISITION_KINDS:
            raise ContractViolation(f"unknown acquisition {self.acquisition!r}")
        if self.placement not in PLACEMENTS:
            raise ContractViolation(f"unknown placement {self.placement!r}")
        if self.verifier not in VERIFIER_STRATEGIES:
            raise ContractViolation(f"unknown verifier strategy {self.verifier!r}")
        if self.coherence_mode not in COHERENCE_MODES:
            raise ContractViolation(f"unknown coherence mode {self.coherence_mode!r}")

    def acquisition_spec(self) -> AcquisitionSpec:
        return AcquisitionSpec(kind=self.acquisition, delta=self.delta, beta=self.ucb_beta)


@dataclass
class Candidate:
    """One evaluated sample; its (latent, objective) pair is frozen at the
    iteration that scored it."""

    latent: np.ndarray | None
    result: GenerationResult
    answer: NormalizedAnswer | None
    iteration: int
    bit: int = 0
    coherence_value: float = 0.0
    objective_value: float = 0.0

    @property
    def text(self) -> str:
        return self.result.text


@dataclass
class IterationRecord:
    index: int
    candidates: list[Candidate]
    verifier: VerifierOutcome | None
    best_so_far: float


@dataclass
class RunRecord:
    """Full per-question trace."""

    question_id: str
    method: str  # "bo" | "perturb" | "sc"
    seed: int
    anchor_token_id: int | None
    projection_seed: int | None
    iterations: list[IterationRecord] = field(default_factory=list)
    best_series: list[float] = field(default_factory=list)
    termination: str = "max-iterations"
    final_answer: NormalizedAnswer | None = None
    prompt_tokens: int = 0
    output_tokens: int = 0
    generation_calls: int = 0
    failed: bool = False
    failure: str | None = None
    wall_time_s: float = 0.0  # never serialized: run logs must be reproducible

    @property
    def candidates(self) -> list[Candidate]:
        return [c for it in self.iterations for c in it.candidates]


def converged(f_prev: float, f_cur: float, epsilon: float) -> bool:
    """Strict convergence test |f_cur - f_prev| < epsilon."""
    if epsilon < 0.0:
        raise ContractViolation("epsilon must be >= 0")
    return abs(f_cur - f_prev) < epsilon


class _Accounting:
    """Token and call counters over backend results."""

    def __init__(self) -> None:
        self.prompt_tokens = 0
        self.output_tokens = 0
        self.calls = 0

    def add(self, result: GenerationResult) -> None:
        self.prompt_tokens += result.prompt_token_count
        self.output_tokens += result.output_token_count
        self.calls += 1


def _resolve_final_answer(
    last_outcome: VerifierOutcome | None, candidates: list[Candidate]
) -> NormalizedAnswer | None:
    if last_outcome is not None and last_outcome.refined_answer is not None:
        return last_outcome.refined_answer
    scored = [c for c in candidates if c.answer is not None]
    if scored:
        best = max(scored, key=lambda c: c.objective_value)
        if best.answer is not None:
            return best.answer
    return majority_answer([c.answer for c in candidates])


def _evaluate_latents(
    latents: list[np.ndarray],
    iteration: int,
    question: Question,
    config: OptimizerConfig,
    backend: GenerationBackend,
    anchor: AnchorEmbedding,
    projections: list[ProjectionMap],
    accounting: _Accounting,
) -> list[Candidate]:
    out = []
    for u in latents:
        embeddings = tuple(to_embedding(p, anchor, u) for p in projections)
        request = InjectionRequest(
            prompt=question.prompt,
            injected_embeddings=embeddings,
            placement=config.placement,
            max_tokens=config.max_tokens,
        )
        result = backend.generate_with_injection(request)
        accounting.add(result)
        out.append(
            Candidate(latent=u, result=result, answer=extract_answer(result.text), iteration=iteration)
        )
    return out


def _verify_and_freeze(
    record: RunRecord,
    new_candidates: list[Candidate],
    question: Question,
    config: OptimizerConfig,
    backend: GenerationBackend,
    accounting: _Accounting,
) -> VerifierOutcome:
    everyone = record.candidates + new_candidates
    outcome = run_verifier(config.verifier, question.text, everyone, backend, config.max_tokens)
    for transcript in outcome.transcripts:
        accounting.add(transcript)
    start = len(everyone) - len(new_candidates)
    for offset, cand in enumerate(new_candidates):
        cand.bit = outcome.bits[start + offset]
        cand.coherence_value = coherence(cand.result, config.coherence_mode)
        cand.objective_value = objective(cand.bit, cand.coherence_value, config.coherence_mode)
    return outcome


def optimize(question: Question, config: OptimizerConfig, backend: GenerationBackend) -> RunRecord:
    """Run the full search for one question.

    Transport failures abort the question: the partial trace is returned with
    ``failed`` set so the harness can move on.
    """
    run_seed = derive_seed(config.seed, question.id)
    record = RunRecord(
        question_id=question.id,
        method="bo",
        seed=config.seed,
        anchor_token_id=None,
        projection_seed=None,
    )
    accounting = _Accounting()
    started = time.monotonic()
    try:
        _optimize_into(record, question, config, backend, run_seed, accounting)
    except TransportError as exc:
        record.failed = True
        record.failure = str(exc)
    record.prompt_tokens = accounting.prompt_tokens
    record.output_tokens = accounting.output_tokens
    record.generation_calls = accounting.calls
    record.wall_time_s = time.monotonic() - started
    return record


def _optimize_into(
    record: RunRecord,
    question: Question,
    config: OptimizerConfig,
    backend: GenerationBackend,
    run_seed: int,
    accounting: _Accounting,
) -> None:
    anchor = backend.base_first_token(question.prompt)
    projections = [
        make_projection(
            backend.embed_dim,
            config.latent_dim,
            derive_seed(run_seed, "projection", j),
            config.sigma,
        )
        for j in range(config.inject_count)
    ]
    record.anchor_token_id = anchor.token_id
    record.projection_seed = projections[0].seed

    spec = config.acquisition_spec()
    best = -np.inf
    last_outcome: VerifierOutcome | None = None
    for t in range(1, config.max_iterations + 1):
        if t == 1:
            latents = sample_initial(
                config.samples_per_iteration, config.latent_dim, derive_seed(run_seed, "init")
            )
        else:
            points = np.stack([c.latent for c in record.candidates])
            values = np.array([c.objective_value for c in record.candidates])
            model = gp.fit(
                points,
                values,
                gp.KernelSpec(bandwidth_mode="median"),
                noise=config.noise,
                noise_mode="noisy",
            )
            pool = CandidatePool(
                count=config.pool_size, dim=config.latent_dim, seed=derive_seed(run_seed, "pool", t)
            )
            latents = select_batch(model, pool, spec, config.samples_per_iteration)

        new_candidates = _evaluate_latents(
            latents, t, question, config, backend, anchor, projections, accounting
        )
        last_outcome = _verify_and_freeze(
            record, new_candidates, question, config, backend, accounting
        )
        best = max(best, max(c.objective_value for c in new_candidates))
        record.best_series.append(best)
        record.iterations.append(IterationRecord(t, new_candidates, last_outcome, best))

        if t >= 2 and converged(record.best_series[-2], record.best_series[-1], config.epsilon):
            record.termination = "converged"
            break

    record.final_answer = _resolve_final_answer(last_outcome, record.candidates)


def perturbation_baseline(
    question: Question, config: OptimizerConfig, backend: GenerationBackend
) -> RunRecord:
    """Budget-matched random-perturbation baseline: k*K blind draws through
    the same projection and anchor, majority vote, no verifier."""
    run_seed = derive_seed(config.seed, question.id)
    record = RunRecord(
        question_id=question.id, method="perturb", seed=config.seed,
        anchor_token_id=None, projection_seed=None,
    )
    accounting = _Accounting()
    started = time.monotonic()
    try:
        anchor = backend.base_first_token(question.prompt)
        projections = [
            make_projection(
                backend.embed_dim,
                config.latent_dim,
                derive_seed(run_seed, "projection", j),
                config.sigma,
            )
            for j in range(config.inject_count)
        ]
        record.anchor_token_id = anchor.token_id
        record.projection_seed = projections[0].seed
        total = config.samples_per_iteration * config.max_iterations
        # Same stream as optimize's initial batch, extended to the full budget.
        latents = sample_initial(total, config.latent_dim, derive_seed(run_seed, "init"))
        candidates = _evaluate_latents(
            latents, 1, question, config, backend, anchor, projections, accounting
        )
        for cand in candidates:
            cand.coherence_value = coherence(cand.result, config.coherence_mode)
            cand.objective_value = objective(0, cand.coherence_value, config.coherence_mode)
        best = max(c.objective_value for c in candidates)
        record.iterations.append(IterationRecord(1, candidates, None, best))
        record.best_series.append(best)
        record.final_answer = majority_answer([c.answer for c in candidates])
    except TransportError as exc:
        record.failed = True
        record.failure = str(exc)
    record.prompt_tokens = accounting.prompt_tokens
    record.output_tokens = accounting.output_tokens
    record.generation_calls = accounting.calls
    record.wall_time_s = time.monotonic() - started
    return record


def sc_baseline(
    question: Question, config: OptimizerConfig, backend: GenerationBackend, tau: float = 0.8
) -> RunRecord:
    """Self-consistency baseline: k*K temperature samples, majority vote."""
    run_seed = derive_seed(config.seed, question.id)
    record = RunRecord(
        question_id=question.id, method="sc", seed=config.seed,
        anchor_token_id=None, projection_seed=None,
    )
    accounting = _Accounting()
    started = time.monotonic()
    try:
        total = config.samples_per_iteration * config.max_iterations
        candidates = []
        for i in range(total):
            decode = temperature(tau, seed=derive_seed(run_seed, "sc", i))
            result = backend.generate_plain(question.prompt, decode, config.max_tokens)
            accounting.add(result)
            cand = Candidate(
                latent=None, result=result, answer=extract_answer(result.text), iteration=1
            )
            cand.coherence_value = coherence(cand.result, config.coherence_mode)
            cand.objective_value = objective(0, cand.coherence_value, config.coherence_mode)
            candidates.append(cand)
        best = max(c.objective_value for c in candidates)
        record.iterations.append(IterationRecord(1, candidates, None, best))
        record.best_series.append(best)
        record.final_answer = majority_answer([c.answer for c in candidates])
    except TransportError as exc:
        record.failed = True
        record.failure = str(exc)
    record.prompt_tokens = accounting.prompt_tokens
    record.output_tokens = accounting.output_tokens
    record.generation_calls = accounting.calls
    record.wall_time_s = time.monotonic() - started
    return record


# -- run-log (de)serialization ------------------------------------------------


def _answer_to_json(answer: NormalizedAnswer | None) -> str | None:
    return None if answer is None else answer.canonical


def _answer_from_json(canonical: str | None) -> NormalizedAnswer | None:
    return None if canonical is None else normalize_answer(canonical)


def record_to_dict(record: RunRecord) -> dict:
    """JSON-ready view of a record. Excludes wall time and raw token arrays so
    logs are byte-reproducible and compact; metrics need nothing more."""
    return {
        "question_id": record.question_id,
        "method": record.method,
        "seed": record.seed,
        "anchor_token_id": record.anchor_token_id,
        "projection_seed": record.projection_seed,
        "termination": record.termination,
        "final_answer": _answer_to_json(record.final_answer),
        "best_series": record.best_series,
        "prompt_tokens": record.prompt_tokens,
        "output_tokens": record.output_tokens,
        "generation_calls": record.generation_calls,
        "failed": record.failed,
        "failure": record.failure,
        "iterations": [
            {
                "index": it.index,
                "best_so_far": it.best_so_far,
                "verifier": None
                if it.verifier is None
                else {
                    "strategy": it.verifier.strategy,
                    "refined_answer": _answer_to_json(it.verifier.refined_answer),
                    "bits": list(it.verifier.bits),
                    "degraded": it.verifier.degraded,
                },
                "candidates": [
                    {
                        "latent": None if c.latent is None else [float(v) for v in c.latent],
                        "answer": _answer_to_json(c.answer),
                        "bit": c.bit,
                        "coherence": c.coherence_value,
                        "objective": c.objective_value,
                    }
                    for c in it.candidates
                ],
            }
            for it in record.iterations
        ],
    }


def record_from_dict(payload: dict) -> RunRecord:
    record = RunRecord(
        question_id=payload["question_id"],
        method=payload["method"],
        seed=payload["seed"],
        anchor_token_id=payload["anchor_token_id"],
        projection_seed=payload["projection_seed"],
        termination=payload["termination"],
        final_answer=_answer_from_json(payload["final_answer"]),
        best_series=list(payload["best_series"]),
        prompt_tokens=payload["prompt_tokens"],
        output_tokens=payload["output_tokens"],
        generation_calls=payload["generation_calls"],
        failed=payload["failed"],
        failure=payload["failure"],
    )
    placeholder = GenerationResult(text="", tokens=(), token_logprobs=(), prompt_token_count=0)
    for it in payload["iterations"]:
        verifier = None
        if it["verifier"] is not None:
            verifier = VerifierOutcome(
                strategy=it["verifier"]["strategy"],
                refined_answer=_answer_from_json(it["verifier"]["refined_answer"]),
                bits=tuple(it["verifier"]["bits"]),
                degraded=it["verifier"]["degraded"],
                transcripts=(),
            )
        candidates = [
            Candidate(
                latent=None if c["latent"] is None else np.asarray(c["latent"], dtype=float),
                result=placeholder,
                answer=_answer_from_json(c["answer"]),
                iteration=it["index"],
                bit=c["bit"],
                coherence_value=c["coherence"],
                objective_value=c["objective"],
            )
            for c in it["candidates"]
        ]
        record.iterations.append(
            IterationRecord(it["index"], candidates, verifier, it["best_so_far"])
        )
    return record
