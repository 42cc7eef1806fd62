"""Objective assembly: answer extraction, coherence, verifier strategies.

The objective of a candidate is ``bit + coherence`` where the bit comes from
a verifier pass over the candidate set and coherence summarises the
generation's token log-probabilities. Two coherence modes ship:

* ``paper``: the raw sum of token log-probs (unbounded below), so a strong
  fluency gap can outweigh the verifier bit;
* ``hierarchical``: ``exp(mean logprob)`` in (0, 1], which makes the bit
  strictly dominant and coherence a pure tie-breaker.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Protocol, Sequence

from .backends.base import GREEDY, GenerationBackend, GenerationResult
from .errors import ContractViolation, EmptyOutputError

ANSWER_MARKER = "Answer:"
COHERENCE_MODES = ("paper", "hierarchical")
VERIFIER_STRATEGIES = ("single-judge", "multi-judge", "single-generate", "multi-generate")

_NUMERIC_REL_TOL = 1e-6
_STRIP_CHARS = " \t\r\n\f\v.,;:!?\"'`()[]{}$%*"
_GROUPED_NUMBER = re.compile(r"^[-+]?\d{1,3}(,\d{3})+(\.\d+)?$")
_YES_WORDS = {"yes", "true"}
_NO_WORDS = {"no", "false"}


@dataclass(frozen=True)
class NormalizedAnswer:
    """Comparable form of an answer. ``raw`` is kept for display only."""

    raw: str = field(compare=False)
    canonical: str
    kind: str  # "numeric" | "text"
    value: float | None

    def matches(self, other: "NormalizedAnswer | None") -> bool:
        """Equality with relative tolerance for numeric answers."""
        if other is None:
            return False
        if self.kind == "numeric" and other.kind == "numeric":
            a, b = self.value, other.value
            return abs(a - b) <= _NUMERIC_REL_TOL * max(1.0, abs(a), abs(b))
        if self.kind != other.kind:
            return False
        return self.canonical == other.canonical


def _canonical_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def normalize_answer(payload: str) -> NormalizedAnswer | None:
    """Strip punctuation and separators; parse numerically when possible."""
    stripped = payload.strip().strip(_STRIP_CHARS)
    if not stripped:
        return None
    numeric_text = stripped.replace(",", "") if _GROUPED_NUMBER.match(stripped) else stripped
    try:
        value = float(numeric_text)
    except ValueError:
        value = None
    if value is not None and math.isfinite(value):
        return NormalizedAnswer(
            raw=payload, canonical=_canonical_number(value), kind="numeric", value=float(value)
        )
    folded = " ".join(stripped.casefold().split())
    if folded in _YES_WORDS:
        folded = "yes"
    elif folded in _NO_WORDS:
        folded = "no"
    return NormalizedAnswer(raw=payload, canonical=folded, kind="text", value=None)


def extract_answer(text: str) -> NormalizedAnswer | None:
    """Normalize the content after the last ``Answer:`` marker, if any."""
    idx = text.rfind(ANSWER_MARKER)
    if idx < 0:
        return None
    remainder = text[idx + len(ANSWER_MARKER) :]
    for line in remainder.splitlines() or [remainder]:
        if line.strip():
            return normalize_answer(line)
    return None


def coherence(result: GenerationResult, mode: str = "paper") -> float:
    """Fluency score of a generation under the configured mode."""
    if mode not in COHERENCE_MODES:
        raise ContractViolation(f"unknown coherence mode {mode!r}")
    if result.output_token_count < 1:
        raise EmptyOutputError("cannot score an empty generation")
    total = result.total_logprob
    if mode == "paper":
        return total
    return math.exp(total / result.output_token_count)


def objective(bit: int, coherence_value: float, mode: str = "paper") -> float:
    """Total objective: verifier bit plus coherence."""
    if bit not in (0, 1):
        raise ContractViolation(f"verifier bit must be 0 or 1, got {bit}")
    if mode not in COHERENCE_MODES:
        raise ContractViolation(f"unknown coherence mode {mode!r}")
    if mode == "paper" and coherence_value > 0.0:
        raise ContractViolation("paper-mode coherence is a log-prob sum and cannot be positive")
    if mode == "hierarchical" and not (0.0 < coherence_value <= 1.0):
        raise ContractViolation("hierarchical coherence must lie in (0, 1]")
    return bit + coherence_value


@dataclass(frozen=True)
class ObjectiveScore:
    verifier_bit: int
    coherence: float
    total: float
    mode: str


def majority_answer(answers: Sequence[NormalizedAnswer | None]) -> NormalizedAnswer | None:
    """Most frequent answer; ties break toward earliest first occurrence."""
    counts: dict[tuple[str, str], int] = {}
    first: dict[tuple[str, str], NormalizedAnswer] = {}
    order: list[tuple[str, str]] = []
    for ans in answers:
        if ans is None:
            continue
        key = (ans.kind, ans.canonical)
        if key not in counts:
            counts[key] = 0
            first[key] = ans
            order.append(key)
        counts[key] += 1
    if not counts:
        return None
    best = max(counts.values())
    for key in order:
        if counts[key] == best:
            return first[key]
    raise AssertionError("unreachable")


class VerifiableCandidate(Protocol):
    """What the verifier needs from a candidate."""

    @property
    def text(self) -> str: ...

    @property
    def answer(self) -> NormalizedAnswer | None: ...


@dataclass(frozen=True)
class VerifierOutcome:
    """Per-candidate correctness bits plus the verifier's own answer, if the
    strategy generates one."""

    strategy: str
    refined_answer: NormalizedAnswer | None
    bits: tuple[int, ...]
    degraded: bool
    transcripts: tuple[GenerationResult, ...]

    @property
    def transcript(self) -> GenerationResult | None:
        return self.transcripts[-1] if self.transcripts else None


_TEMPLATE_FILES = {
    "single-judge": "single_judge.txt",
    "multi-judge": "multi_judge.txt",
    "single-generate": "single_generate.txt",
    "multi-generate": "multi_generate.txt",
}


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Load a prompt template asset by file name."""
    return (resources.files("embo") / "prompts" / name).read_text(encoding="utf-8")


def render_template(name: str, **slots: str) -> str:
    # Plain replacement: templates may legitimately contain other braces.
    text = load_template(name)
    for key, value in slots.items():
        text = text.replace("{" + key + "}", value)
    return text


def _parse_index_reply(text: str, size: int) -> tuple[set[int], bool]:
    """Indices marked correct by a multi-judge reply; degraded on no parse."""
    for line in text.splitlines():
        if line.strip():
            ints = [int(tok) for tok in re.findall(r"\d+", line)]
            if ints:
                return {i for i in ints if 0 <= i < size}, False
            if line.strip().casefold().startswith("none"):
                return set(), False
            return set(), True
    return set(), True


def _parse_binary_reply(text: str) -> tuple[int | None, bool]:
    for line in text.splitlines():
        if line.strip():
            match = re.search(r"[01]", line)
            if match:
                return int(match.group()), False
            return None, True
    return None, True


def run_verifier(
    strategy: str,
    question: str,
    candidates: Sequence[VerifiableCandidate],
    backend: GenerationBackend,
    max_tokens: int = 300,
) -> VerifierOutcome:
    """Score candidates with the chosen strategy via one (or, for single-*
    strategies, one-per-answer) greedy backend call.

    Candidates without an extracted answer are scored 0 and excluded from the
    prompt; duplicated answers appear once, in order of first appearance. An
    unparseable verifier reply degrades the outcome (all affected bits 0)
    rather than failing.
    """
    if strategy not in VERIFIER_STRATEGIES:
        raise ContractViolation(f"unknown verifier strategy {strategy!r}")
    bits = [0] * len(candidates)
    answered = [(i, c) for i, c in enumerate(candidates) if c.answer is not None]
    if not answered:
        return VerifierOutcome(strategy, None, tuple(bits), True, ())

    group_of: dict[int, int] = {}  # candidate index -> dedup group
    groups: list[VerifiableCandidate] = []
    seen: dict[tuple[str, str], int] = {}
    for i, cand in answered:
        key = (cand.answer.kind, cand.answer.canonical)
        if key not in seen:
            seen[key] = len(groups)
            groups.append(cand)
        group_of[i] = seen[key]

    transcripts: list[GenerationResult] = []
    degraded = False
    refined: NormalizedAnswer | None = None

    if strategy == "multi-generate":
        answers_block = "\n".join(f"{j}. {c.text}" for j, c in enumerate(groups))
        prompt = render_template(_TEMPLATE_FILES[strategy], question=question, answers=answers_block)
        out = backend.generate_plain(prompt, GREEDY, max_tokens)
        transcripts.append(out)
        refined = extract_answer(out.text)
        degraded = refined is None
        for i, cand in answered:
            bits[i] = 1 if cand.answer.matches(refined) else 0
    elif strategy == "multi-judge":
        answers_block = "\n".join(f"{j}. {c.text}" for j, c in enumerate(groups))
        prompt = render_template(_TEMPLATE_FILES[strategy], question=question, answers=answers_block)
        out = backend.generate_plain(prompt, GREEDY, max_tokens)
        transcripts.append(out)
        marked, degraded = _parse_index_reply(out.text, len(groups))
        for i, _ in answered:
            bits[i] = 1 if group_of[i] in marked else 0
    else:
        group_bits = []
        regenerated: list[NormalizedAnswer | None] = []
        for cand in groups:
            prompt = render_template(_TEMPLATE_FILES[strategy], question=question, answers=cand.text)
            out = backend.generate_plain(prompt, GREEDY, max_tokens)
            transcripts.append(out)
            if strategy == "single-judge":
                bit, bad = _parse_binary_reply(out.text)
                group_bits.append(bit or 0)
                degraded = degraded or bad
            else:
                y = extract_answer(out.text)
                regenerated.append(y)
                group_bits.append(1 if cand.answer.matches(y) else 0)
                degraded = degraded or y is None
        for i, _ in answered:
            bits[i] = group_bits[group_of[i]]
        if strategy == "single-generate":
            refined = majority_answer(regenerated)

    return VerifierOutcome(strategy, refined, tuple(bits), degraded, tuple(transcripts))
