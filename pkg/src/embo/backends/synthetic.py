"""Deterministic synthetic generator for desk-scale runs.

The world places ``num_regions`` labelled centroids in embedding space (on
seeded orthogonal directions, scaled by ``centroid_scale``). A generation's
answer is the label of the centroid nearest to the injected embedding, and
its per-token log-probability is ``-sharpness * dist / L`` where ``dist`` is
the distance to that centroid and ``L`` the emitted token count, so total
coherence falls off linearly with distance.

Each question gets a deterministic gold region and an anchor placed between a
distractor centroid and the gold one (``anchor_pull`` / ``gold_pull``
weights), so unperturbed decoding usually lands in the wrong region and the
gold region is reachable but rarely hit by blind perturbation.

Verifier prompts are recognised by their instruction headers and answered
with accuracy ``verifier_accuracy``: a correct pass answers with the gold
label when some candidate matches it (else the majority candidate); a failed
pass answers with a uniformly random candidate label. All sampling is keyed
by request content, so concurrent use cannot change results.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import ContractViolation
from ..latent import AnchorEmbedding
from ..scoring import normalize_answer
from ..seeding import derive_seed
from .base import GREEDY, DecodeSpec, GenerationResult, InjectionRequest

_QID_PATTERN = re.compile(r"\[Q(\d+)\]")
_ANSWER_LINE = re.compile(r"Answer:\s*([^\n]*)")
_GENERATE_HEADER = 'starting the final answer with "Answer:"'
_JUDGE_HEADER = "provide your judgment on the correctness"

_FILLER = ("The", "probe", "resolves", "to", "the", "stable", "region", "with", "canonical", "value")


@dataclass(frozen=True)
class SyntheticWorld:
    """Geometry and verifier-noise configuration of the synthetic task."""

    embed_dim: int = 64
    num_regions: int = 8
    sharpness: float = 0.1
    verifier_accuracy: float = 1.0
    seed: int = 0
    centroid_scale: float = 8.0
    anchor_pull: float = 0.25
    gold_pull: float = 0.0
    anchor_jitter: float = 0.5
    direction_concentration: float = 0.0
    # Chance that an accurate verifier pass solves the question from scratch
    # when no candidate already matches gold. At 0 the verifier can only ever
    # echo a candidate label.
    solve_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.num_regions < 2:
            raise ContractViolation(f"need at least 2 regions, got {self.num_regions}")
        if self.num_regions >= self.embed_dim:
            raise ContractViolation("num_regions must be below embed_dim")
        if not self.sharpness > 0.0:
            raise ContractViolation(f"sharpness must be positive, got {self.sharpness}")
        if not (0.0 < self.verifier_accuracy <= 1.0):
            raise ContractViolation(f"verifier_accuracy must lie in (0, 1], got {self.verifier_accuracy}")
        if not (0.0 <= self.direction_concentration < 1.0):
            raise ContractViolation("direction_concentration must lie in [0, 1)")
        if not (0.0 <= self.solve_rate < 1.0):
            raise ContractViolation("solve_rate must lie in [0, 1)")

    @cached_property
    def centroids(self) -> np.ndarray:
        rng = np.random.default_rng(derive_seed(self.seed, "centroids"))
        raw = rng.standard_normal((self.embed_dim, self.num_regions + 1))
        q, r = np.linalg.qr(raw)
        q = q * np.sign(np.diag(r))  # fix QR sign ambiguity for determinism
        # Blend a shared direction into every centroid: concentration > 0
        # narrows the cone the regions live in.
        shared = q[:, -1]
        c = self.direction_concentration
        directions = np.sqrt(1.0 - c) * q[:, :-1] + np.sqrt(c) * shared[:, None]
        directions /= np.linalg.norm(directions, axis=0, keepdims=True)
        out = self.centroid_scale * directions.T
        out.setflags(write=False)
        return out

    @cached_property
    def labels(self) -> tuple[str, ...]:
        return tuple(str(100 + j) for j in range(self.num_regions))

    @cached_property
    def vocabulary(self) -> tuple[str, ...]:
        return _FILLER + ("Answer:",) + self.labels

    def gold_index(self, qid: int) -> int:
        return derive_seed(self.seed, "gold", qid) % self.num_regions

    def distractor_index(self, qid: int) -> int:
        g = self.gold_index(qid)
        step = 1 + derive_seed(self.seed, "distractor", qid) % (self.num_regions - 1)
        return (g + step) % self.num_regions

    def gold_label(self, qid: int) -> str:
        return self.labels[self.gold_index(qid)]

    def anchor_vector(self, qid: int) -> np.ndarray:
        z = (
            self.anchor_pull * self.centroids[self.distractor_index(qid)]
            + self.gold_pull * self.centroids[self.gold_index(qid)]
        )
        if self.anchor_jitter > 0.0:
            rng = np.random.default_rng(derive_seed(self.seed, "anchor", qid))
            nudge = rng.standard_normal(self.embed_dim)
            z = z + self.anchor_jitter * nudge / np.linalg.norm(nudge)
        return z

    def question_text(self, qid: int) -> str:
        return f"[Q{qid:05d}] Determine the canonical region label for probe {qid:05d}."

    def dataset_rows(self, count: int) -> list[dict[str, str]]:
        return [
            {
                "id": f"q{qid:05d}",
                "question": self.question_text(qid),
                "gold_answer": self.gold_label(qid),
            }
            for qid in range(count)
        ]


def _tokenize(text: str) -> tuple[str, ...]:
    words = text.split(" ")
    return tuple(w if i == 0 else " " + w for i, w in enumerate(words))


class SyntheticBackend:
    """GenerationBackend over a SyntheticWorld."""

    def __init__(self, world: SyntheticWorld):
        self.world = world
        self.embed_dim = world.embed_dim

    # -- prompt parsing ----------------------------------------------------

    def _question_id(self, prompt: str) -> int | None:
        matches = _QID_PATTERN.findall(prompt)
        return int(matches[-1]) if matches else None

    def _anchor_for_prompt(self, prompt: str) -> np.ndarray:
        qid = self._question_id(prompt)
        if qid is not None:
            return self.world.anchor_vector(qid)
        # No question marker: a free-form prompt still decodes deterministically.
        rng = np.random.default_rng(derive_seed(self.world.seed, "freeform", prompt))
        return rng.standard_normal(self.world.embed_dim)

    # -- protocol ----------------------------------------------------------

    def base_first_token(self, prompt: str) -> AnchorEmbedding:
        if not prompt:
            raise ContractViolation("prompt must be non-empty")
        z = self._anchor_for_prompt(prompt)
        nearest = int(np.argmin(np.linalg.norm(self.world.centroids - z, axis=1)))
        token_id = self.world.vocabulary.index(self.world.labels[nearest])
        return AnchorEmbedding(vector=z, token_id=token_id)

    def generate_with_injection(self, request: InjectionRequest) -> GenerationResult:
        stacked = np.stack([np.asarray(e, dtype=float) for e in request.injected_embeddings])
        if stacked.shape[1] != self.world.embed_dim:
            raise ContractViolation(
                f"injected embeddings have dim {stacked.shape[1]}, world dim is {self.world.embed_dim}"
            )
        return self._decode_from_point(stacked.mean(axis=0), request.prompt, request.max_tokens)

    def generate_plain(
        self, prompt: str, decode: DecodeSpec = GREEDY, max_tokens: int = 300
    ) -> GenerationResult:
        if not prompt:
            raise ContractViolation("prompt must be non-empty")
        kind = self._classify(prompt)
        if kind is not None:
            return self._answer_verifier_prompt(prompt, kind, max_tokens)
        point = self._anchor_for_prompt(prompt)
        if decode.mode == "temperature":
            rng = np.random.default_rng(
                derive_seed(self.world.seed, "temperature", decode.seed, decode.tau, prompt)
            )
            point = point + decode.tau * rng.standard_normal(self.world.embed_dim)
        return self._decode_from_point(point, prompt, max_tokens)

    # -- generation --------------------------------------------------------

    def _decode_from_point(self, point: np.ndarray, prompt: str, max_tokens: int) -> GenerationResult:
        distances = np.linalg.norm(self.world.centroids - point, axis=1)
        nearest = int(np.argmin(distances))
        label = self.world.labels[nearest]
        text = " ".join(_FILLER) + f" {nearest}. Answer: {label}"
        return self._emit(text, distances[nearest], prompt, max_tokens)

    def _emit(self, text: str, dist: float, prompt: str, max_tokens: int) -> GenerationResult:
        tokens = _tokenize(text)
        truncated = len(tokens) > max_tokens
        if truncated:
            tokens = tokens[:max_tokens]
            text = "".join(tokens)
        per_token = -self.world.sharpness * float(dist) / len(tokens)
        return GenerationResult(
            text=text,
            tokens=tokens,
            token_logprobs=(per_token,) * len(tokens),
            prompt_token_count=len(prompt.split()),
            truncated=truncated,
        )

    # -- verifier emulation --------------------------------------------------

    def _classify(self, prompt: str) -> str | None:
        if _GENERATE_HEADER in prompt:
            return "generate"
        if _JUDGE_HEADER in prompt:
            return "judge"
        return None

    def _answer_verifier_prompt(self, prompt: str, kind: str, max_tokens: int) -> GenerationResult:
        tail = prompt[prompt.rfind("Question:") :]
        qid = self._question_id(tail)
        gold = self.world.gold_label(qid) if qid is not None else None
        candidates = [m.strip() for m in _ANSWER_LINE.findall(tail)]
        rng = np.random.default_rng(derive_seed(self.world.seed, "verifier", prompt))
        accurate = rng.random() < self.world.verifier_accuracy

        def matches_gold(ans: str) -> bool:
            if gold is None:
                return False
            got, want = normalize_answer(ans), normalize_answer(gold)
            return got is not None and want is not None and got.matches(want)

        if not candidates:
            reply = "none"
        elif kind == "generate":
            if accurate and any(matches_gold(c) for c in candidates):
                verdict = gold
            elif accurate and gold is not None and rng.random() < self.world.solve_rate:
                verdict = gold  # fresh solve, unprompted by any candidate
            elif accurate:
                verdict = _majority(candidates)
            else:
                verdict = candidates[int(rng.integers(len(candidates)))]
            reply = f"The candidates were compared against the region structure. Answer: {verdict}"
        elif len(candidates) == 1:
            truth = 1 if matches_gold(candidates[0]) else 0
            reply = str(truth if accurate else 1 - truth)
        else:
            if accurate:
                marked = [i for i, c in enumerate(candidates) if matches_gold(c)]
            else:
                chosen = candidates[int(rng.integers(len(candidates)))]
                marked = [i for i, c in enumerate(candidates) if c == chosen]
            reply = ", ".join(str(i) for i in marked) if marked else "none"

        tokens = _tokenize(reply)[:max_tokens]
        return GenerationResult(
            text="".join(tokens),
            tokens=tokens,
            token_logprobs=(-0.05,) * len(tokens),
            prompt_token_count=len(prompt.split()),
            truncated=len(_tokenize(reply)) > max_tokens,
        )


def _majority(items: list[str]) -> str:
    counts: dict[str, int] = {}
    for item in items:
        counts[item] = counts.get(item, 0) + 1
    best = max(counts.values())
    for item in items:
        if counts[item] == best:
            return item
    raise AssertionError("unreachable")
