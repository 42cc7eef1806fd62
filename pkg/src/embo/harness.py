"""Experiment orchestration: dataset ingestion, runs, metrics, persistence.

Run logs are JSONL, one seed per file, written in dataset order with sorted
keys so identical configurations produce byte-identical files. Wall time is
reported only in the metrics, never in the logs.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.stats import binomtest

from .backends.base import GenerationBackend
from .errors import DatasetValidationError
from .optimizer import (
    OptimizerConfig,
    Question,
    RunRecord,
    optimize,
    perturbation_baseline,
    record_from_dict,
    record_to_dict,
    sc_baseline,
)
from .scoring import NormalizedAnswer, majority_answer, normalize_answer, render_template
from .seeding import derive_seed

EXEMPLAR_DELIMITER = "\n\n"

# Plot-data CSV schema; documented in the README and relied on by scripts.
PLOT_CSV_COLUMNS = ("dataset", "seed", "d", "k", "metric", "value")


@dataclass(frozen=True)
class DatasetItem:
    """One benchmark question with its gold answer and optional few-shot
    exemplars (question, reasoning, answer)."""

    id: str
    question: str
    gold_answer: str
    exemplars: tuple[tuple[str, str, str], ...] = ()

    @property
    def gold(self) -> NormalizedAnswer:
        normalized = normalize_answer(self.gold_answer)
        if normalized is None:
            raise DatasetValidationError(f"gold answer {self.gold_answer!r} does not normalize")
        return normalized


def load_dataset(path: str | Path) -> list[DatasetItem]:
    """Read a JSONL dataset; malformed lines are reported with line numbers."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc

    items: list[DatasetItem] = []
    problems: list[str] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            problems.append(f"line {lineno}: invalid JSON ({exc})")
            continue
        missing = [key for key in ("id", "question", "gold_answer") if key not in payload]
        if missing:
            problems.append(f"line {lineno}: missing field(s) {', '.join(missing)}")
            continue
        item_id = str(payload["id"])
        if item_id in seen_ids:
            problems.append(f"line {lineno}: duplicate id {item_id!r}")
            continue
        if normalize_answer(str(payload["gold_answer"])) is None:
            problems.append(f"line {lineno}: gold answer for id {item_id!r} does not normalize")
            continue
        exemplars = tuple(
            (str(e["question"]), str(e["reasoning"]), str(e["answer"]))
            for e in payload.get("exemplars", [])
        )
        seen_ids.add(item_id)
        items.append(
            DatasetItem(
                id=item_id,
                question=str(payload["question"]),
                gold_answer=str(payload["gold_answer"]),
                exemplars=exemplars,
            )
        )
    if problems:
        raise DatasetValidationError("; ".join(problems))
    if not items:
        warnings.warn(f"dataset {path} is empty", stacklevel=2)
    return items


def build_prompt(item: DatasetItem) -> str:
    """Assemble the generation prompt, with exemplars in dataset order."""
    blocks = [
        f"Question:\n{q}\n\nAnalysis:\n{r}\n\nAnswer:\n{a}" for q, r, a in item.exemplars
    ]
    exemplars = EXEMPLAR_DELIMITER.join(blocks) + EXEMPLAR_DELIMITER if blocks else ""
    return render_template("generation.txt", exemplars=exemplars, question=item.question)


def question_from_item(item: DatasetItem) -> Question:
    return Question(id=item.id, text=item.question, prompt=build_prompt(item))


def majority_vote(answers: Sequence[NormalizedAnswer | None]) -> NormalizedAnswer | None:
    """Most frequent normalized answer; ties go to the earliest first seen."""
    return majority_answer(answers)


def sign_test_pvalue(wins: int, losses: int) -> float:
    """One-sided paired sign test: P(successes >= wins | fair coin)."""
    total = wins + losses
    if total == 0:
        return 1.0
    return float(binomtest(wins, total, 0.5, alternative="greater").pvalue)


@dataclass
class MetricsReport:
    accuracy: float
    accuracy_std: float
    coverage: float
    coverage_std: float
    candidate_coverage: float  # coverage counting only injected candidates, not verifier outputs
    iteration_histogram: dict[int, float]
    prompt_tokens: int
    output_tokens: int
    wall_time_s: float
    per_seed: list[dict] = field(default_factory=list)
    failed_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "accuracy_std": self.accuracy_std,
            "coverage": self.coverage,
            "coverage_std": self.coverage_std,
            "candidate_coverage": self.candidate_coverage,
            "iteration_histogram": {str(k): v for k, v in sorted(self.iteration_histogram.items())},
            "prompt_tokens": self.prompt_tokens,
            "output_tokens": self.output_tokens,
            "wall_time_s": self.wall_time_s,
            "per_seed": self.per_seed,
            "failed_ids": self.failed_ids,
        }


def record_outcome(record: RunRecord, gold: NormalizedAnswer) -> tuple[bool, bool, bool]:
    """(accurate, covered, candidate_covered) for one record against gold."""
    if record.failed and not record.iterations:
        return False, False, False
    candidate_covered = any(
        c.answer is not None and c.answer.matches(gold) for c in record.candidates
    )
    refined_covered = any(
        it.verifier is not None
        and it.verifier.refined_answer is not None
        and it.verifier.refined_answer.matches(gold)
        for it in record.iterations
    )
    covered = candidate_covered or refined_covered
    accurate = (
        not record.failed
        and record.final_answer is not None
        and record.final_answer.matches(gold)
    )
    return accurate, covered, candidate_covered


def compute_metrics(
    records: Sequence[RunRecord], dataset: Sequence[DatasetItem], wall_time_s: float = 0.0
) -> MetricsReport:
    """Aggregate accuracy/coverage (mean and std across seeds) and the
    termination-iteration histogram."""
    gold_by_id = {item.id: item.gold for item in dataset}
    unknown = sorted({r.question_id for r in records} - set(gold_by_id))
    if unknown:
        raise DatasetValidationError(f"records reference unknown ids: {', '.join(unknown)}")

    seeds = sorted({r.seed for r in records})
    per_seed = []
    for seed in seeds:
        group = [r for r in records if r.seed == seed]
        outcomes = [record_outcome(r, gold_by_id[r.question_id]) for r in group]
        n = len(group)
        per_seed.append(
            {
                "seed": seed,
                "questions": n,
                "accuracy": sum(a for a, _, _ in outcomes) / n,
                "coverage": sum(c for _, c, _ in outcomes) / n,
                "candidate_coverage": sum(s for _, _, s in outcomes) / n,
            }
        )

    completed = [r for r in records if not r.failed]
    histogram: dict[int, float] = {}
    for r in completed:
        bucket = len(r.iterations)
        histogram[bucket] = histogram.get(bucket, 0) + 1
    histogram = {k: v / len(completed) for k, v in histogram.items()} if completed else {}

    accuracies = np.array([s["accuracy"] for s in per_seed])
    coverages = np.array([s["coverage"] for s in per_seed])
    return MetricsReport(
        accuracy=float(accuracies.mean()),
        accuracy_std=float(accuracies.std()),
        coverage=float(coverages.mean()),
        coverage_std=float(coverages.std()),
        candidate_coverage=float(np.mean([s["candidate_coverage"] for s in per_seed])),
        iteration_histogram=histogram,
        prompt_tokens=sum(r.prompt_tokens for r in records),
        output_tokens=sum(r.output_tokens for r in records),
        wall_time_s=wall_time_s,
        per_seed=per_seed,
        failed_ids=sorted({r.question_id for r in records if r.failed}),
    )


def write_records(records: Sequence[RunRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(record_to_dict(record), sort_keys=True, separators=(",", ":")))
            handle.write("\n")


def read_records(path: str | Path) -> list[RunRecord]:
    out = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                out.append(record_from_dict(json.loads(line)))
    return out


def write_plot_csv(
    path: str | Path,
    dataset_name: str,
    config: OptimizerConfig,
    per_seed: Sequence[dict],
    histogram: dict[int, float],
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(PLOT_CSV_COLUMNS)
        for row in per_seed:
            for metric in ("accuracy", "coverage", "candidate_coverage"):
                writer.writerow(
                    [dataset_name, row["seed"], config.latent_dim,
                     config.samples_per_iteration, metric, row[metric]]
                )
        for bucket in sorted(histogram):
            writer.writerow(
                [dataset_name, "all", config.latent_dim, config.samples_per_iteration,
                 f"terminated_iteration_{bucket}", histogram[bucket]]
            )


_RUNNERS: dict[str, Callable[..., RunRecord]] = {
    "bo": optimize,
    "perturb": perturbation_baseline,
    "sc": sc_baseline,
}


def run_experiment(
    dataset: Sequence[DatasetItem],
    config: OptimizerConfig,
    backend: GenerationBackend,
    seeds: int = 5,
    out_dir: str | Path | None = None,
    parallelism: int = 1,
    method: str = "bo",
    dataset_name: str = "dataset",
    tau: float = 0.8,
) -> MetricsReport:
    """Run one method over the dataset for several seeds and persist results.

    Questions fan out over a thread pool up to ``parallelism``; records are
    collected in dataset order so logs stay deterministic.
    """
    if method not in _RUNNERS:
        raise DatasetValidationError(f"unknown method {method!r}")
    runner = _RUNNERS[method]
    started = time.monotonic()
    all_records: list[RunRecord] = []
    for seed_index in range(seeds):
        seed_config = replace(config, seed=derive_seed(config.seed, "seed", seed_index))

        def run_one(item: DatasetItem) -> RunRecord:
            kwargs = {"tau": tau} if method == "sc" else {}
            record = runner(question_from_item(item), seed_config, backend, **kwargs)
            record.seed = seed_index
            return record

        if parallelism > 1:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                records = list(pool.map(run_one, dataset))
        else:
            records = [run_one(item) for item in dataset]
        if out_dir is not None:
            write_records(records, Path(out_dir) / f"runs_seed{seed_index}.jsonl")
        all_records.extend(records)

    report = compute_metrics(all_records, dataset, wall_time_s=time.monotonic() - started)
    if out_dir is not None:
        out = Path(out_dir)
        (out / "metrics.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        write_plot_csv(out / "plotdata.csv", dataset_name, config, report.per_seed,
                       report.iteration_histogram)
    return report
