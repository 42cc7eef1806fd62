"""Sweep synthetic-world constants and report search-vs-baseline margins.

Used to pick world defaults for the end-to-end check; run from the repo root:

    python3 scripts/tune_world.py [n_questions] [n_seeds]
"""

from __future__ import annotations

import itertools
import sys
import time
from dataclasses import replace

from embo.backends import SyntheticBackend, SyntheticWorld
from embo.harness import DatasetItem, question_from_item, record_outcome, sign_test_pvalue
from embo.optimizer import OptimizerConfig, optimize, perturbation_baseline
from embo.seeding import derive_seed


def evaluate(world: SyntheticWorld, n_questions: int, n_seeds: int) -> dict:
    backend = SyntheticBackend(world)
    config = OptimizerConfig()
    items = [
        DatasetItem(r["id"], r["question"], r["gold_answer"])
        for r in world.dataset_rows(n_questions)
    ]
    counts = {"bo_acc": 0, "bo_cov": 0, "pb_acc": 0, "pb_cov": 0}
    wins = {"acc": [0, 0], "cov": [0, 0]}
    terms: dict[int, int] = {}
    total = 0
    t0 = time.monotonic()
    for seed in range(n_seeds):
        cfg = replace(config, seed=derive_seed(0, "seed", seed))
        for item in items:
            question = question_from_item(item)
            gold = item.gold
            bo = optimize(question, cfg, backend)
            pb = perturbation_baseline(question, cfg, backend)
            bo_acc, bo_cov, _ = record_outcome(bo, gold)
            pb_acc, pb_cov, _ = record_outcome(pb, gold)
            counts["bo_acc"] += bo_acc
            counts["bo_cov"] += bo_cov
            counts["pb_acc"] += pb_acc
            counts["pb_cov"] += pb_cov
            for key, b, p in (("acc", bo_acc, pb_acc), ("cov", bo_cov, pb_cov)):
                if b and not p:
                    wins[key][0] += 1
                elif p and not b:
                    wins[key][1] += 1
            terms[len(bo.iterations)] = terms.get(len(bo.iterations), 0) + 1
            total += 1
    return {
        "bo_acc": counts["bo_acc"] / total,
        "bo_cov": counts["bo_cov"] / total,
        "pb_acc": counts["pb_acc"] / total,
        "pb_cov": counts["pb_cov"] / total,
        "p_acc": sign_test_pvalue(*wins["acc"]),
        "p_cov": sign_test_pvalue(*wins["cov"]),
        "wins": wins,
        "terms": terms,
        "seconds": time.monotonic() - t0,
    }


def main() -> None:
    n_questions = int(sys.argv[1]) if len(sys.argv) > 1 else 120
    n_seeds = int(sys.argv[2]) if len(sys.argv) > 2 else 2

    grid = list(
        itertools.product(
            [0.1],          # sharpness
            [0.25],         # anchor_pull
            [0.0, -0.05, -0.1],  # gold_pull
            [0.0, 0.25, 0.5],    # direction_concentration
        )
    )
    for sharpness, anchor_pull, gold_pull, conc in grid:
        world = SyntheticWorld(
            verifier_accuracy=0.9,
            sharpness=sharpness,
            anchor_pull=anchor_pull,
            gold_pull=gold_pull,
            direction_concentration=conc,
        )
        res = evaluate(world, n_questions, n_seeds)
        print(
            f"alpha={sharpness} pull={anchor_pull} gold={gold_pull} conc={conc} | "
            f"BO acc {res['bo_acc']:.3f} cov {res['bo_cov']:.3f} | "
            f"PB acc {res['pb_acc']:.3f} cov {res['pb_cov']:.3f} | "
            f"p_acc {res['p_acc']:.2e} p_cov {res['p_cov']:.2e} "
            f"wins {res['wins']} terms {res['terms']} ({res['seconds']:.0f}s)"
        )


if __name__ == "__main__":
    main()
