"""Command-line entry point.

Subcommands: ``run`` (an experiment), ``baseline-sc`` (temperature-sampling
baseline), ``calibrate-sigma`` (pilot sweep of the perturbation scale),
``metrics`` (recompute a report from run logs), and ``make-dataset``
(materialize a synthetic dataset).

A JSON config file may mirror any flag (keys named like the flags, dashes or
underscores); explicit flags override the file. The endpoint auth token is
read from the EMBO_AUTH_TOKEN environment variable.

Exit codes: 0 success, 1 validation error, 2 transport error, 3 internal.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .backends import HttpBackend, SyntheticBackend, SyntheticWorld
from .errors import ContractViolation, DatasetValidationError, EmboError, TransportError
from .harness import compute_metrics, load_dataset, read_records, run_experiment
from .optimizer import OptimizerConfig

AUTH_TOKEN_ENV = "EMBO_AUTH_TOKEN"

SIGMA_SWEEP = (0.1, 0.3, 1.0, 3.0)

# flag/config-key -> OptimizerConfig field
_CONFIG_FIELDS = {
    "k": "samples_per_iteration",
    "max_iters": "max_iterations",
    "epsilon": "epsilon",
    "d": "latent_dim",
    "sigma": "sigma",
    "delta": "delta",
    "lambda_": "noise",
    "pool_size": "pool_size",
    "acquisition": "acquisition",
    "ucb_beta": "ucb_beta",
    "placement": "placement",
    "inject_count": "inject_count",
    "verifier": "verifier",
    "coherence": "coherence_mode",
    "max_tokens": "max_tokens",
    "seed": "seed",
}


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="JSONL dataset path")
    parser.add_argument("--backend", choices=("http", "synthetic"), default="synthetic")
    parser.add_argument("--endpoint", help="HTTP backend base URL")
    parser.add_argument("--embed-dim", type=int, help="embedding dimension D (HTTP backend)")
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--acquisition", choices=("ei", "adaptive-ei", "pi", "ucb"))
    parser.add_argument("--ucb-beta", type=float, dest="ucb_beta")
    parser.add_argument("--d", type=int)
    parser.add_argument("--sigma", type=float)
    parser.add_argument("--k", type=int)
    parser.add_argument("--max-iters", type=int, dest="max_iters")
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--delta", type=float)
    parser.add_argument("--lambda", type=float, dest="lambda_")
    parser.add_argument("--pool-size", type=int, dest="pool_size")
    parser.add_argument("--placement", choices=("first", "middle", "last"))
    parser.add_argument("--inject-count", type=int, dest="inject_count")
    parser.add_argument(
        "--verifier",
        choices=("single-judge", "multi-judge", "single-generate", "multi-generate"),
    )
    parser.add_argument("--coherence", choices=("paper", "hierarchical"))
    parser.add_argument("--max-tokens", type=int, dest="max_tokens")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--seeds", type=int, default=5, help="number of repeated runs")
    parser.add_argument("--parallelism", type=int, default=1)
    parser.add_argument("--out", help="output directory for logs and reports")
    parser.add_argument("--dataset-name", default=None)
    _add_world_flags(parser)


def _add_world_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--world-seed", type=int, default=0)
    parser.add_argument("--world-dim", type=int, default=64)
    parser.add_argument("--world-regions", type=int, default=8)
    parser.add_argument("--world-accuracy", type=float, default=0.9)
    parser.add_argument("--world-sharpness", type=float, default=0.1)
    parser.add_argument("--world-scale", type=float, default=8.0)
    parser.add_argument("--world-anchor-pull", type=float, default=0.25)
    parser.add_argument("--world-gold-pull", type=float, default=0.0)
    parser.add_argument("--world-jitter", type=float, default=0.5)
    parser.add_argument("--world-concentration", type=float, default=0.25)
    parser.add_argument("--world-solve-rate", type=float, default=0.3)


def _world_from_args(args: argparse.Namespace) -> SyntheticWorld:
    return SyntheticWorld(
        embed_dim=args.world_dim,
        num_regions=args.world_regions,
        sharpness=args.world_sharpness,
        verifier_accuracy=args.world_accuracy,
        seed=args.world_seed,
        centroid_scale=args.world_scale,
        anchor_pull=args.world_anchor_pull,
        gold_pull=args.world_gold_pull,
        anchor_jitter=args.world_jitter,
        direction_concentration=args.world_concentration,
        solve_rate=args.world_solve_rate,
    )


def _build_config(args: argparse.Namespace) -> OptimizerConfig:
    values = {f.name: f.default for f in dataclasses.fields(OptimizerConfig)}
    if getattr(args, "config", None):
        file_values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        for key, value in file_values.items():
            key = key.replace("-", "_")
            if key == "lambda":
                key = "lambda_"
            if key in _CONFIG_FIELDS:
                values[_CONFIG_FIELDS[key]] = value
            elif key in values:
                values[key] = value
            else:
                raise DatasetValidationError(f"unknown config key {key!r} in {args.config}")
    for flag, field_name in _CONFIG_FIELDS.items():
        flag_value = getattr(args, flag, None)
        if flag_value is not None:
            values[field_name] = flag_value
    return OptimizerConfig(**values)


def _build_backend(args: argparse.Namespace):
    if args.backend == "http":
        if not args.endpoint:
            raise DatasetValidationError("--endpoint is required with --backend http")
        if not args.embed_dim:
            raise DatasetValidationError("--embed-dim is required with --backend http")
        return HttpBackend(
            args.endpoint, args.embed_dim, auth_token=os.environ.get(AUTH_TOKEN_ENV)
        )
    return SyntheticBackend(_world_from_args(args))


def _print_report(report) -> None:
    print(f"accuracy  {report.accuracy:.4f} +/- {report.accuracy_std:.4f}")
    print(f"coverage  {report.coverage:.4f} +/- {report.coverage_std:.4f}")
    print(f"candidate coverage  {report.candidate_coverage:.4f}")
    if report.iteration_histogram:
        hist = ", ".join(
            f"{k}: {v:.3f}" for k, v in sorted(report.iteration_histogram.items())
        )
        print(f"terminated at iteration  {hist}")
    print(f"tokens  prompt {report.prompt_tokens}  output {report.output_tokens}")
    print(f"wall time  {report.wall_time_s:.1f}s")
    if report.failed_ids:
        print(f"failed ids  {', '.join(report.failed_ids)}")


def _cmd_run(args: argparse.Namespace, method: str = "bo") -> int:
    dataset = load_dataset(args.dataset)
    config = _build_config(args)
    backend = _build_backend(args)
    report = run_experiment(
        dataset,
        config,
        backend,
        seeds=args.seeds,
        out_dir=args.out,
        parallelism=args.parallelism,
        method=method,
        dataset_name=args.dataset_name or Path(args.dataset).stem,
        tau=getattr(args, "tau", 0.8),
    )
    _print_report(report)
    return 0


def _cmd_calibrate_sigma(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)[: args.limit]
    if not dataset:
        raise DatasetValidationError("calibration needs at least one question")
    backend = _build_backend(args)
    results = []
    for sigma in SIGMA_SWEEP:
        args.sigma = sigma
        config = _build_config(args)
        report = run_experiment(dataset, config, backend, seeds=args.seeds, method="bo")
        results.append({"sigma": sigma, "accuracy": report.accuracy, "coverage": report.coverage})
        print(f"sigma {sigma:<4}  accuracy {report.accuracy:.4f}  coverage {report.coverage:.4f}")
    best = max(results, key=lambda r: (r["accuracy"], r["coverage"]))
    print(f"recommended sigma: {best['sigma']}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(results, indent=2) + "\n", encoding="utf-8")
    return 0


def _cmd_metrics(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    records = []
    for path in sorted(Path(args.runs).glob("runs_seed*.jsonl")):
        records.extend(read_records(path))
    if not records:
        raise DatasetValidationError(f"no run logs found under {args.runs}")
    report = compute_metrics(records, dataset)
    _print_report(report)
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return 0


def _cmd_make_dataset(args: argparse.Namespace) -> int:
    world = _world_from_args(args)
    rows = world.dataset_rows(args.count)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="\n") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"wrote {len(rows)} questions to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embo")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the search over a dataset")
    _add_run_flags(run)

    sc = sub.add_parser("baseline-sc", help="temperature-sampling majority-vote baseline")
    _add_run_flags(sc)
    sc.add_argument("--tau", type=float, default=0.8)

    cal = sub.add_parser("calibrate-sigma", help="pilot sweep of the perturbation scale")
    _add_run_flags(cal)
    cal.add_argument("--limit", type=int, default=8)

    met = sub.add_parser("metrics", help="recompute metrics from run logs")
    met.add_argument("--runs", required=True, help="directory containing runs_seed*.jsonl")
    met.add_argument("--dataset", required=True)
    met.add_argument("--out")

    mk = sub.add_parser("make-dataset", help="write a synthetic JSONL dataset")
    mk.add_argument("--count", type=int, default=200)
    mk.add_argument("--out", required=True)
    _add_world_flags(mk)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args, method="bo")
        if args.command == "baseline-sc":
            return _cmd_run(args, method="sc")
        if args.command == "calibrate-sigma":
            return _cmd_calibrate_sigma(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        if args.command == "make-dataset":
            return _cmd_make_dataset(args)
        raise AssertionError(f"unhandled command {args.command}")
    except (DatasetValidationError, ContractViolation, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return 2
    except EmboError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
