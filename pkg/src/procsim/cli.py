"""Command-line pipeline: discover, simulate, evaluate, or run it all.

`pipeline` reproduces the full evaluation protocol: temporal 80/20 split,
model discovery on the train part, automatic selection of the architecture
and the extraneous-delay switch on an inner validation slice, repeated
evaluation-mode simulation runs, and metric reports against the test part.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .discovery import DiscoveryOptions, discover_mas
from .event_log import (
    DEFAULT_COLUMNS,
    EventLog,
    parse_log,
    parse_timestamp,
    temporal_split,
    write_log,
)
from .metrics import InteractionMatrix, MetricsReport, compute_report, ctd, interaction_matrix
from .model_io import read_model, write_model
from .simulation import SimulationConfig, simulate, simulate_with_warnings

__all__ = ["PipelineConfig", "auto_select_config", "run_pipeline", "main"]

# tried in this order; ties on the selection score keep the earlier entry
CANDIDATE_CONFIGS = (
    ("orchestrated", False),
    ("orchestrated", True),
    ("autonomous", False),
    ("autonomous", True),
)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    log_path: str
    out_dir: str
    column_map: Optional[dict[str, str]] = None
    train_fraction: float = 0.8
    num_runs: int = 10
    seed: int = 42
    architecture: Optional[str] = None  # None = auto-select
    use_extraneous_delays: Optional[bool] = None  # None = auto-select
    assignment: str = "iterative"
    ngram_n: int = 2
    discovery: DiscoveryOptions = DiscoveryOptions()

    def __post_init__(self) -> None:
        if self.num_runs < 1:
            raise ValueError("num_runs must be at least 1")


def auto_select_config(
    train: EventLog,
    seed: int,
    assignment: str = "iterative",
    architectures: Optional[tuple[str, ...]] = None,
    delay_options: Optional[tuple[bool, ...]] = None,
    discovery: DiscoveryOptions = DiscoveryOptions(),
) -> tuple[str, bool]:
    """Pick (architecture, use_extraneous_delays) on an inner validation slice.

    The train part is split 80/20 again; a model mined on the inner-train part
    simulates the inner-validation case count once per candidate configuration,
    and the configuration whose simulation is closest to the validation slice
    in cycle-time distribution wins.
    """
    if train.n_cases < 5:
        raise ValueError("configuration auto-selection needs at least 5 training cases")
    inner_train, inner_val = temporal_split(train, 0.8)
    if inner_train.n_cases == 0 or inner_val.n_cases == 0:
        raise ValueError("inner split produced an empty slice")

    inner_mas = discover_mas(inner_train, discovery)
    start = min(t.first_start for t in inner_val.traces)

    best: Optional[tuple[float, str, bool]] = None
    for architecture, delays in CANDIDATE_CONFIGS:
        if architectures is not None and architecture not in architectures:
            continue
        if delay_options is not None and delays not in delay_options:
            continue
        config = SimulationConfig(
            n_cases=inner_val.n_cases,
            seed=seed,
            start_time=start,
            architecture=architecture,
            assignment=assignment if architecture == "autonomous" else "iterative",
            use_extraneous_delays=delays,
            evaluation_mode=True,
        )
        score = ctd(inner_val, simulate(inner_mas, config))
        if best is None or score < best[0]:
            best = (score, architecture, delays)
    if best is None:
        raise ValueError("no candidate configuration matches the given overrides")
    return best[1], best[2]


def _write_interaction(matrix: InteractionMatrix, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("," + ",".join(matrix.labels) + "\n")
        for label, row in zip(matrix.labels, matrix.counts):
            fh.write(label + "," + ",".join(str(c) for c in row) + "\n")


def _write_metrics(path: Path, rows: list[tuple[str, MetricsReport]]) -> None:
    with open(path, "w") as fh:
        fh.write("run," + ",".join(MetricsReport.FIELDS) + "\n")
        for name, report in rows:
            fh.write(name + "," + ",".join(repr(v) for v in report.as_tuple()) + "\n")


def run_pipeline(config: PipelineConfig) -> MetricsReport:
    """Execute the end-to-end protocol and leave all artifacts in out_dir.

    Artifacts: model.json, sim_run_<k>.csv per run, metrics.csv (per-run rows
    plus a mean row), interaction matrices for the test log and the first
    simulated run, and run_metadata.json.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wall_start = time.perf_counter()

    try:
        log = parse_log(config.log_path, config.column_map)
    except Exception as exc:
        raise StageError("parse", exc) from exc

    try:
        train, test = temporal_split(log, config.train_fraction)
        if train.n_cases == 0 or test.n_cases == 0:
            raise ValueError("temporal split produced an empty train or test part")
    except StageError:
        raise
    except Exception as exc:
        raise StageError("split", exc) from exc

    try:
        mas = discover_mas(train, config.discovery)
    except Exception as exc:
        raise StageError("discover", exc) from exc

    auto_selected = config.architecture is None or config.use_extraneous_delays is None
    try:
        if auto_selected:
            architectures = None if config.architecture is None else (config.architecture,)
            delay_options = (
                None if config.use_extraneous_delays is None else (config.use_extraneous_delays,)
            )
            architecture, delays = auto_select_config(
                train,
                config.seed,
                assignment=config.assignment,
                architectures=architectures,
                delay_options=delay_options,
                discovery=config.discovery,
            )
        else:
            architecture, delays = config.architecture, config.use_extraneous_delays
    except Exception as exc:
        raise StageError("select", exc) from exc

    assignment = config.assignment if architecture == "autonomous" else "iterative"
    mas = replace(mas, architecture=architecture, assignment=assignment)
    write_model(mas, out / "model.json", use_extraneous_delays=delays)

    start = min(t.first_start for t in test.traces)
    reports: list[tuple[str, MetricsReport]] = []
    warnings: dict[str, list[str]] = {}
    sim_logs = []
    try:
        for k in range(config.num_runs):
            sim_config = SimulationConfig(
                n_cases=test.n_cases,
                seed=config.seed + k,
                start_time=start,
                architecture=architecture,
                assignment=assignment,
                use_extraneous_delays=delays,
                evaluation_mode=True,
            )
            sim_log, warns = simulate_with_warnings(mas, sim_config)
            sim_logs.append(sim_log)
            write_log(sim_log, out / f"sim_run_{k:02d}.csv")
            if warns:
                warnings[f"run_{k}"] = warns
            reports.append((str(k), compute_report(test, sim_log, config.ngram_n)))
    except Exception as exc:
        raise StageError("simulate", exc) from exc

    try:
        mean = MetricsReport.mean(r for _, r in reports)
        _write_metrics(out / "metrics.csv", reports + [("mean", mean)])
        _write_interaction(interaction_matrix(test), out / "interaction_test.csv")
        _write_interaction(interaction_matrix(sim_logs[0]), out / "interaction_sim.csv")
    except Exception as exc:
        raise StageError("evaluate", exc) from exc

    metadata = {
        "log": str(config.log_path),
        "train_cases": train.n_cases,
        "test_cases": test.n_cases,
        "num_runs": config.num_runs,
        "seed": config.seed,
        "architecture": architecture,
        "assignment": assignment,
        "use_extraneous_delays": delays,
        "auto_selected": auto_selected,
        "warnings": warnings,
        "wall_seconds": time.perf_counter() - wall_start,
    }
    with open(out / "run_metadata.json", "w") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return mean


# -- argument parsing --------------------------------------------------------


def _add_column_args(parser: argparse.ArgumentParser) -> None:
    for role, default in DEFAULT_COLUMNS.items():
        parser.add_argument(
            f"--{role}-col", default=default, metavar="NAME", help=f"{role} column (default: {default})"
        )


def _column_map(args: argparse.Namespace) -> dict[str, str]:
    return {role: getattr(args, f"{role}_col") for role in DEFAULT_COLUMNS}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="procsim",
        description="Mine a multi-agent simulation model from an event log, "
        "simulate it, and score the simulated logs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_discover = sub.add_parser("discover", help="mine a model from a CSV event log")
    p_discover.add_argument("--log", required=True)
    p_discover.add_argument("--out", required=True, help="model JSON output path")
    _add_column_args(p_discover)

    p_simulate = sub.add_parser("simulate", help="generate a log from a model file")
    p_simulate.add_argument("--model", required=True)
    p_simulate.add_argument("--n", type=int, required=True, help="number of cases to complete")
    p_simulate.add_argument("--seed", type=int, default=42)
    p_simulate.add_argument("--out", required=True, help="simulated CSV output path")
    p_simulate.add_argument("--architecture", choices=["orchestrated", "autonomous"])
    p_simulate.add_argument("--assignment", choices=["iterative", "direct"])
    p_simulate.add_argument("--delays", choices=["on", "off"])
    p_simulate.add_argument(
        "--evaluation", action="store_true", help="spawn exactly n arrivals instead of a steady stream"
    )
    p_simulate.add_argument("--start-time", metavar="ISO", help="simulation start (default: from model)")

    p_evaluate = sub.add_parser("evaluate", help="compute the five distances between two logs")
    p_evaluate.add_argument("--real", required=True)
    p_evaluate.add_argument("--sim", required=True)
    p_evaluate.add_argument("--out", required=True, help="report CSV output path")
    p_evaluate.add_argument("--ngram", type=int, default=2)
    _add_column_args(p_evaluate)

    p_pipeline = sub.add_parser("pipeline", help="split, discover, auto-select, simulate, evaluate")
    p_pipeline.add_argument("--log", required=True)
    p_pipeline.add_argument("--out", required=True, help="output directory")
    p_pipeline.add_argument("--runs", type=int, default=10)
    p_pipeline.add_argument("--seed", type=int, default=42)
    p_pipeline.add_argument("--train-fraction", type=float, default=0.8)
    p_pipeline.add_argument("--architecture", choices=["orchestrated", "autonomous"])
    p_pipeline.add_argument("--assignment", choices=["iterative", "direct"], default="iterative")
    p_pipeline.add_argument("--delays", choices=["on", "off"])
    _add_column_args(p_pipeline)

    return parser


def _cmd_discover(args: argparse.Namespace) -> int:
    try:
        log = parse_log(args.log, _column_map(args))
    except Exception as exc:
        raise StageError("parse", exc) from exc
    try:
        mas = discover_mas(log)
    except Exception as exc:
        raise StageError("discover", exc) from exc
    write_model(mas, args.out)
    dummies = sum(1 for a in mas.agents if a.is_dummy)
    print(
        f"discovered {len(mas.agents)} agents ({dummies} stand-ins) over "
        f"{len(mas.activities)} activities from {log.n_cases} cases -> {args.out}"
    )
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    try:
        mas, meta = read_model(args.model)
    except Exception as exc:
        raise StageError("load-model", exc) from exc
    architecture = args.architecture or mas.architecture
    assignment = args.assignment or (mas.assignment if architecture == "autonomous" else "iterative")
    delays = meta["use_extraneous_delays"] if args.delays is None else args.delays == "on"
    start = mas.default_start if args.start_time is None else parse_timestamp(args.start_time)
    config = SimulationConfig(
        n_cases=args.n,
        seed=args.seed,
        start_time=start,
        architecture=architecture,
        assignment=assignment,
        use_extraneous_delays=delays,
        evaluation_mode=args.evaluation,
    )
    wall_start = time.perf_counter()
    try:
        sim_log, warns = simulate_with_warnings(mas, config)
    except Exception as exc:
        raise StageError("simulate", exc) from exc
    write_log(sim_log, args.out)
    sidecar = {
        "seed": args.seed,
        "architecture": architecture,
        "assignment": assignment,
        "use_extraneous_delays": delays,
        "evaluation_mode": args.evaluation,
        "n_cases": args.n,
        "warnings": warns,
        "wall_seconds": time.perf_counter() - wall_start,
    }
    with open(str(args.out) + ".meta.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"simulated {sim_log.n_cases} cases ({sim_log.n_events} events) -> {args.out}")
    for warning in warns:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    columns = _column_map(args)
    try:
        real = parse_log(args.real, columns)
        sim = parse_log(args.sim, columns)
    except Exception as exc:
        raise StageError("parse", exc) from exc
    try:
        report = compute_report(real, sim, args.ngram)
    except Exception as exc:
        raise StageError("evaluate", exc) from exc
    with open(args.out, "w") as fh:
        fh.write("real,sim," + ",".join(MetricsReport.FIELDS) + "\n")
        fh.write(
            Path(args.real).name
            + ","
            + Path(args.sim).name
            + ","
            + ",".join(repr(v) for v in report.as_tuple())
            + "\n"
        )
    for name, value in zip(MetricsReport.FIELDS, report.as_tuple()):
        unit = "" if name == "ngd" else " h"
        print(f"{name.upper()}: {value:.4f}{unit}")
    return 0


def _cmd_pipeline(args: argparse.Namespace) -> int:
    delays = None if args.delays is None else args.delays == "on"
    config = PipelineConfig(
        log_path=args.log,
        out_dir=args.out,
        column_map=_column_map(args),
        train_fraction=args.train_fraction,
        num_runs=args.runs,
        seed=args.seed,
        architecture=args.architecture,
        use_extraneous_delays=delays,
        assignment=args.assignment,
    )
    mean = run_pipeline(config)
    print(f"pipeline finished: {args.runs} runs -> {args.out}")
    for name, value in zip(MetricsReport.FIELDS, mean.as_tuple()):
        unit = "" if name == "ngd" else " h"
        print(f"mean {name.upper()}: {value:.4f}{unit}")
    return 0


_COMMANDS = {
    "discover": _cmd_discover,
    "simulate": _cmd_simulate,
    "evaluate": _cmd_evaluate,
    "pipeline": _cmd_pipeline,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # anything a stage wrapper did not catch
        print(f"error [{args.command}] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
