"""Run reports, the multi-seed experiment driver, and the aggregate CSV.

JSON numbers go through Python's shortest round-trip float repr, so a
written report parses back to bit-identical doubles.  Everything except
wall-clock times is a pure function of config, data, and seed.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from ._version import __version__
from .config import AppConfig, effective_dict
from .data import Dataset, make_dataset
from .errors import ConfigurationError, PersistenceError
from .masks import serialize_mask
from .metrics import EvalReport
from .model import LayerSpec
from .pipeline import (
    METHODS,
    PruneResult,
    RunArtifacts,
    run_baseline,
    train_dense,
)

CSV_HEADER = "method,seed,accuracy,precision,recall,cwv,mcd,retention,rounds,wall_time_s"


def eval_report_dict(report: EvalReport) -> dict:
    return {
        "accuracy": report.accuracy,
        "per_class_acc": list(report.per_class_acc),
        "class_counts": list(report.class_counts),
        "macro_precision": report.macro_precision,
        "macro_recall": report.macro_recall,
        "cwv": report.cwv,
        "mcd": report.mcd,
    }


def result_dict(result: PruneResult, specs: list[LayerSpec]) -> dict:
    out = {
        "method": result.method,
        "accuracy": result.report.accuracy,
        "macro_precision": result.report.macro_precision,
        "macro_recall": result.report.macro_recall,
        "cwv": result.report.cwv,
        "mcd": result.report.mcd,
        "retention": result.retention,
        "rounds": result.rounds_used,
        "wall_time_s": result.wall_time_s,
        "per_class_acc": list(result.report.per_class_acc),
        "mask": serialize_mask(result.mask, specs),
    }
    if result.candidates:
        out["rounds_log"] = [
            {
                "round": r,
                "accuracy": rep.accuracy,
                "cwv": rep.cwv,
                "mcd": rep.mcd,
            }
            for r, rep in result.candidates
        ]
    return out


def report_payload(
    app: AppConfig,
    seed: int,
    dense_report: EvalReport,
    results: list[PruneResult],
    specs: list[LayerSpec],
) -> dict:
    return {
        "version": __version__,
        "seed": seed,
        "config": effective_dict(app),
        "dense": eval_report_dict(dense_report),
        "results": [result_dict(r, specs) for r in results],
    }


def write_report(path, payload: dict) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise PersistenceError(f"cannot write report {path}: {exc}") from exc


def load_report(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise PersistenceError(f"cannot read report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise PersistenceError(f"report {path} is not valid JSON: {exc}") from exc


def thread_budget(override: int | None = None) -> int:
    """Worker cap for the experiment grid, from BALLOT_THREADS."""
    if override is not None:
        value = override
    else:
        raw = os.environ.get("BALLOT_THREADS", "1")
        try:
            value = int(raw)
        except ValueError:
            raise ConfigurationError(
                f"BALLOT_THREADS must be a positive integer, got {raw!r}"
            ) from None
    if value < 1:
        raise ConfigurationError(
            f"BALLOT_THREADS must be a positive integer, got {value}"
        )
    return value


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_aggregate_csv(path, rows: list[dict]) -> None:
    ordered = sorted(rows, key=lambda r: (r["method"], r["seed"]))
    lines = [CSV_HEADER]
    for row in ordered:
        lines.append(",".join(_csv_cell(row[k]) for k in CSV_HEADER.split(",")))
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc


def _summary_row(method: str, seed: int, report: EvalReport, retention: float,
                 rounds: int, wall_time_s: float) -> dict:
    return {
        "method": method,
        "seed": seed,
        "accuracy": report.accuracy,
        "precision": report.macro_precision,
        "recall": report.macro_recall,
        "cwv": report.cwv,
        "mcd": report.mcd,
        "retention": retention,
        "rounds": rounds,
        "wall_time_s": wall_time_s,
    }


def _run_seed(app: AppConfig, data: Dataset, seed: int):
    cfg = replace(app.train, seed=seed)
    artifacts = train_dense(cfg, data)
    results = [run_baseline(m, cfg, data, artifacts) for m in METHODS]
    return artifacts, results


def run_experiment(
    app: AppConfig, n_seeds: int, out_dir, threads: int | None = None
) -> Path:
    """Dense plus all four pruners for seeds base..base+n-1.

    Writes one report per (method, seed) run under runs/, the dense
    reports alongside them, and the sorted aggregate CSV.  Runs share
    nothing mutable, so the thread cap only changes the schedule, never
    the bytes written.
    """
    if n_seeds < 1:
        raise ConfigurationError("experiment needs at least one seed")
    workers = thread_budget(threads)
    out_dir = Path(out_dir)
    data = make_dataset(app.dataset)
    seeds = [app.train.seed + i for i in range(n_seeds)]

    if workers == 1:
        outcomes = [_run_seed(app, data, s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda s: _run_seed(app, data, s), seeds))

    rows = []
    for seed, (artifacts, results) in zip(seeds, outcomes):
        app_seed = replace(app, train=replace(app.train, seed=seed))
        write_report(
            out_dir / "runs" / f"dense-seed{seed}" / "report.json",
            report_payload(app_seed, seed, artifacts.dense_report, [], artifacts.specs),
        )
        rows.append(
            _summary_row("dense", seed, artifacts.dense_report, 1.0, 0,
                         artifacts.wall_time_s)
        )
        for result in results:
            write_report(
                out_dir / "runs" / f"{result.method}-seed{seed}" / "report.json",
                report_payload(app_seed, seed, artifacts.dense_report, [result],
                               artifacts.specs),
            )
            rows.append(
                _summary_row(result.method, seed, result.report, result.retention,
                             result.rounds_used, result.wall_time_s)
            )

    csv_path = out_dir / "aggregate.csv"
    write_aggregate_csv(csv_path, rows)
    return csv_path
