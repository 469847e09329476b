"""Command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 data or file
error, 3 numerical failure.  Diagnostics go to stderr; results are
written to files, never to stdout.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ._version import __version__
from .config import AppConfig, config_from_dict, load_config
from .data import DatasetSpec, Split, gen_synthetic, make_dataset, save_csv
from .errors import (
    BallotError,
    ConfigurationError,
    DataError,
    NumericalFailure,
    PersistenceError,
    UsageError,
)
from .masks import identity_mask
from .metrics import evaluate
from .model import Checkpoint, load_checkpoint, save_checkpoint
from .pipeline import METHODS, run_baseline, train_dense
from .reporting import (
    eval_report_dict,
    report_payload,
    run_experiment,
    write_report,
)


class _UsageExit(Exception):
    def __init__(self, parser: argparse.ArgumentParser, message: str):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageExit(self, message)


def _load(config_path) -> AppConfig:
    if config_path is None:
        return config_from_dict({})
    return load_config(config_path)


def _write_checkpoints(out_dir: Path, artifacts, final=None) -> None:
    ck_dir = out_dir / "checkpoints"
    ck_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(artifacts.theta0, ck_dir / "theta0.ckpt")
    save_checkpoint(artifacts.theta_k, ck_dir / "theta_k.ckpt")
    save_checkpoint(artifacts.theta_e, ck_dir / "theta_e.ckpt")
    if final is not None:
        save_checkpoint(final, ck_dir / "final.ckpt")


def _cmd_train(args) -> int:
    app = _load(args.config)
    data = make_dataset(app.dataset)
    artifacts = train_dense(app.train, data)
    out = Path(args.out)
    write_report(
        out / "report.json",
        report_payload(app, app.train.seed, artifacts.dense_report, [],
                       artifacts.specs),
    )
    _write_checkpoints(out, artifacts)
    print(f"wrote {out / 'report.json'}")
    return 0


def _cmd_prune(args) -> int:
    app = _load(args.config)
    method = args.method or app.method
    data = make_dataset(app.dataset)
    artifacts = train_dense(app.train, data)
    result = run_baseline(method, app.train, data, artifacts)
    out = Path(args.out)
    write_report(
        out / "report.json",
        report_payload(app, app.train.seed, artifacts.dense_report, [result],
                       artifacts.specs),
    )
    final = Checkpoint(result.params, artifacts.specs,
                       epoch=result.params.epoch_tag, seed=app.train.seed)
    _write_checkpoints(out, artifacts, final=final)
    print(f"wrote {out / 'report.json'}")
    return 0


def _cmd_evaluate(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    if args.data.endswith(".json"):
        app = load_config(args.data)
        data = make_dataset(app.dataset)
        split = data.test
    else:
        spec = DatasetSpec(csv_path=args.data, label_column=args.label_column,
                           split=0.5)
        ds = make_dataset(spec)
        split = Split(
            X=np.concatenate([ds.train.X, ds.test.X]),
            y=np.concatenate([ds.train.y, ds.test.y]),
        )
    if ck.specs[0].d_in != split.X.shape[1]:
        raise ConfigurationError(
            f"checkpoint expects {ck.specs[0].d_in} features, "
            f"data has {split.X.shape[1]}"
        )
    report = evaluate(ck.params, identity_mask(ck.specs), split, ck.specs)
    payload = {
        "version": __version__,
        "checkpoint": str(args.checkpoint),
        "epoch": ck.epoch,
        "seed": ck.seed,
        "report": eval_report_dict(report),
    }
    write_report(args.out, payload)
    print(f"wrote {args.out}")
    return 0


def _cmd_experiment(args) -> int:
    app = _load(args.config)
    csv_path = run_experiment(app, args.seeds, args.out, threads=args.threads)
    print(f"wrote {csv_path}")
    return 0


def _cmd_gen_data(args) -> int:
    app = _load(args.config)
    if app.dataset.synthetic is None:
        raise ConfigurationError(
            "gen-data needs a synthetic data section, not csv_path"
        )
    x, y = gen_synthetic(app.dataset.synthetic)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(x, y, out)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ballot",
                     description="Fairness-aware pruning of small MLPs")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="dense training only")
    p.add_argument("--config", help="JSON config path (defaults apply if omitted)")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("prune", help="train, mask, and retrain with one method")
    p.add_argument("--method", choices=METHODS,
                   help="pruning method (default: prune.method from config)")
    p.add_argument("--config")
    p.add_argument("--out", default="out")
    p.set_defaults(func=_cmd_prune)

    p = sub.add_parser("evaluate", help="report metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True,
                   help="a config JSON (test split is used) or a CSV file")
    p.add_argument("--label-column", default="label")
    p.add_argument("--out", default="evaluation.json")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("experiment", help="dense + all methods over many seeds")
    p.add_argument("--seeds", type=int, default=1,
                   help="number of consecutive seeds, starting at config seed")
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap (default: BALLOT_THREADS or 1)")
    p.add_argument("--config")
    p.add_argument("--out", default="out")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("gen-data", help="write the synthetic dataset as CSV")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_usage(sys.stderr)
            print("ballot: a subcommand is required", file=sys.stderr)
            return 1
        return args.func(args)
    except _UsageExit as exc:
        exc.parser.print_usage(sys.stderr)
        print(f"ballot: {exc}", file=sys.stderr)
        return 1
    except (ConfigurationError, UsageError) as exc:
        print(f"ballot: configuration error: {exc}", file=sys.stderr)
        return 1
    except (DataError, PersistenceError) as exc:
        print(f"ballot: data error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"ballot: numerical failure: {exc}", file=sys.stderr)
        return 3
    except BallotError as exc:
        print(f"ballot: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
