"""JSON run configuration.

Every omitted key falls back to its documented default; every unknown
key is rejected by its dotted path, so typos cannot silently change an
experiment.  An empty object is a complete, valid configuration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .data import DatasetSpec, SyntheticSpec
from .errors import ConfigurationError
from .pipeline import METHODS, TrainConfig

_TOP_KEYS = {"model", "train", "prune", "refine", "data", "seed"}
_MODEL_KEYS = {"hidden"}
_TRAIN_KEYS = {"epochs", "lr0", "batch", "milestones"}
_PRUNE_KEYS = {"omega", "gamma", "eta", "method"}
_REFINE_KEYS = {"rewind_epoch", "epsilon", "delta", "max_rounds"}
_DATA_KEYS = {"csv_path", "label_column", "synthetic", "split", "normalize"}
_SYNTH_KEYS = {"classes", "counts", "dim", "mean_scale", "std", "seed"}

DEFAULT_REWIND = 10


@dataclass(frozen=True)
class AppConfig:
    train: TrainConfig
    dataset: DatasetSpec
    method: str


def _section(raw: dict, name: str, allowed: set) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigurationError(f"'{name}' must be an object")
    for key in value:
        if key not in allowed:
            raise ConfigurationError(f"unknown configuration key '{name}.{key}'")
    return value


def _number(section: dict, key: str, path: str, default, *, integer=False,
            low=None, high=None, low_open=False, high_open=False):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        kind = "an integer" if integer else "a number"
        raise ConfigurationError(f"'{path}' must be {kind}, got {value!r}")
    if integer and int(value) != value:
        raise ConfigurationError(f"'{path}' must be an integer, got {value!r}")
    value = int(value) if integer else float(value)
    if not integer and not math.isfinite(value):
        raise ConfigurationError(f"'{path}' must be finite")
    if low is not None and (value <= low if low_open else value < low):
        op = ">" if low_open else ">="
        raise ConfigurationError(f"'{path}' must be {op} {low}, got {value}")
    if high is not None and (value >= high if high_open else value > high):
        op = "<" if high_open else "<="
        raise ConfigurationError(f"'{path}' must be {op} {high}, got {value}")
    return value


def _int_list(section: dict, key: str, path: str, default: list) -> list:
    value = section.get(key, default)
    if not isinstance(value, list) or not value or any(
        isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in value
    ):
        raise ConfigurationError(f"'{path}' must be a non-empty list of "
                                 f"positive integers, got {value!r}")
    return list(value)


def config_from_dict(raw: dict) -> AppConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("configuration root must be a JSON object")
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigurationError(f"unknown configuration key '{key}'")

    model = _section(raw, "model", _MODEL_KEYS)
    train = _section(raw, "train", _TRAIN_KEYS)
    prune = _section(raw, "prune", _PRUNE_KEYS)
    refine = _section(raw, "refine", _REFINE_KEYS)
    data = _section(raw, "data", _DATA_KEYS)

    hidden = _int_list(model, "hidden", "model.hidden", [64, 64])
    epochs = _number(train, "epochs", "train.epochs", 30, integer=True, low=1)
    lr0 = _number(train, "lr0", "train.lr0", 0.1, low=0, low_open=True)
    batch = _number(train, "batch", "train.batch", 32, integer=True, low=1)

    milestones = train.get("milestones", [0.4, 0.6, 0.8])
    if (
        not isinstance(milestones, list)
        or any(isinstance(f, bool) or not isinstance(f, (int, float)) for f in milestones)
        or any(not (0.0 < float(f) < 1.0) for f in milestones)
        or sorted(set(float(f) for f in milestones)) != [float(f) for f in milestones]
    ):
        raise ConfigurationError(
            "'train.milestones' must be a strictly increasing list of "
            f"fractions inside (0, 1), got {milestones!r}"
        )

    omega = _number(prune, "omega", "prune.omega", 0.05,
                    low=0, low_open=True, high=1)
    gamma = _number(prune, "gamma", "prune.gamma", 10.0, low=0, low_open=True)
    eta = _number(prune, "eta", "prune.eta", 0.95,
                  low=0, low_open=True, high=1, high_open=True)
    method = prune.get("method", "ballot")
    if method not in METHODS:
        raise ConfigurationError(
            f"'prune.method' must be one of {list(METHODS)}, got {method!r}"
        )

    if "rewind_epoch" in refine:
        rewind = _number(refine, "rewind_epoch", "refine.rewind_epoch", None,
                         integer=True, low=0)
        if rewind >= epochs:
            raise ConfigurationError(
                f"'refine.rewind_epoch' must be below train.epochs "
                f"({epochs}), got {rewind}"
            )
    else:
        rewind = min(DEFAULT_REWIND, epochs - 1)
    epsilon = _number(refine, "epsilon", "refine.epsilon", 0.05, low=0)
    delta = _number(refine, "delta", "refine.delta", 0.0)
    max_rounds = _number(refine, "max_rounds", "refine.max_rounds", 3,
                         integer=True, low=1)
    seed = _number(raw, "seed", "seed", 0, integer=True, low=0)

    dataset = _dataset_from(data)

    cfg = TrainConfig(
        hidden=tuple(hidden),
        epochs=epochs,
        lr0=lr0,
        milestone_fractions=tuple(float(f) for f in milestones),
        batch_size=batch,
        omega=omega,
        gamma=gamma,
        eta=eta,
        rewind_epoch=rewind,
        epsilon=epsilon,
        delta=delta,
        max_rounds=max_rounds,
        seed=seed,
    )
    cfg.validate()
    dataset.validate()
    return AppConfig(train=cfg, dataset=dataset, method=method)


def _dataset_from(data: dict) -> DatasetSpec:
    csv_path = data.get("csv_path")
    if csv_path is not None and not isinstance(csv_path, str):
        raise ConfigurationError("'data.csv_path' must be a string")
    label_column = data.get("label_column", "label")
    if not isinstance(label_column, str) or not label_column:
        raise ConfigurationError("'data.label_column' must be a non-empty string")
    split = _number(data, "split", "data.split", 0.8,
                    low=0, low_open=True, high=1, high_open=True)
    normalize = data.get("normalize", False)
    if not isinstance(normalize, bool):
        raise ConfigurationError("'data.normalize' must be true or false")

    synth_raw = data.get("synthetic")
    if csv_path is not None and synth_raw is not None:
        raise ConfigurationError(
            "'data.csv_path' and 'data.synthetic' are mutually exclusive"
        )

    if csv_path is not None:
        return DatasetSpec(csv_path=csv_path, label_column=label_column,
                           synthetic=None, split=split, normalize=normalize)

    if synth_raw is None:
        synth_raw = {}
    if not isinstance(synth_raw, dict):
        raise ConfigurationError("'data.synthetic' must be an object")
    for key in synth_raw:
        if key not in _SYNTH_KEYS:
            raise ConfigurationError(
                f"unknown configuration key 'data.synthetic.{key}'"
            )
    counts = synth_raw.get("counts", [700, 100, 100, 100])
    if not isinstance(counts, list) or not counts or any(
        isinstance(c, bool) or not isinstance(c, int) or c < 2 for c in counts
    ):
        raise ConfigurationError(
            "'data.synthetic.counts' must be a list of integers >= 2, "
            f"got {counts!r}"
        )
    classes = _number(synth_raw, "classes", "data.synthetic.classes",
                      len(counts), integer=True, low=2)
    if classes != len(counts):
        raise ConfigurationError(
            f"'data.synthetic.counts' has {len(counts)} entries for "
            f"{classes} classes"
        )
    synth = SyntheticSpec(
        classes=classes,
        counts=tuple(counts),
        dim=_number(synth_raw, "dim", "data.synthetic.dim", 20, integer=True, low=1),
        mean_scale=_number(synth_raw, "mean_scale", "data.synthetic.mean_scale",
                           3.0, low=0, low_open=True),
        std=_number(synth_raw, "std", "data.synthetic.std", 1.0, low=0),
        seed=_number(synth_raw, "seed", "data.synthetic.seed", 0,
                     integer=True, low=0),
    )
    return DatasetSpec(csv_path=None, label_column=label_column,
                       synthetic=synth, split=split, normalize=normalize)


def load_config(path) -> AppConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def effective_dict(app: AppConfig) -> dict:
    """The fully resolved configuration, echoed into reports."""
    t = app.train
    d = app.dataset
    data: dict = {"split": d.split, "normalize": d.normalize,
                  "label_column": d.label_column}
    if d.csv_path is not None:
        data["csv_path"] = d.csv_path
    else:
        s = d.synthetic
        data["synthetic"] = {
            "classes": s.classes,
            "counts": list(s.counts),
            "dim": s.dim,
            "mean_scale": s.mean_scale,
            "std": s.std,
            "seed": s.seed,
        }
    return {
        "model": {"hidden": list(t.hidden)},
        "train": {
            "epochs": t.epochs,
            "lr0": t.lr0,
            "batch": t.batch_size,
            "milestones": list(t.milestone_fractions),
        },
        "prune": {
            "omega": t.omega,
            "gamma": t.gamma,
            "eta": t.eta,
            "method": app.method,
        },
        "refine": {
            "rewind_epoch": t.rewind_epoch,
            "epsilon": t.epsilon,
            "delta": t.delta,
            "max_rounds": t.max_rounds,
        },
        "data": data,
        "seed": t.seed,
    }
