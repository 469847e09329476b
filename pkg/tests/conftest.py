"""Shared fixtures and oracles for the test suite."""

import numpy as np
import pytest

from ballot.data import DatasetSpec, SyntheticSpec, make_dataset
from ballot.model import LayerSpec, init_network
from ballot.pipeline import TrainConfig

# one verdict line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def small_dataset(counts=(30, 12, 12), dim=4, std=0.8, seed=1, split=0.8,
                  mean_scale=3.0):
    spec = DatasetSpec(
        synthetic=SyntheticSpec(
            classes=len(counts), counts=tuple(counts), dim=dim,
            mean_scale=mean_scale, std=std, seed=seed,
        ),
        split=split,
    )
    return make_dataset(spec)


def small_config(**overrides):
    base = dict(
        hidden=(8,), epochs=6, lr0=0.1, batch_size=16, omega=0.4,
        rewind_epoch=2, max_rounds=2, seed=0,
    )
    base.update(overrides)
    return TrainConfig(**base)


def random_specs(rng, max_hidden_layers=2, max_units=8, n_classes=None):
    """A conforming random MLP spec list with at least one hidden layer."""
    d_in = int(rng.integers(1, 6))
    n_hidden = int(rng.integers(1, max_hidden_layers + 1))
    dims = [d_in] + [int(rng.integers(1, max_units + 1)) for _ in range(n_hidden)]
    dims.append(int(n_classes if n_classes else rng.integers(2, 5)))
    return [
        LayerSpec(dims[i], dims[i + 1], "relu" if i + 2 < len(dims) else "none")
        for i in range(len(dims) - 1)
    ]


def random_net(rng, **kwargs):
    specs = random_specs(rng, **kwargs)
    params = init_network(specs, int(rng.integers(0, 2**31)))
    return specs, params


def reference_loss(weights, biases, specs, x, onehot, class_w):
    """Plain-numpy forward plus weighted cross-entropy, written
    independently of the tape: the finite-difference oracle."""
    h = x
    for spec, w, b in zip(specs, weights, biases):
        z = h @ w + b
        h = np.maximum(z, 0.0) if spec.activation == "relu" else z
    zmax = h.max(axis=1, keepdims=True)
    shifted = h - zmax
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    sample_w = onehot @ class_w
    return float(np.mean(-sample_w * (onehot * logp).sum(axis=1)))


def brute_force_report(y_true, y_pred, n_classes):
    """Per-sample recount of every EvalReport field, loops only."""
    n = len(y_true)
    per_class_correct = [0] * n_classes
    per_class_total = [0] * n_classes
    conf = [[0] * n_classes for _ in range(n_classes)]
    correct = 0
    for t, p in zip(y_true, y_pred):
        conf[t][p] += 1
        per_class_total[t] += 1
        if t == p:
            per_class_correct[t] += 1
            correct += 1
    acc = [c / t for c, t in zip(per_class_correct, per_class_total)]
    mean = sum(acc) / n_classes
    var = sum((a - mean) ** 2 for a in acc) / n_classes
    prec = 0.0
    rec = 0.0
    for c in range(n_classes):
        col = sum(conf[r][c] for r in range(n_classes))
        row = sum(conf[c])
        prec += conf[c][c] / col if col else 0.0
        rec += conf[c][c] / row if row else 0.0
    return {
        "accuracy": correct / n,
        "per_class_acc": acc,
        "cwv": var,
        "mcd": max(acc) - min(acc),
        "macro_precision": prec / n_classes,
        "macro_recall": rec / n_classes,
    }


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
