"""Mask construction: conflict-vote ranking plus magnitude and random
baselines.

The conflict ledger watches training.  For every hidden unit and every
epoch it receives the epoch-accumulated batch-mean gradients of the
accuracy loss (g_a) and the weighted fairness loss (g_f) with respect to
the unit's pre-activation.  A unit whose two gradients disagree in sign
is pulling accuracy and fairness in opposite directions; its conflict
score for the epoch is |g_a| + gamma * |g_f|, and units whose score
reaches the eta-quantile of the strictly positive scores get one vote
(count) and the score added to a running total (cum_score).

Mask building removes whole hidden units worst-first and then trims
individual weights so every method lands on exactly floor(omega * n)
kept parameters out of n.  Output units are never removed and the output
bias is never masked; no builder ever empties a hidden layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    ConfigurationError,
    InfeasibleMaskError,
    NumericalFailure,
    UsageError,
)
from .model import LayerSpec, NetworkParams, param_count, hidden_sizes, validate_specs


class NeuronId(NamedTuple):
    layer: int
    unit: int


def conflict_scores(g_a, g_f, gamma: float) -> np.ndarray:
    """Score a flat vector of units: |g_a| + gamma * |g_f| where the two
    gradients have strictly opposite signs, 0 everywhere else."""
    a = np.asarray(g_a, dtype=np.float64)
    f = np.asarray(g_f, dtype=np.float64)
    if a.shape != f.shape:
        raise ConfigurationError("g_a and g_f must have matching shapes")
    if not (np.isfinite(a).all() and np.isfinite(f).all()):
        raise NumericalFailure("non-finite gradient aggregates")
    opposed = np.sign(a) * np.sign(f) < 0
    return np.where(opposed, np.abs(a) + gamma * np.abs(f), 0.0)


def positive_score_threshold(scores: np.ndarray, eta: float) -> float | None:
    """Nearest-rank eta-quantile over the strictly positive scores.

    Returns None when no score is positive (no unit is in conflict).
    With n positive scores the threshold is the entry at 0-based index
    min(ceil(eta * n), n - 1) of the ascending sort, so roughly the top
    (1 - eta) fraction of conflicted units clears it.
    """
    pos = np.sort(scores[scores > 0.0])
    n = pos.size
    if n == 0:
        return None
    idx = min(math.ceil(eta * n), n - 1)
    return float(pos[idx])


class ConflictLedger:
    """Per-unit vote counts and cumulative conflict scores over training."""

    def __init__(self, sizes: list[int]):
        if not sizes or any(int(s) < 1 for s in sizes):
            raise ConfigurationError("hidden layer sizes must be positive")
        self.sizes = [int(s) for s in sizes]
        self.counts = [np.zeros(s, dtype=np.int64) for s in self.sizes]
        self.cum_scores = [np.zeros(s) for s in self.sizes]
        self._epochs: dict[int, tuple] = {}

    @property
    def epochs(self) -> list[int]:
        return sorted(self._epochs)

    def gradients(self, epoch: int) -> tuple:
        """The (g_a, g_f) pair stored for one recorded epoch."""
        if epoch not in self._epochs:
            raise UsageError(f"epoch {epoch} was never recorded")
        return self._epochs[epoch]

    def _check_layers(self, vecs, name: str) -> list[np.ndarray]:
        if len(vecs) != len(self.sizes):
            raise ConfigurationError(f"{name} must cover {len(self.sizes)} layers")
        out = []
        for i, (vec, size) in enumerate(zip(vecs, self.sizes)):
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (size,):
                raise ConfigurationError(
                    f"{name} layer {i} has shape {arr.shape}, expected ({size},)"
                )
            out.append(arr.copy())
        return out

    def record_epoch(self, epoch: int, g_a, g_f, gamma: float, eta: float) -> None:
        """Score one epoch's gradient aggregates and update the votes.

        Every recorded unit must be covered.  An epoch can only be
        recorded once; gamma must be positive and eta inside (0, 1).
        """
        epoch = int(epoch)
        if epoch < 0:
            raise ConfigurationError("epoch must be non-negative")
        if epoch in self._epochs:
            raise UsageError(f"epoch {epoch} already recorded")
        if not (math.isfinite(gamma) and gamma > 0.0):
            raise ConfigurationError("gamma must be positive and finite")
        if not (0.0 < eta < 1.0):
            raise ConfigurationError("eta must lie in (0, 1)")
        ga = self._check_layers(g_a, "g_a")
        gf = self._check_layers(g_f, "g_f")

        per_layer = [conflict_scores(a, f, gamma) for a, f in zip(ga, gf)]
        threshold = positive_score_threshold(np.concatenate(per_layer), eta)
        if threshold is not None:
            for i, s in enumerate(per_layer):
                hit = (s > 0.0) & (s >= threshold)
                self.counts[i][hit] += 1
                self.cum_scores[i][hit] += s[hit]
        self._epochs[epoch] = (ga, gf)


@dataclass
class Mask:
    """Keep/remove decisions: per hidden unit and per parameter entry.

    ``weight_keep[i]`` matches the shape of layer i's weight matrix and
    ``bias_keep[i]`` its bias; ``neuron_keep`` covers hidden layers only.
    A removed unit always has every incoming weight, outgoing weight,
    and its bias marked removed.
    """

    neuron_keep: list[np.ndarray]
    weight_keep: list[np.ndarray]
    bias_keep: list[np.ndarray]
    omega: float

    def kept_count(self) -> int:
        return int(
            sum(int(w.sum()) for w in self.weight_keep)
            + sum(int(b.sum()) for b in self.bias_keep)
        )

    def total_count(self) -> int:
        return int(
            sum(w.size for w in self.weight_keep) + sum(b.size for b in self.bias_keep)
        )

    def retention(self) -> float:
        return self.kept_count() / self.total_count()


def sparsity(mask: Mask, specs: list[LayerSpec] | None = None) -> float:
    """Fraction of parameters the mask keeps, biases included."""
    if specs is not None:
        if len(mask.weight_keep) != len(specs) or any(
            wk.shape != (s.d_in, s.d_out) or bk.shape != (s.d_out,)
            for wk, bk, s in zip(mask.weight_keep, mask.bias_keep, specs)
        ):
            raise ConfigurationError("mask does not match the layer specs")
    return mask.retention()


class _Layout:
    """Flat parameter indexing: per layer the weights row-major, then
    the bias, layers in order.  Matches the checkpoint byte layout."""

    def __init__(self, specs: list[LayerSpec]):
        self.specs = specs
        self.base = []
        offset = 0
        for s in specs:
            self.base.append(offset)
            offset += s.d_in * s.d_out + s.d_out
        self.total = offset

    def flat(self, entry) -> int:
        kind, layer, idx = entry
        s = self.specs[layer]
        if kind == "w":
            r, c = idx
            return self.base[layer] + r * s.d_out + c
        return self.base[layer] + s.d_in * s.d_out + idx

    def entry(self, flat: int):
        if not (0 <= flat < self.total):
            raise ConfigurationError(f"flat index {flat} out of range")
        layer = max(i for i, b in enumerate(self.base) if b <= flat)
        s = self.specs[layer]
        offset = flat - self.base[layer]
        if offset < s.d_in * s.d_out:
            return ("w", layer, (offset // s.d_out, offset % s.d_out))
        return ("b", layer, offset - s.d_in * s.d_out)


def _entry_value(entry, params: NetworkParams) -> float:
    kind, layer, idx = entry
    if kind == "w":
        return float(params.weights[layer][idx])
    return float(params.biases[layer][idx])


class _MaskState:
    def __init__(self, specs: list[LayerSpec]):
        validate_specs(specs)
        self.specs = specs
        self.layout = _Layout(specs)
        self.weight_keep = [np.ones((s.d_in, s.d_out), dtype=bool) for s in specs]
        self.bias_keep = [np.ones(s.d_out, dtype=bool) for s in specs]
        self.neuron_keep = [np.ones(s.d_out, dtype=bool) for s in specs[:-1]]
        self.kept = param_count(specs)
        self.units_left = [s.d_out for s in specs[:-1]]

    def entries_of(self, nid: NeuronId):
        """Every parameter entry tied to a hidden unit: its incoming
        column, its bias, and its outgoing row."""
        layer, unit = nid
        for r in range(self.specs[layer].d_in):
            yield ("w", layer, (r, unit))
        yield ("b", layer, unit)
        for c in range(self.specs[layer + 1].d_out):
            yield ("w", layer + 1, (unit, c))

    def _keep_array(self, entry):
        kind, layer, idx = entry
        return (self.weight_keep if kind == "w" else self.bias_keep)[layer], idx

    def remove_neuron(self, nid: NeuronId) -> list:
        flipped = []
        for entry in self.entries_of(nid):
            arr, idx = self._keep_array(entry)
            if arr[idx]:
                arr[idx] = False
                flipped.append(entry)
        self.kept -= len(flipped)
        self.neuron_keep[nid.layer][nid.unit] = False
        self.units_left[nid.layer] -= 1
        return flipped

    def undo_neuron(self, nid: NeuronId, flipped: list) -> None:
        for entry in flipped:
            arr, idx = self._keep_array(entry)
            arr[idx] = True
        self.kept += len(flipped)
        self.neuron_keep[nid.layer][nid.unit] = True
        self.units_left[nid.layer] += 1

    def trim(self, entries) -> None:
        for entry in entries:
            arr, idx = self._keep_array(entry)
            if arr[idx]:
                arr[idx] = False
                self.kept -= 1

    def kept_entries_no_output_bias(self) -> list:
        out = []
        last = len(self.specs) - 1
        for layer, s in enumerate(self.specs):
            wk = self.weight_keep[layer]
            for r, c in zip(*np.nonzero(wk)):
                out.append(("w", layer, (int(r), int(c))))
            if layer != last:
                for j in np.nonzero(self.bias_keep[layer])[0]:
                    out.append(("b", layer, int(j)))
        return out

    def to_mask(self, omega: float) -> Mask:
        return Mask(self.neuron_keep, self.weight_keep, self.bias_keep, float(omega))


def _target_kept(specs: list[LayerSpec], omega: float) -> int:
    if not (0.0 < omega <= 1.0):
        raise ConfigurationError(f"omega must lie in (0, 1], got {omega}")
    total = param_count(specs)
    k = math.floor(omega * total)
    n_out = specs[-1].d_out
    if k < n_out:
        raise InfeasibleMaskError(
            f"retention {omega} needs {k} of {total} parameters, below the "
            f"{n_out} unmaskable output biases; minimum retention is "
            f"{n_out / total}",
            min_retention=n_out / total,
        )
    return k


def _removal_mask(specs, order, omega, value_key) -> Mask:
    """Shared driver: remove whole units in ``order`` until the kept
    count first reaches floor(omega * n) or below, skip any removal that
    would empty a hidden layer, then repair overshoot by trimming single
    entries (cheapest first per ``value_key``) so the count is exact."""
    k = _target_kept(specs, omega)
    state = _MaskState(specs)
    if k == state.kept:
        return state.to_mask(omega)

    last = None
    for nid in order:
        if state.kept <= k:
            break
        if state.units_left[nid.layer] <= 1:
            continue
        last = (nid, state.remove_neuron(nid))

    if state.kept < k:
        nid, flipped = last
        state.undo_neuron(nid, flipped)
        need = state.kept - k
        state.trim(sorted(flipped, key=value_key)[:need])
    elif state.kept > k:
        need = state.kept - k
        candidates = sorted(state.kept_entries_no_output_bias(), key=value_key)
        state.trim(candidates[:need])
    return state.to_mask(omega)


def build_ballot_mask(
    ledger: ConflictLedger,
    specs: list[LayerSpec],
    omega: float,
    final_params: NetworkParams,
) -> Mask:
    """Remove the most conflict-voted hidden units first.

    Units are ranked by vote count (descending), then cumulative score
    (descending), then (layer, unit) as the final tie-break, so the mask
    depends on counts and scores only through that order.  Overshoot is
    repaired by undoing the last unit and trimming its entries in
    ascending |final weight| order.
    """
    validate_specs(specs)
    if ledger.sizes != hidden_sizes(specs):
        raise ConfigurationError("ledger does not cover this network's hidden units")
    if not ledger.epochs:
        raise UsageError("ledger has no recorded epochs")
    if len(final_params.weights) != len(specs):
        raise ConfigurationError("final_params does not match the layer specs")

    ids = [NeuronId(i, u) for i, n in enumerate(ledger.sizes) for u in range(n)]
    order = sorted(
        ids,
        key=lambda nid: (
            -int(ledger.counts[nid.layer][nid.unit]),
            -float(ledger.cum_scores[nid.layer][nid.unit]),
            nid.layer,
            nid.unit,
        ),
    )
    layout = _Layout(specs)

    def key(entry):
        return (abs(_entry_value(entry, final_params)), layout.flat(entry))

    return _removal_mask(specs, order, omega, key)


def build_random_mask(specs: list[LayerSpec], omega: float, seed: int) -> Mask:
    """Remove hidden units in a seed-determined uniform random order;
    overshoot is trimmed in ascending flat-index order."""
    validate_specs(specs)
    rng = np.random.default_rng(seed)
    ids = [
        NeuronId(i, u) for i, n in enumerate(hidden_sizes(specs)) for u in range(n)
    ]
    order = [ids[i] for i in rng.permutation(len(ids))]
    layout = _Layout(specs)
    return _removal_mask(specs, order, omega, layout.flat)


def _hidden_entry_spans(specs: list[LayerSpec], layout: _Layout) -> list[range]:
    """Flat-index span of every entry tied to hidden layer i's units:
    its weights and bias plus the next layer's weights.  The block is
    contiguous, and adjacent layers share the connecting weights."""
    spans = []
    for i in range(len(specs) - 1):
        w_next = specs[i + 1].d_in * specs[i + 1].d_out
        spans.append(range(layout.base[i], layout.base[i + 1] + w_next))
    return spans


def _repair_dead_layers(keep_flat, flat, ranked, specs, layout, omega, k) -> None:
    """Swap entries until every hidden layer has at least one kept
    entry.  Forced additions take the strongest excluded entry of the
    dead layer; the matching eviction takes the weakest kept entry that
    is not itself keeping some layer alive, so the total stays at k."""
    spans = _hidden_entry_spans(specs, layout)
    if all(keep_flat[s.start : s.stop].any() for s in spans):
        return
    forced = set()
    for span in spans:
        if keep_flat[span.start : span.stop].any():
            continue
        add = min(
            (j for j in span if not keep_flat[j]),
            key=lambda j: (-abs(flat[j]), j),
        )
        keep_flat[add] = True
        forced.add(add)
        for j in reversed(ranked):
            j = int(j)
            if not keep_flat[j] or j in forced:
                continue
            if all(
                int(keep_flat[s.start : s.stop].sum()) >= 2
                for s in spans
                if s.start <= j < s.stop
            ):
                keep_flat[j] = False
                break
        else:
            n_out = specs[-1].d_out
            floor = (n_out + len(spans)) / layout.total
            raise InfeasibleMaskError(
                f"retention {omega} keeps {k} of {layout.total} parameters, "
                f"too few to keep every hidden layer alive; retention "
                f"{floor} is always feasible",
                min_retention=floor,
            )


def build_magnitude_mask(
    params: NetworkParams, specs: list[LayerSpec], omega: float
) -> Mask:
    """Keep the globally largest-|value| entries, biases included, up to
    exactly floor(omega * n) kept parameters.  Ties break toward the
    lower flat index.  Output biases are exempt and always kept; unit
    keep flags are derived afterwards (a hidden unit is marked removed
    once every entry tied to it is removed).

    When the plain top-k selection would leave a hidden layer with no
    kept entry at all, the mask is repaired: the strongest excluded
    entry tied to that layer is kept and the weakest kept entry whose
    removal empties nothing is dropped, so the count stays exact.  If
    no such swap exists the retention is infeasible."""
    validate_specs(specs)
    if len(params.weights) != len(specs):
        raise ConfigurationError("params do not match the layer specs")
    k = _target_kept(specs, omega)
    state = _MaskState(specs)
    if k == state.kept:
        return state.to_mask(omega)

    layout = _Layout(specs)
    flat = np.empty(layout.total)
    last = len(specs) - 1
    maskable = np.ones(layout.total, dtype=bool)
    for i, s in enumerate(specs):
        w0 = layout.base[i]
        flat[w0 : w0 + s.d_in * s.d_out] = params.weights[i].reshape(-1)
        b0 = w0 + s.d_in * s.d_out
        flat[b0 : b0 + s.d_out] = params.biases[i]
        if i == last:
            maskable[b0 : b0 + s.d_out] = False

    if not np.isfinite(flat).all():
        raise NumericalFailure("non-finite parameter values")

    ranked = np.argsort(-np.abs(flat), kind="stable")
    ranked = ranked[maskable[ranked]]
    keep_flat = ~maskable
    keep_flat[ranked[: k - int((~maskable).sum())]] = True
    _repair_dead_layers(keep_flat, flat, ranked, specs, layout, omega, k)

    for i, s in enumerate(specs):
        w0 = layout.base[i]
        state.weight_keep[i][:] = keep_flat[w0 : w0 + s.d_in * s.d_out].reshape(
            s.d_in, s.d_out
        )
        b0 = w0 + s.d_in * s.d_out
        state.bias_keep[i][:] = keep_flat[b0 : b0 + s.d_out]
    state.kept = int(keep_flat.sum())

    for i in range(len(specs) - 1):
        for u in range(specs[i].d_out):
            alive = any(
                state._keep_array(e)[0][e[2]]
                for e in state.entries_of(NeuronId(i, u))
            )
            state.neuron_keep[i][u] = alive
    return state.to_mask(omega)


def identity_mask(specs: list[LayerSpec], omega: float = 1.0) -> Mask:
    """A mask that keeps every parameter."""
    validate_specs(specs)
    return _MaskState(specs).to_mask(omega)


def serialize_mask(mask: Mask, specs: list[LayerSpec]) -> dict:
    """JSON form: a flat 0/1 keep flag per hidden unit per layer, plus
    the flat indices of entries trimmed beyond whole-unit removal."""
    if len(mask.weight_keep) != len(specs):
        raise ConfigurationError("mask does not match the layer specs")
    state = _MaskState(specs)
    layout = state.layout
    implied = np.zeros(layout.total, dtype=bool)
    for i, keep in enumerate(mask.neuron_keep):
        for u in np.nonzero(~keep)[0]:
            for entry in state.entries_of(NeuronId(i, int(u))):
                implied[layout.flat(entry)] = True
    trimmed = []
    for layer, s in enumerate(specs):
        for r, c in zip(*np.nonzero(~mask.weight_keep[layer])):
            trimmed.append(layout.flat(("w", layer, (int(r), int(c)))))
        for j in np.nonzero(~mask.bias_keep[layer])[0]:
            trimmed.append(layout.flat(("b", layer, int(j))))
    trimmed = sorted(int(f) for f in trimmed if not implied[f])
    return {
        "omega": float(mask.omega),
        "neuron_keep": [[int(v) for v in keep] for keep in mask.neuron_keep],
        "trimmed": trimmed,
    }


def deserialize_mask(obj: dict, specs: list[LayerSpec]) -> Mask:
    """Inverse of ``serialize_mask``; validates shape against the specs."""
    validate_specs(specs)
    state = _MaskState(specs)
    flags = obj.get("neuron_keep")
    sizes = hidden_sizes(specs)
    if not isinstance(flags, list) or len(flags) != len(sizes) or any(
        len(layer) != n for layer, n in zip(flags, sizes)
    ):
        raise ConfigurationError("neuron_keep does not match the layer specs")
    for i, layer in enumerate(flags):
        for u, flag in enumerate(layer):
            if flag not in (0, 1):
                raise ConfigurationError("neuron_keep flags must be 0 or 1")
            if flag == 0:
                state.remove_neuron(NeuronId(i, u))
    trimmed = obj.get("trimmed", [])
    if not isinstance(trimmed, list):
        raise ConfigurationError("trimmed must be a list of flat indices")
    state.trim(state.layout.entry(int(f)) for f in trimmed)
    return state.to_mask(float(obj.get("omega", 1.0)))
