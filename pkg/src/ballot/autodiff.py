"""Reverse-mode automatic differentiation on an explicit tape.

The tape records every primitive applied during a forward pass in
topological order (operands are always recorded before results), so a
single reverse sweep visits each node exactly once.  Gradients are
returned as a fresh, immutable set per ``backward`` call: running two
backward passes from the same forward (for example an accuracy loss and
a fairness loss sharing one set of logits) yields independent gradient
sets with no accumulation between them.

All values are float64.  Scalar results are represented as tensors with
exactly one element.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, DataError, NumericalFailure, UsageError

__all__ = ["Tensor", "Tape", "Gradients"]


def _as_f64(value) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(value, dtype=np.float64))


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericalFailure(f"non-finite values in {what}")


class Tensor:
    """A float64 array bound to the tape that produced it."""

    __slots__ = ("data", "_tape", "_node")

    def __init__(self, data: np.ndarray, tape: "Tape", node: int):
        self.data = data
        self._tape = tape
        self._node = node

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError("item() requires a single-element tensor")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, node={self._node})"


class _Node:
    """One recorded primitive: which inputs it read and how to push
    an upstream gradient back onto them."""

    __slots__ = ("inputs",)

    def __init__(self, inputs: tuple):
        self.inputs = inputs

    def push(self, grad: np.ndarray, sink) -> None:
        raise NotImplementedError


class _Leaf(_Node):
    def __init__(self):
        super().__init__(())

    def push(self, grad, sink):
        pass


class _Affine(_Node):
    def __init__(self, ids, x, w):
        super().__init__(ids)
        self.x = x
        self.w = w

    __slots__ = ("x", "w")

    def push(self, grad, sink):
        ix, iw, ib = self.inputs
        sink(ix, grad @ self.w.T)
        sink(iw, self.x.T @ grad)
        sink(ib, grad.sum(axis=0))


class _Relu(_Node):
    __slots__ = ("active",)

    def __init__(self, ids, active):
        super().__init__(ids)
        self.active = active

    def push(self, grad, sink):
        sink(self.inputs[0], grad * self.active)


class _Mul(_Node):
    __slots__ = ("a", "b")

    def __init__(self, ids, a, b):
        super().__init__(ids)
        self.a = a
        self.b = b

    def push(self, grad, sink):
        ia, ib = self.inputs
        sink(ia, grad * self.b)
        sink(ib, grad * self.a)


class _Scale(_Node):
    __slots__ = ("c",)

    def __init__(self, ids, c):
        super().__init__(ids)
        self.c = c

    def push(self, grad, sink):
        sink(self.inputs[0], grad * self.c)


class _WeightedCE(_Node):
    __slots__ = ("jac",)

    def __init__(self, ids, jac):
        super().__init__(ids)
        self.jac = jac

    def push(self, grad, sink):
        sink(self.inputs[0], grad.reshape(()) * self.jac)


class Tape:
    """Records primitives and replays them backwards.

    Tensors are created through the tape (``leaf`` for inputs and
    parameters, the op methods for everything else) and are only valid
    with the tape that created them.
    """

    def __init__(self):
        self._nodes: list[_Node] = []

    def _record(self, node: _Node, data: np.ndarray) -> Tensor:
        self._nodes.append(node)
        return Tensor(data, self, len(self._nodes) - 1)

    def _check(self, t, role: str) -> Tensor:
        if not isinstance(t, Tensor):
            raise UsageError(f"{role} must be a Tensor created on this tape")
        if t._tape is not self:
            raise UsageError(f"{role} belongs to a different tape")
        return t

    def leaf(self, data) -> Tensor:
        """Record an input or parameter value."""
        return self._record(_Leaf(), _as_f64(data))

    def affine(self, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
        """Batched ``x @ w + b`` with x of shape [n, d_in], w [d_in, d_out],
        b [d_out]."""
        x = self._check(x, "x")
        w = self._check(w, "w")
        b = self._check(b, "b")
        if x.data.ndim != 2 or w.data.ndim != 2 or b.data.ndim != 1:
            raise ConfigurationError(
                "affine expects x [n,d_in], w [d_in,d_out], b [d_out]"
            )
        if x.data.shape[1] != w.data.shape[0] or w.data.shape[1] != b.data.shape[0]:
            raise ConfigurationError(
                f"affine shape mismatch: x {x.data.shape}, w {w.data.shape}, "
                f"b {b.data.shape}"
            )
        out = x.data @ w.data + b.data
        _require_finite(out, "affine output")
        return self._record(
            _Affine((x._node, w._node, b._node), x.data, w.data), out
        )

    def relu(self, x: Tensor) -> Tensor:
        """Elementwise max(x, 0); the subgradient at exactly 0 is 0."""
        x = self._check(x, "x")
        out = np.maximum(x.data, 0.0)
        _require_finite(out, "relu output")
        return self._record(_Relu((x._node,), x.data > 0.0), out)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise product of two same-shape tensors."""
        a = self._check(a, "a")
        b = self._check(b, "b")
        if a.data.shape != b.data.shape:
            raise ConfigurationError(
                f"mul shape mismatch: {a.data.shape} vs {b.data.shape}"
            )
        out = a.data * b.data
        _require_finite(out, "mul output")
        return self._record(_Mul((a._node, b._node), a.data, b.data), out)

    def scale(self, x: Tensor, c: float) -> Tensor:
        """Multiply by a constant."""
        x = self._check(x, "x")
        c = float(c)
        if not np.isfinite(c):
            raise NumericalFailure("scale constant is not finite")
        out = x.data * c
        _require_finite(out, "scale output")
        return self._record(_Scale((x._node,), c), out)

    def weighted_softmax_cross_entropy(
        self, logits: Tensor, targets: np.ndarray, class_weights: np.ndarray
    ) -> Tensor:
        """Mean over the batch of per-sample weighted cross-entropy.

        ``targets`` must be exactly one-hot rows, ``class_weights`` a
        strictly positive vector of length C.  With all weights equal
        to 1 this is the plain softmax cross-entropy; the weighted path
        is bit-identical to it in that case because multiplying by 1.0
        is exact.  The log-sum-exp uses max subtraction, so extreme but
        finite logits stay finite.
        """
        logits = self._check(logits, "logits")
        z = logits.data
        if z.ndim != 2:
            raise ConfigurationError("logits must have shape [n, C]")
        _require_finite(z, "logits")
        y = _as_f64(targets)
        if y.shape != z.shape:
            raise ConfigurationError(
                f"targets shape {y.shape} does not match logits {z.shape}"
            )
        onehot = (y == 0.0) | (y == 1.0)
        if not onehot.all() or not (y.sum(axis=1) == 1.0).all():
            raise DataError("targets must be exactly one-hot rows")
        w = _as_f64(class_weights)
        if w.shape != (z.shape[1],):
            raise ConfigurationError(
                f"class_weights must have shape ({z.shape[1]},), got {w.shape}"
            )
        if not np.isfinite(w).all() or (w <= 0.0).any():
            raise ConfigurationError("class_weights must be finite and positive")

        n = z.shape[0]
        if n == 0:
            raise DataError("empty batch")
        zmax = z.max(axis=1, keepdims=True)
        shifted = z - zmax
        lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True)) + zmax
        logp = z - lse
        sample_w = y @ w
        loss = np.array((-(sample_w * (y * logp).sum(axis=1))).mean())
        _require_finite(loss, "cross-entropy loss")

        probs = np.exp(logp)
        jac = (sample_w[:, None] * (probs - y)) / n
        return self._record(_WeightedCE((logits._node,), jac), loss)

    def backward(self, loss: Tensor) -> "Gradients":
        """Run one reverse sweep from ``loss`` and return the gradients.

        ``loss`` must be a single-element tensor recorded on this tape.
        The sweep does not mutate the tape, so it can be repeated for a
        different loss on the same forward pass.
        """
        loss = self._check(loss, "loss")
        if loss.data.size != 1:
            raise UsageError("backward requires a single-element loss")
        if not self._nodes:
            raise UsageError("backward called on an empty tape")

        grads: list = [None] * (loss._node + 1)
        grads[loss._node] = np.ones_like(loss.data)

        def sink(idx: int, g: np.ndarray) -> None:
            if grads[idx] is None:
                grads[idx] = g.copy() if g.base is not None else g
            else:
                grads[idx] = grads[idx] + g

        for idx in range(loss._node, -1, -1):
            g = grads[idx]
            if g is None:
                continue
            self._nodes[idx].push(g, sink)

        for idx, g in enumerate(grads):
            if g is not None:
                _require_finite(g, f"gradient of node {idx}")
        return Gradients(self, grads)


class Gradients:
    """Read-only gradient set produced by one backward sweep."""

    __slots__ = ("_tape", "_grads")

    def __init__(self, tape: Tape, grads: list):
        self._tape = tape
        self._grads = grads

    def wrt(self, t: Tensor) -> np.ndarray:
        """Gradient of the swept loss with respect to ``t``.

        Tensors that the loss does not depend on get an exact zero
        gradient of the matching shape.
        """
        if not isinstance(t, Tensor) or t._tape is not self._tape:
            raise UsageError("tensor does not belong to the swept tape")
        if t._node >= len(self._grads) or self._grads[t._node] is None:
            return np.zeros_like(t.data)
        return self._grads[t._node]
