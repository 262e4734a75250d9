"""Finite-difference checks of every hand-derived gradient.

Each ``check_*`` builds one random configuration, compares analytic against
central-difference gradients for all parameters and inputs, and returns the
largest :func:`~dyadnet.numerics.max_relative_error` seen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import NetworkSpec, build
from .numerics import (
    DenseLayer,
    LSTMLayer,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    lstm_backward,
    lstm_forward,
    max_relative_error,
    numerical_gradient,
    one_hot,
    softmax,
    softmax_cross_entropy,
)

STEP = 1e-5
TOLERANCE = 1e-5


def _worst(pairs) -> float:
    return max(max_relative_error(a, n) for a, n in pairs)


def check_dense(rng, h=STEP) -> float:
    n_in, n_out, batch = rng.integers(2, 7, size=3)
    act = ("relu", "linear", "softmax")[rng.integers(3)]
    layer = DenseLayer(rng.normal(size=(n_out, n_in)), rng.normal(size=n_out), act)
    X = rng.normal(size=(batch, n_in))
    R = rng.normal(size=(batch, n_out))

    def loss():
        return float(np.sum(dense_forward(layer, X)[0] * R))

    _, cache = dense_forward(layer, X)
    dX, dW, db = dense_backward(layer, cache, R)
    return _worst([
        (dW, numerical_gradient(loss, layer.W, h)),
        (db, numerical_gradient(loss, layer.b, h)),
        (dX, numerical_gradient(loss, X, h)),
    ])


def check_softmax_cross_entropy(rng, h=STEP) -> float:
    batch, classes = int(rng.integers(1, 8)), int(rng.integers(2, 6))
    logits = rng.normal(scale=2.0, size=(batch, classes))
    Y = one_hot(rng.integers(classes, size=batch), classes)
    _, d = softmax_cross_entropy(logits, Y)
    return max_relative_error(d, numerical_gradient(lambda: softmax_cross_entropy(logits, Y)[0], logits, h))


def check_dropout_composed(rng, h=STEP) -> float:
    """ReLU layer, dropout with a frozen mask, softmax output, cross-entropy."""
    n_in, n_hid, classes, batch = (int(v) for v in rng.integers(2, 7, size=4))
    rate = float(rng.uniform(0.1, 0.5))
    l1 = DenseLayer(rng.normal(size=(n_hid, n_in)), rng.normal(size=n_hid), "relu")
    l2 = DenseLayer(rng.normal(size=(classes, n_hid)), rng.normal(size=classes), "linear")
    X = rng.normal(size=(batch, n_in))
    Y = one_hot(rng.integers(classes, size=batch), classes)
    mask_seed = int(rng.integers(2**32))

    def run():
        a, c1 = dense_forward(l1, X)
        a, mask = dropout_forward(a, rate, mask_seed, training=True)
        z, c2 = dense_forward(l2, a)
        loss, dz = softmax_cross_entropy(z, Y)
        return loss, (c1, c2, mask, dz)

    _, (c1, c2, mask, dz) = run()
    da, dW2, db2 = dense_backward(l2, c2, dz)
    dX, dW1, db1 = dense_backward(l1, c1, dropout_backward(da, mask))
    f = lambda: run()[0]  # noqa: E731
    return _worst([
        (dW1, numerical_gradient(f, l1.W, h)),
        (db1, numerical_gradient(f, l1.b, h)),
        (dW2, numerical_gradient(f, l2.W, h)),
        (db2, numerical_gradient(f, l2.b, h)),
        (dX, numerical_gradient(f, X, h)),
    ])


def check_lstm(rng, h=STEP) -> float:
    n_in, hidden = (int(v) for v in rng.integers(2, 6, size=2))
    T, batch = int(rng.integers(1, 7)), int(rng.integers(1, 4))
    layer = LSTMLayer(rng.normal(scale=0.7, size=(4 * hidden, n_in)),
                      rng.normal(scale=0.7, size=(4 * hidden, hidden)),
                      rng.normal(scale=0.7, size=4 * hidden))
    X = rng.normal(size=(batch, T, n_in))
    R = rng.normal(size=(batch, hidden))

    def loss():
        return float(np.sum(lstm_forward(layer, X)[0] * R))

    _, caches = lstm_forward(layer, X)
    g = lstm_backward(layer, caches, R)
    return _worst([
        (g["W"], numerical_gradient(loss, layer.W, h)),
        (g["U"], numerical_gradient(loss, layer.U, h)),
        (g["b"], numerical_gradient(loss, layer.b, h)),
        (g["X"], numerical_gradient(loss, X, h)),
    ])


def check_network(rng, h=STEP) -> float:
    """A whole small network (recurrent or dense) under cross-entropy."""
    recurrent = bool(rng.integers(2))
    spec = NetworkSpec("check", (int(rng.integers(2, 5)), int(rng.integers(2, 5))),
                       output_size=(2, 4)[rng.integers(2)], first_hidden_is_lstm=recurrent)
    net = build(spec, int(rng.integers(2**32)))
    for p in net.params:
        p += rng.normal(scale=0.3, size=p.shape)
    batch = int(rng.integers(1, 4))
    shape = (batch, int(rng.integers(1, 5)), 16) if recurrent else (batch, 16)
    X = rng.normal(size=shape)
    Y = one_hot(rng.integers(spec.output_size, size=batch), spec.output_size)

    def loss():
        return softmax_cross_entropy(net.forward(X)[0], Y)[0]

    logits, caches = net.forward(X)
    _, d = softmax_cross_entropy(logits, Y)
    grads = net.backward(caches, d)
    return _worst([(g, numerical_gradient(loss, p, h)) for g, p in zip(grads, net.params)])


CHECKS = {
    "dense": check_dense,
    "softmax_cross_entropy": check_softmax_cross_entropy,
    "dropout_composed": check_dropout_composed,
    "lstm": check_lstm,
    "network": check_network,
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    trials: int
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  gradient {self.name:<22} trials={self.trials:<3d} "
                f"max_rel_err={self.max_error:.3e} (< {self.tolerance:g})")


def run_gradient_checks(trials: int = 20, seed: int = 0, tolerance: float = TOLERANCE) -> list[CheckResult]:
    results = []
    for k, (name, fn) in enumerate(CHECKS.items()):
        rng = np.random.default_rng([seed, k])
        worst = max(fn(rng) for _ in range(trials))
        results.append(CheckResult(name, trials, worst, tolerance))
    return results


def run_invariant_checks(seed: int = 0) -> list[tuple[str, bool]]:
    """Cheap structural invariants of the numerics and model code."""
    rng = np.random.default_rng([seed, 99])
    out = []
    P = softmax(rng.normal(scale=5.0, size=(50, 4)))
    out.append(("softmax rows sum to 1",
                bool(np.all(np.abs(P.sum(axis=1) - 1) < 1e-9) and np.all((P > 0) & (P < 1)))))
    z = rng.normal(size=(20, 7))
    out.append(("relu idempotent", bool(np.array_equal(np.maximum(np.maximum(z, 0), 0), np.maximum(z, 0)))))
    for classes in (2, 4):
        spec = NetworkSpec("zero", (8, 6), output_size=classes)
        net = build(spec, seed, zero_output=True)
        X = rng.normal(size=(10, 16))
        loss, _ = softmax_cross_entropy(net.forward(X)[0], one_hot(rng.integers(classes, size=10), classes))
        out.append((f"zero output layer loss = ln {classes}", abs(loss - math.log(classes)) < 1e-9))
    spec = NetworkSpec("det", (5, 3), first_hidden_is_lstm=True)
    net = build(spec, seed)
    seq = rng.normal(size=(1, 6, 16))
    out.append(("LSTM forward deterministic",
                bool(np.array_equal(net.forward(seq)[0], net.forward(seq)[0]))))
    return out
