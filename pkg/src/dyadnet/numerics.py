"""Hand-derived forward/backward kernels on float64 numpy arrays.

Conventions: batches are rows, dense weights are ``(out, in)`` so a layer
computes ``X @ W.T + b``. LSTM gate blocks are stacked along the first axis
in the order input, forget, candidate, output (``i, f, g, o``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySequence, InvalidTarget, ShapeMismatch

ACTIVATIONS = ("relu", "softmax", "linear")
GATES = ("i", "f", "g", "o")


def relu(z):
    return np.maximum(z, 0.0)


def sigmoid(z):
    # tanh form avoids overflow warnings for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def he_uniform(rng, fan_in, shape):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def xavier_uniform(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------------------
# dense layers
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DenseLayer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ShapeMismatch(f"dense weights {self.W.shape} and bias {self.b.shape} disagree")

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]


def dense_forward(layer: DenseLayer, X, activation: str | None = None):
    """Return ``(Y, cache)``. ``activation`` overrides the layer's own one."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != layer.n_in:
        raise ShapeMismatch(f"dense layer expects (batch, {layer.n_in}), got {X.shape}")
    act = activation or layer.activation
    Z = X @ layer.W.T + layer.b
    if act == "relu":
        Y = relu(Z)
    elif act == "softmax":
        Y = softmax(Z)
    else:
        Y = Z
    return Y, (X, Z, Y, act)


def dense_backward(layer: DenseLayer, cache, dOut):
    """Return ``(dX, dW, db)`` given the upstream gradient of the layer output."""
    X, Z, Y, act = cache
    dOut = np.asarray(dOut, dtype=np.float64)
    if dOut.shape != Y.shape:
        raise ShapeMismatch(f"upstream gradient {dOut.shape} does not match output {Y.shape}")
    if act == "relu":
        dZ = dOut * (Z > 0)
    elif act == "softmax":
        dZ = Y * (dOut - np.sum(dOut * Y, axis=1, keepdims=True))
    else:
        dZ = dOut
    dW = dZ.T @ X
    db = dZ.sum(axis=0)
    dX = dZ @ layer.W
    return dX, dW, db


def softmax_cross_entropy(logits, targets):
    """Mean cross-entropy of softmax(logits) against one-hot ``targets``.

    Returns ``(loss, dlogits)`` with ``dlogits = (softmax - targets) / batch``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.ndim != 2 or logits.shape != targets.shape:
        raise ShapeMismatch(f"logits {logits.shape} and targets {targets.shape} differ")
    if logits.shape[1] < 2:
        raise ShapeMismatch("need at least two classes")
    ones = targets == 1.0
    if not (np.all(ones | (targets == 0.0)) and np.all(ones.sum(axis=1) == 1)):
        raise InvalidTarget("every target row must be one-hot")
    batch = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = -np.sum(log_probs[ones]) / batch
    dlogits = (np.exp(log_probs) - targets) / batch
    return float(loss), dlogits


def one_hot(indices, n_classes: int) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros((indices.size, n_classes))
    out[np.arange(indices.size), indices] = 1.0
    return out


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

def dropout_forward(X, rate: float, rng, training: bool = True):
    """Inverted dropout. Returns ``(Y, mask)`` where ``mask`` holds the multipliers.

    ``rng`` is a numpy Generator or an integer seed.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    X = np.asarray(X, dtype=np.float64)
    if not training or rate == 0.0:
        return X.copy(), np.ones_like(X)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    keep = rng.random(X.shape) >= rate
    mask = keep / (1.0 - rate)
    return X * mask, mask


def dropout_backward(dY, mask):
    return dY * mask


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class LSTMLayer:
    """Gate weights stacked as ``W (4H, I)``, ``U (4H, H)``, ``b (4H,)``."""

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.U = np.asarray(self.U, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        four_h = self.U.shape[0]
        if (four_h % 4 or self.U.shape != (four_h, four_h // 4)
                or self.W.ndim != 2 or self.W.shape[0] != four_h or self.b.shape != (four_h,)):
            raise ShapeMismatch(
                f"inconsistent LSTM blocks W{self.W.shape} U{self.U.shape} b{self.b.shape}")

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    def blocks(self) -> dict[str, np.ndarray]:
        """The twelve per-gate parameter views, e.g. ``W_i`` or ``b_f``."""
        H = self.hidden
        out = {}
        for k, g in enumerate(GATES):
            rows = slice(k * H, (k + 1) * H)
            out[f"W_{g}"] = self.W[rows]
            out[f"U_{g}"] = self.U[rows]
            out[f"b_{g}"] = self.b[rows]
        return out


def lstm_forward(layer: LSTMLayer, sequence):
    """Run the cell over a sequence from zero initial state.

    ``sequence`` is ``(T, I)`` for one sequence or ``(B, T, I)`` for a batch of
    equal-length sequences. Returns ``(h_last, caches)``; ``h_last`` is
    ``(H,)`` or ``(B, H)`` accordingly.
    """
    X = np.asarray(sequence, dtype=np.float64)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3:
        raise ShapeMismatch(f"expected (T, I) or (B, T, I) input, got {X.shape}")
    B, T, I = X.shape
    if T == 0:
        raise EmptySequence("LSTM input sequence is empty")
    if I != layer.n_in:
        raise ShapeMismatch(f"LSTM expects {layer.n_in} inputs per step, got {I}")
    H = layer.hidden
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    # input projections for all steps at once
    XW = X @ layer.W.T + layer.b
    steps = []
    for t in range(T):
        z = XW[:, t] + h @ layer.U.T
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = sigmoid(z[:, 3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        steps.append((h_prev, c_prev, i, f, g, o, tc))
    caches = {"X": X, "steps": steps, "single": single}
    return (h[0] if single else h), caches


def lstm_backward(layer: LSTMLayer, caches, dh_last):
    """Full backpropagation through time from a gradient on the final hidden state.

    Returns a dict with the stacked gradients ``W``, ``U``, ``b`` and the
    input gradient ``X`` (same shape as the forward input).
    """
    X = caches["X"]
    steps = caches["steps"]
    dh = np.asarray(dh_last, dtype=np.float64)
    if caches["single"]:
        dh = dh[None]
    B, T, _ = X.shape
    H = layer.hidden
    if dh.shape != (B, H):
        raise ShapeMismatch(f"dh_last has shape {dh.shape}, expected {(B, H)}")
    dW = np.zeros_like(layer.W)
    dU = np.zeros_like(layer.U)
    db = np.zeros_like(layer.b)
    dX = np.zeros_like(X)
    dc = np.zeros((B, H))
    dz = np.empty((B, 4 * H))
    for t in range(T - 1, -1, -1):
        h_prev, c_prev, i, f, g, o, tc = steps[t]
        dc = dc + dh * o * (1.0 - tc * tc)
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dW += dz.T @ X[:, t]
        dU += dz.T @ h_prev
        db += dz.sum(axis=0)
        dX[:, t] = dz @ layer.W
        dh = dz @ layer.U
        dc = dc * f
    if caches["single"]:
        dX = dX[0]
    return {"W": dW, "U": dU, "b": db, "X": dX}


def split_gate_grads(grads, hidden: int) -> dict[str, np.ndarray]:
    """Slice stacked LSTM gradients into the twelve named gate blocks."""
    out = {}
    for k, g in enumerate(GATES):
        rows = slice(k * hidden, (k + 1) * hidden)
        for name in ("W", "U", "b"):
            out[f"{name}_{g}"] = grads[name][rows]
    return out


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------

def sgd_step(params, grads, learning_rate: float, l2_lambda: float = 0.0, decay=None):
    """In-place ``p -= lr * (g + l2_lambda * p)``.

    ``decay`` flags which parameters take the L2 term (weights yes, biases
    no); by default every parameter does.
    """
    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} parameters but {len(grads)} gradients")
    if decay is None:
        decay = [True] * len(params)
    for p, g, d in zip(params, grads, decay):
        if p.shape != g.shape:
            raise ShapeMismatch(f"parameter {p.shape} and gradient {g.shape} differ")
        if d and l2_lambda:
            p -= learning_rate * (g + l2_lambda * p)
        else:
            p -= learning_rate * g
    return params


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def numerical_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to array ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric) -> float:
    """``max|a - n| / max(max|a|, max|n|)``; 0 when both are identically zero."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(n), initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - n)) / scale)
