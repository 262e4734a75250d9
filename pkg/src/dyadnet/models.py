"""Network specifications, the model registry, network construction and persistence."""

from __future__ import annotations

import configparser
import dataclasses
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptModelFile, InvalidSpec, ShapeMismatch, UnknownModelName
from .features import N_FEATURES
from .numerics import (
    DenseLayer,
    LSTMLayer,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    he_uniform,
    lstm_backward,
    lstm_forward,
    softmax,
    xavier_uniform,
)

# Scale applied to the softmax layer's Xavier init so a fresh network starts
# close to uniform predictions.
OUTPUT_INIT_SCALE = 0.01
FORGET_BIAS = 1.0


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    hidden_sizes: tuple[int, ...]
    output_size: int = 4
    first_hidden_is_lstm: bool = False
    l2_enabled: bool = False
    dropout_rate: float = 0.0
    learning_rate: float = 0.00011
    epochs: int = 2500
    input_size: int = N_FEATURES

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_size != N_FEATURES:
            raise InvalidSpec(f"input_size must be {N_FEATURES}, got {self.input_size}")
        if self.output_size not in (2, 4):
            raise InvalidSpec(f"output_size must be 2 or 4, got {self.output_size}")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise InvalidSpec("hidden_sizes must be a non-empty list of positive sizes")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidSpec(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not self.learning_rate > 0:
            raise InvalidSpec("learning_rate must be positive")
        if self.epochs < 1:
            raise InvalidSpec("epochs must be at least 1")

    @property
    def is_recurrent(self) -> bool:
        return self.first_hidden_is_lstm

    def replace(self, **changes) -> "NetworkSpec":
        return dataclasses.replace(self, **changes)


def _ff(name, hidden, epochs, lr, l2, dropout=0.0, out=4):
    return NetworkSpec(name, hidden, out, False, l2, dropout, lr, epochs)


def _rnn(name, hidden, epochs, lr, l2, out=4):
    return NetworkSpec(name, hidden, out, True, l2, 0.0, lr, epochs)


REGISTRY: dict[str, NetworkSpec] = {s.name: s for s in (
    _ff("RN2-1", (25, 12), 1500, 0.00015, False),
    _ff("RN2-2", (1500, 600), 2500, 0.00011, False),
    _ff("RN2-3", (1500, 600), 2500, 0.00011, True),
    _ff("RN2-4", (1800, 2500, 1600, 600), 2500, 0.00011, True),
    _ff("RN2-5", (1500, 600), 2500, 0.00011, True, dropout=0.15),
    _rnn("RNR2-1", (25, 12), 1500, 0.00015, True),
    _rnn("RNR2-2", (2500, 1800, 1200, 600), 10, 0.00011, True),
    _rnn("RNR2-3", (1500, 600), 25, 0.00011, True),
    _ff("RN2-6", (1500, 600), 2500, 0.00011, False, out=2),
    _ff("RN2-7", (1500, 600), 2500, 0.00011, True, out=2),
    _rnn("RNR2-4", (25, 12), 500, 0.00011, True, out=2),
)}


def registry_lookup(name: str) -> NetworkSpec:
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownModelName(
            f"no registry model named {name!r}; known: {', '.join(REGISTRY)}") from None


def load_spec_file(path) -> NetworkSpec:
    """Read a user-defined spec from an INI file with a ``[network]`` section."""
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise InvalidSpec(f"cannot read spec file {path}")
    if "network" not in cp:
        raise InvalidSpec(f"{path}: missing [network] section")
    sec = cp["network"]
    try:
        return NetworkSpec(
            name=sec.get("name", Path(path).stem),
            hidden_sizes=tuple(int(x) for x in sec["hidden"].split("-")),
            output_size=sec.getint("output_size", 4),
            first_hidden_is_lstm=sec.getboolean("lstm", False),
            l2_enabled=sec.getboolean("l2", False),
            dropout_rate=sec.getfloat("dropout", 0.0),
            learning_rate=sec.getfloat("learning_rate"),
            epochs=sec.getint("epochs"),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise InvalidSpec(f"{path}: {exc}") from None


def format_lr(lr: float) -> str:
    return np.format_float_positional(lr, trim="-")


def registry_table(specs=None) -> str:
    """Fixed-width listing of the registry, one row per model."""
    specs = list(REGISTRY.values()) if specs is None else list(specs)
    head = ("Model", "Type", "Classes", "Hidden layers", "Neurons", "Epochs",
            "Learning rate", "L2 Reg.", "Dropout")
    rows = [head]
    for s in specs:
        rows.append((
            s.name,
            "LSTM" if s.first_hidden_is_lstm else "Dense",
            str(s.output_size),
            str(len(s.hidden_sizes)),
            "-".join(str(h) for h in s.hidden_sizes),
            str(s.epochs),
            format_lr(s.learning_rate),
            "Yes" if s.l2_enabled else "No",
            f"Yes ({s.dropout_rate:.0%})" if s.dropout_rate else "No",
        ))
    widths = [max(len(r[k]) for r in rows) for k in range(len(head))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def parameter_count(spec: NetworkSpec) -> int:
    """Closed-form number of trainable scalars for a spec."""
    sizes = [spec.input_size, *spec.hidden_sizes, spec.output_size]
    total = 0
    start = 0
    if spec.first_hidden_is_lstm:
        i, h = sizes[0], sizes[1]
        total += 4 * (h * i + h * h + h)
        start = 1
    for a, b in zip(sizes[start:-1], sizes[start + 1:]):
        total += a * b + b
    return total


class Network:
    """Optional LSTM first layer, ReLU dense hidden layers, softmax output.

    ``params`` lists the trainable arrays in file order: LSTM ``W, U, b``
    (when present), then ``W, b`` for each dense layer from input to output.
    """

    def __init__(self, spec: NetworkSpec, dense: list[DenseLayer], lstm: LSTMLayer | None = None):
        if spec.first_hidden_is_lstm != (lstm is not None):
            raise ShapeMismatch("LSTM layer presence disagrees with the spec")
        self.spec = spec
        self.lstm = lstm
        self.dense = list(dense)
        self._check_shapes()

    def _check_shapes(self):
        spec = self.spec
        sizes = [spec.input_size, *spec.hidden_sizes, spec.output_size]
        shapes = []
        if self.lstm is not None:
            shapes.append((self.lstm.hidden, self.lstm.n_in))
        shapes += [layer.W.shape for layer in self.dense]
        expected = list(zip(sizes[1:], sizes[:-1]))
        if shapes != expected:
            raise ShapeMismatch(f"layer shapes {shapes} do not chain as {expected}")
        if any(layer.activation != "relu" for layer in self.dense[:-1]) \
                or self.dense[-1].activation != "softmax":
            raise ShapeMismatch("hidden dense layers must be ReLU and the output softmax")

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        if self.lstm is not None:
            out += [self.lstm.W, self.lstm.U, self.lstm.b]
        for layer in self.dense:
            out += [layer.W, layer.b]
        return out

    @property
    def param_names(self) -> list[str]:
        out = []
        if self.lstm is not None:
            out += ["lstm.W", "lstm.U", "lstm.b"]
        for k in range(len(self.dense)):
            out += [f"dense{k}.W", f"dense{k}.b"]
        return out

    @property
    def decay_mask(self) -> list[bool]:
        """True for weight matrices (L2 applies), False for biases."""
        return [not name.endswith(".b") for name in self.param_names]

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "Network":
        lstm = None
        if self.lstm is not None:
            lstm = LSTMLayer(self.lstm.W.copy(), self.lstm.U.copy(), self.lstm.b.copy())
        dense = [DenseLayer(d.W.copy(), d.b.copy(), d.activation) for d in self.dense]
        return Network(self.spec, dense, lstm)

    def forward(self, X, training: bool = False, rng=None, dropout_rate: float | None = None):
        """Return ``(logits, caches)``.

        ``X`` is ``(B, 16)`` for dense networks or ``(B, T, 16)`` for recurrent
        ones. Dropout runs on hidden outputs only when ``training`` is set.
        """
        rate = self.spec.dropout_rate if dropout_rate is None else dropout_rate
        drop = training and rate > 0.0
        caches = {"lstm": None, "dense": [], "masks": []}
        a = np.asarray(X, dtype=np.float64)
        if self.lstm is not None:
            if a.ndim != 3:
                raise ShapeMismatch(f"recurrent network expects (B, T, {N_FEATURES}), got {a.shape}")
            a, caches["lstm"] = lstm_forward(self.lstm, a)
            if drop:
                a, mask = dropout_forward(a, rate, rng, True)
                caches["masks"].append(mask)
        elif a.ndim != 2:
            raise ShapeMismatch(f"dense network expects (B, {N_FEATURES}), got {a.shape}")
        last = len(self.dense) - 1
        for k, layer in enumerate(self.dense):
            a, cache = dense_forward(layer, a, activation="linear" if k == last else None)
            caches["dense"].append(cache)
            if drop and k < last:
                a, mask = dropout_forward(a, rate, rng, True)
                caches["masks"].append(mask)
        return a, caches

    def backward(self, caches, dlogits) -> list[np.ndarray]:
        """Gradients aligned with :attr:`params` given the gradient of the logits."""
        masks = list(caches["masks"])
        grads: list[np.ndarray] = []
        d = dlogits
        last = len(self.dense) - 1
        for k in range(last, -1, -1):
            if masks and k < last:
                d = dropout_backward(d, masks.pop())
            d, dW, db = dense_backward(self.dense[k], caches["dense"][k], d)
            grads = [dW, db] + grads
        if self.lstm is not None:
            if masks:
                d = dropout_backward(d, masks.pop())
            g = lstm_backward(self.lstm, caches["lstm"], d)
            grads = [g["W"], g["U"], g["b"]] + grads
        return grads

    def predict_proba(self, X) -> np.ndarray:
        """Softmax outputs in inference mode.

        Recurrent networks also accept a list of ``(T_k, 16)`` arrays of
        varying length; they are evaluated one length group at a time.
        """
        if self.lstm is not None and isinstance(X, (list, tuple)):
            out = np.empty((len(X), self.spec.output_size))
            by_len: dict[int, list[int]] = {}
            for idx, seq in enumerate(X):
                by_len.setdefault(len(seq), []).append(idx)
            for idxs in by_len.values():
                logits, _ = self.forward(np.stack([X[i] for i in idxs]))
                out[idxs] = softmax(logits)
            return out
        logits, _ = self.forward(X)
        return softmax(logits)


def build(spec: NetworkSpec, seed: int, zero_output: bool = False) -> Network:
    """Instantiate ``spec`` with seeded initial weights.

    Dense hidden layers use He-uniform weights, the softmax layer a Xavier
    draw scaled by :data:`OUTPUT_INIT_SCALE` (or zeros with ``zero_output``),
    LSTM blocks Xavier-uniform per gate with forget-gate bias 1. Other biases
    start at zero.
    """
    rng = np.random.default_rng([seed, 1])
    sizes = [spec.input_size, *spec.hidden_sizes, spec.output_size]
    lstm = None
    start = 0
    if spec.first_hidden_is_lstm:
        i, h = sizes[0], sizes[1]
        W = np.vstack([xavier_uniform(rng, i, h, (h, i)) for _ in range(4)])
        U = np.vstack([xavier_uniform(rng, h, h, (h, h)) for _ in range(4)])
        b = np.zeros(4 * h)
        b[h:2 * h] = FORGET_BIAS
        lstm = LSTMLayer(W, U, b)
        start = 1
    dense = []
    pairs = list(zip(sizes[start:-1], sizes[start + 1:]))
    for k, (n_in, n_out) in enumerate(pairs):
        if k == len(pairs) - 1:
            if zero_output:
                W = np.zeros((n_out, n_in))
            else:
                W = OUTPUT_INIT_SCALE * xavier_uniform(rng, n_in, n_out, (n_out, n_in))
            dense.append(DenseLayer(W, np.zeros(n_out), "softmax"))
        else:
            dense.append(DenseLayer(he_uniform(rng, n_in, (n_out, n_in)), np.zeros(n_out), "relu"))
    return Network(spec, dense, lstm)


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

MAGIC = b"DYADNN1"
FORMAT_VERSION = 1


def model_to_bytes(n: Network) -> bytes:
    """Serialise to the little-endian ``DYADNN1`` container (see README)."""
    s = n.spec
    name = s.name.encode("utf-8")
    parts = [
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<I", len(name)), name,
        struct.pack("<I", s.input_size),
        struct.pack("<I", len(s.hidden_sizes)),
        struct.pack(f"<{len(s.hidden_sizes)}I", *s.hidden_sizes),
        struct.pack("<B", int(s.first_hidden_is_lstm)),
        struct.pack("<I", s.output_size),
        struct.pack("<B", int(s.l2_enabled)),
        struct.pack("<d", s.dropout_rate),
        struct.pack("<d", s.learning_rate),
        struct.pack("<I", s.epochs),
        struct.pack("<Q", n.n_parameters),
    ]
    parts += [np.ascontiguousarray(p, dtype="<f8").tobytes() for p in n.params]
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptModelFile(
                f"model file truncated: need {n} bytes at offset {self.pos}, have {len(self.buf) - self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def model_from_bytes(buf: bytes) -> Network:
    r = _Reader(buf)
    if r.take(len(MAGIC)) != MAGIC:
        raise CorruptModelFile("bad magic: not a DYADNN1 model file")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CorruptModelFile(f"unsupported model file version {version} (expected {FORMAT_VERSION})")
    (name_len,) = r.unpack("<I")
    try:
        name = r.take(name_len).decode("utf-8")
    except UnicodeDecodeError:
        raise CorruptModelFile("model name is not valid UTF-8") from None
    (input_size,) = r.unpack("<I")
    (n_hidden,) = r.unpack("<I")
    hidden = r.unpack(f"<{n_hidden}I")
    (lstm_flag,) = r.unpack("<B")
    (output_size,) = r.unpack("<I")
    (l2_flag,) = r.unpack("<B")
    (dropout,) = r.unpack("<d")
    (lr,) = r.unpack("<d")
    (epochs,) = r.unpack("<I")
    (n_params,) = r.unpack("<Q")
    try:
        spec = NetworkSpec(name, hidden, output_size, bool(lstm_flag), bool(l2_flag),
                           dropout, lr, epochs, input_size)
    except InvalidSpec as exc:
        raise CorruptModelFile(f"invalid spec in model file: {exc}") from None
    if n_params != parameter_count(spec):
        raise CorruptModelFile(
            f"parameter count {n_params} does not match the spec ({parameter_count(spec)})")
    net = build(spec, 0, zero_output=True)
    for p in net.params:
        p[...] = np.frombuffer(r.take(8 * p.size), dtype="<f8").reshape(p.shape)
    if r.pos != len(buf):
        raise CorruptModelFile(f"{len(buf) - r.pos} trailing bytes after parameters")
    return net


def save_model(n: Network, path) -> None:
    Path(path).write_bytes(model_to_bytes(n))


def load_model(path) -> Network:
    return model_from_bytes(Path(path).read_bytes())
