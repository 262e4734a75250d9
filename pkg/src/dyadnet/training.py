"""End-to-end training and evaluation runs."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .data import BinaryLabel, Dataset, RelationshipLabel, merge_to_binary, split_dataset
from .errors import ShapeMismatch
from .features import (
    Standardizer,
    apply_standardizer,
    dataset_vectors,
    experiment_to_sequence,
    fit_standardizer,
)
from .models import Network, NetworkSpec, build
from .numerics import one_hot, sgd_step, softmax_cross_entropy

log = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 32
DEFAULT_L2_LAMBDA = 1e-3
DEFAULT_TRAIN_FRACTION = 0.9


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int = DEFAULT_BATCH_SIZE
    l2_lambda: float = DEFAULT_L2_LAMBDA
    dropout_rate: float = 0.0
    seed: int = 0
    train_fraction: float = DEFAULT_TRAIN_FRACTION

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be non-negative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    @classmethod
    def for_spec(cls, spec: NetworkSpec, **overrides) -> "TrainConfig":
        """Take learning rate, epochs and dropout from the spec unless overridden."""
        values = dict(learning_rate=spec.learning_rate, epochs=spec.epochs,
                      dropout_rate=spec.dropout_rate)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    l2_penalty: float
    accuracy: float


@dataclass
class TrainReport:
    """Per-epoch log plus final accuracies (percent).

    Epoch accuracy is measured on the forward passes made during that epoch,
    i.e. before each batch's update and with dropout active. Wall time is kept
    out of comparisons and out of :meth:`to_text` so reports stay reproducible.
    """

    model: str
    seed: int
    batch_size: int
    l2_lambda: float
    learning_rate: float
    dropout_rate: float
    train_fraction: float
    n_train: int
    n_test: int
    epochs: list[EpochStats] = field(default_factory=list)
    train_accuracy: float = float("nan")
    test_accuracy: float = float("nan")
    standardizer: Standardizer | None = field(default=None, repr=False)
    wall_seconds: float = field(default=0.0, compare=False)

    def to_text(self) -> str:
        lines = ["# format: epoch-log/1", "epoch\tloss\tl2_penalty\ttrain_accuracy"]
        for e in self.epochs:
            lines.append(f"{e.epoch}\t{e.loss!r}\t{e.l2_penalty!r}\t{e.accuracy!r}")
        lines.append("# summary")
        summary = [
            ("model", self.model),
            ("seed", self.seed),
            ("batch_size", self.batch_size),
            ("l2_lambda", repr(self.l2_lambda)),
            ("learning_rate", repr(self.learning_rate)),
            ("dropout_rate", repr(self.dropout_rate)),
            ("train_fraction", repr(self.train_fraction)),
            ("epochs", len(self.epochs)),
            ("n_train", self.n_train),
            ("n_test", self.n_test),
            ("final_train_accuracy", repr(self.train_accuracy)),
            ("final_test_accuracy", repr(self.test_accuracy)),
        ]
        lines += [f"{k}\t{v}" for k, v in summary]
        return "\n".join(lines) + "\n"


def label_space(n_classes: int):
    if n_classes == 4:
        return RelationshipLabel
    if n_classes == 2:
        return BinaryLabel
    raise ShapeMismatch(f"no label space with {n_classes} classes")


def target_indices(experiments, n_classes: int) -> np.ndarray:
    if n_classes == 2:
        return np.array([int(merge_to_binary(e.label)) for e in experiments], dtype=np.int64)
    label_space(n_classes)
    return np.array([int(e.label) for e in experiments], dtype=np.int64)


def prepare_inputs(experiments, recurrent: bool, standardizer: Standardizer | None = None):
    """Feature arrays for a split: a (n, 16) matrix, or a list of (T_k, 16) sequences."""
    if recurrent:
        seqs = [experiment_to_sequence(e) for e in experiments]
        if standardizer is not None:
            seqs = [apply_standardizer(standardizer, s) for s in seqs]
        return seqs
    X = dataset_vectors(experiments)
    if standardizer is not None:
        X = apply_standardizer(standardizer, X)
    return X


def fit_inputs_standardizer(experiments, recurrent: bool) -> Standardizer:
    raw = prepare_inputs(experiments, recurrent)
    return fit_standardizer(np.vstack(raw) if recurrent else raw)


def _batches(rng, n: int, batch_size: int, lengths=None) -> list[np.ndarray]:
    """Shuffled mini-batch index lists; the incomplete tail batch is kept.

    With ``lengths`` every batch holds sequences of one length: each length
    group (ascending length) is permuted and chunked, then the chunk order
    is permuted.
    """
    if lengths is None:
        order = rng.permutation(n)
        return [order[i:i + batch_size] for i in range(0, n, batch_size)]
    groups: dict[int, list[int]] = {}
    for idx, ln in enumerate(lengths):
        groups.setdefault(ln, []).append(idx)
    chunks = []
    for ln in sorted(groups):
        members = np.asarray(groups[ln])[rng.permutation(len(groups[ln]))]
        chunks += [members[i:i + batch_size] for i in range(0, members.size, batch_size)]
    return [chunks[i] for i in rng.permutation(len(chunks))]


def _gather(inputs, idx, recurrent: bool):
    if recurrent:
        return np.stack([inputs[i] for i in idx])
    return inputs[idx]


def l2_penalty(net: Network, l2_lambda: float) -> float:
    """``l2_lambda / 2 * sum |W|^2`` over weight matrices; the gradient matches :func:`sgd_step`."""
    if not l2_lambda:
        return 0.0
    total = sum(float(np.sum(p * p)) for p, d in zip(net.params, net.decay_mask) if d)
    return 0.5 * l2_lambda * total


def _check_classes(name: str, targets: np.ndarray, n_classes: int) -> None:
    missing = sorted(set(range(n_classes)) - set(targets.tolist()))
    if missing:
        names = [label_space(n_classes)(m).key for m in missing]
        log.warning("%s split has no examples of %s", name, ", ".join(names))


def fit_network(net: Network, inputs, targets: np.ndarray, cfg: TrainConfig,
                l2_lambda: float, rng: np.random.Generator) -> list[EpochStats]:
    """Run ``cfg.epochs`` epochs of mini-batch SGD on ``net`` in place."""
    recurrent = net.lstm is not None
    n = len(targets)
    n_classes = net.spec.output_size
    lengths = [len(s) for s in inputs] if recurrent else None
    Y = one_hot(targets, n_classes)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        loss_sum = 0.0
        correct = 0
        for idx in _batches(rng, n, cfg.batch_size, lengths):
            X = _gather(inputs, idx, recurrent)
            logits, caches = net.forward(X, training=True, rng=rng, dropout_rate=cfg.dropout_rate)
            loss, dlogits = softmax_cross_entropy(logits, Y[idx])
            loss_sum += loss * len(idx)
            correct += int(np.sum(np.argmax(logits, axis=1) == targets[idx]))
            grads = net.backward(caches, dlogits)
            sgd_step(net.params, grads, cfg.learning_rate, l2_lambda, net.decay_mask)
        history.append(EpochStats(epoch, loss_sum / n, l2_penalty(net, l2_lambda), 100.0 * correct / n))
    return history


def train(spec: NetworkSpec, ds: Dataset, cfg: TrainConfig) -> tuple[Network, TrainReport]:
    """Split, standardise on the training side, build and fit ``spec``."""
    started = time.perf_counter()
    train_ds, test_ds = split_dataset(ds, cfg.train_fraction, cfg.seed)
    recurrent = spec.first_hidden_is_lstm
    n_classes = spec.output_size
    standardizer = fit_inputs_standardizer(train_ds, recurrent)
    X_train = prepare_inputs(train_ds, recurrent, standardizer)
    y_train = target_indices(train_ds, n_classes)
    _check_classes("training", y_train, n_classes)
    _check_classes("test", target_indices(test_ds, n_classes), n_classes)

    l2_lambda = cfg.l2_lambda if spec.l2_enabled else 0.0
    net = build(spec, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 2])
    history = fit_network(net, X_train, y_train, cfg, l2_lambda, rng)

    train_acc, _ = evaluate(net, train_ds, standardizer)
    test_acc, _ = evaluate(net, test_ds, standardizer)
    report = TrainReport(
        model=spec.name, seed=cfg.seed, batch_size=cfg.batch_size, l2_lambda=l2_lambda,
        learning_rate=cfg.learning_rate, dropout_rate=cfg.dropout_rate,
        train_fraction=cfg.train_fraction, n_train=len(train_ds), n_test=len(test_ds),
        epochs=history, train_accuracy=train_acc, test_accuracy=test_acc,
        standardizer=standardizer, wall_seconds=time.perf_counter() - started,
    )
    return net, report


def evaluate(net: Network, ds: Dataset, standardizer: Standardizer, labels=None):
    """Accuracy (percent) and ``(exp_id, true, predicted)`` triples.

    Labels are binary when the network has two outputs. Ties in the softmax
    output go to the lowest class index.
    """
    n_classes = net.spec.output_size
    space = label_space(n_classes)
    if labels is not None and len(labels) != n_classes:
        raise ShapeMismatch(f"network has {n_classes} outputs but the label space has {len(labels)}")
    if len(ds) == 0:
        return float("nan"), []
    inputs = prepare_inputs(ds, net.lstm is not None, standardizer)
    probs = net.predict_proba(inputs)
    pred = np.argmax(probs, axis=1)
    true = target_indices(ds, n_classes)
    predictions = [(e.id, space(int(t)), space(int(p))) for e, t, p in zip(ds, true, pred)]
    accuracy = 100.0 * int(np.sum(pred == true)) / len(ds)
    return accuracy, predictions
