"""Trajectory data model, CSV ingestion and train/test splitting.

An experiment is stored as a ``(n, 13)`` float64 array whose columns follow
:data:`READING_COLUMNS`; :class:`TrajectoryReading` is the per-row view.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    EmptyFile,
    EmptySplit,
    InvalidExperiment,
    MalformedRow,
    NonMonotonicTime,
    UnknownLabel,
)

READING_COLUMNS = (
    "t",
    "p1x", "p1y", "p1z",
    "p2x", "p2y", "p2z",
    "v1x", "v1y",
    "v2x", "v2y",
    "vt1", "vt2",
)
CSV_HEADER = ("exp_id",) + READING_COLUMNS + ("label",)

# Column indices into an experiment's reading array.
T = 0
P1 = slice(1, 4)
P2 = slice(4, 7)
V1 = slice(7, 9)
V2 = slice(9, 11)
VT1 = 11
VT2 = 12


class RelationshipLabel(IntEnum):
    COLLEAGUES = 0
    COUPLE = 1
    FAMILY = 2
    FRIENDSHIP = 3

    @property
    def key(self) -> str:
        return self.name.lower()

    @property
    def title(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, text: str) -> "RelationshipLabel":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise UnknownLabel(f"unknown relationship label {text!r}") from None


class BinaryLabel(IntEnum):
    ACQUAINTANCES = 0
    INTIMATE = 1

    @property
    def key(self) -> str:
        return self.name.lower()

    @property
    def title(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, text: str) -> "BinaryLabel":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise UnknownLabel(f"unknown binary label {text!r}") from None


def merge_to_binary(label: RelationshipLabel) -> BinaryLabel:
    """Colleagues become acquaintances; couple, family and friendship are intimate."""
    label = RelationshipLabel(label)
    if label is RelationshipLabel.COLLEAGUES:
        return BinaryLabel.ACQUAINTANCES
    return BinaryLabel.INTIMATE


@dataclass(frozen=True)
class TrajectoryReading:
    t: float
    p1: tuple[float, float, float]
    p2: tuple[float, float, float]
    v1: tuple[float, float]
    v2: tuple[float, float]
    vt1: float
    vt2: float

    def __post_init__(self):
        values = self.as_array()
        if values.shape != (13,):
            raise MalformedRow(f"a reading has 13 components, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise MalformedRow("reading contains non-finite values")
        if self.vt1 < 0 or self.vt2 < 0:
            raise MalformedRow("total velocities must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.t, *self.p1, *self.p2, *self.v1, *self.v2, self.vt1, self.vt2],
            dtype=np.float64,
        )

    @classmethod
    def from_array(cls, row) -> "TrajectoryReading":
        r = [float(x) for x in row]
        if len(r) != 13:
            raise MalformedRow(f"a reading has 13 components, got {len(r)}")
        return cls(r[0], tuple(r[1:4]), tuple(r[4:7]), tuple(r[7:9]),
                   tuple(r[9:11]), r[11], r[12])


def _check_readings(readings: np.ndarray, exp_id: str) -> None:
    if readings.ndim != 2 or readings.shape[1] != 13:
        raise InvalidExperiment(f"{exp_id}: readings must have shape (n, 13), got {readings.shape}")
    if readings.shape[0] == 0:
        raise InvalidExperiment(f"{exp_id}: experiment has no readings")
    if not np.all(np.isfinite(readings)):
        raise MalformedRow(f"{exp_id}: non-finite value in readings")
    if np.any(readings[:, VT1] < 0) or np.any(readings[:, VT2] < 0):
        raise MalformedRow(f"{exp_id}: negative total velocity")
    if readings.shape[0] > 1 and np.any(np.diff(readings[:, T]) <= 0):
        raise NonMonotonicTime(f"{exp_id}: detection times are not strictly increasing")


@dataclass(frozen=True, eq=False)
class Experiment:
    """One labelled pedestrian pair; ``readings`` is a read-only (n, 13) array."""

    id: str
    readings: np.ndarray
    label: RelationshipLabel

    def __post_init__(self):
        arr = np.array(self.readings, dtype=np.float64, copy=True)
        _check_readings(arr, self.id)
        arr.setflags(write=False)
        object.__setattr__(self, "readings", arr)
        object.__setattr__(self, "label", RelationshipLabel(self.label))

    def __len__(self) -> int:
        return self.readings.shape[0]

    def __iter__(self) -> Iterator[TrajectoryReading]:
        for row in self.readings:
            yield TrajectoryReading.from_array(row)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Experiment):
            return NotImplemented
        return (self.id == other.id and self.label == other.label
                and np.array_equal(self.readings, other.readings))

    def __hash__(self) -> int:
        return hash((self.id, self.label, len(self)))

    def with_label(self, label: RelationshipLabel) -> "Experiment":
        return Experiment(self.id, self.readings, label)

    @classmethod
    def from_readings(cls, exp_id: str, readings: Iterable[TrajectoryReading],
                      label: RelationshipLabel) -> "Experiment":
        rows = [r.as_array() for r in readings]
        if not rows:
            raise InvalidExperiment(f"{exp_id}: experiment has no readings")
        return cls(exp_id, np.vstack(rows), label)


@dataclass(frozen=True)
class Dataset:
    experiments: tuple[Experiment, ...]
    counts: dict[RelationshipLabel, int] = field(init=False)

    def __post_init__(self):
        exps = tuple(self.experiments)
        object.__setattr__(self, "experiments", exps)
        tally = Counter(e.label for e in exps)
        object.__setattr__(self, "counts", {lab: tally.get(lab, 0) for lab in RelationshipLabel})

    def __len__(self) -> int:
        return len(self.experiments)

    def __iter__(self) -> Iterator[Experiment]:
        return iter(self.experiments)

    def __getitem__(self, i):
        return self.experiments[i]

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.experiments]

    def binary_counts(self) -> dict[BinaryLabel, int]:
        out = {lab: 0 for lab in BinaryLabel}
        for lab, n in self.counts.items():
            out[merge_to_binary(lab)] += n
        return out


def _parse_float(text: str, lineno: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(f"line {lineno}: column {column!r} is not numeric: {text!r}") from None
    if not math.isfinite(value):
        raise MalformedRow(f"line {lineno}: column {column!r} is not finite: {text!r}")
    return value


def parse_dataset(text: str) -> Dataset:
    """Parse dataset CSV text (see :data:`CSV_HEADER`)."""
    if not text.strip():
        raise EmptyFile("dataset file is empty")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise MalformedRow(f"line 1: expected header {','.join(CSV_HEADER)}")

    groups: list[tuple[str, RelationshipLabel, list[list[float]]]] = []
    seen: set[str] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise MalformedRow(f"line {lineno}: expected {len(CSV_HEADER)} columns, got {len(row)}")
        exp_id = row[0]
        label = RelationshipLabel.parse(row[-1])
        values = [_parse_float(v, lineno, c) for v, c in zip(row[1:-1], READING_COLUMNS)]
        if values[VT1] < 0 or values[VT2] < 0:
            raise MalformedRow(f"line {lineno}: negative total velocity")
        if groups and groups[-1][0] == exp_id:
            cur_id, cur_label, rows = groups[-1]
            if label != cur_label:
                raise MalformedRow(f"line {lineno}: experiment {exp_id!r} changes label")
            if values[T] <= rows[-1][T]:
                raise NonMonotonicTime(
                    f"line {lineno}: experiment {exp_id!r} time {values[T]!r} "
                    f"does not exceed previous {rows[-1][T]!r}")
            rows.append(values)
        else:
            if exp_id in seen:
                raise MalformedRow(f"line {lineno}: rows of experiment {exp_id!r} are not contiguous")
            seen.add(exp_id)
            groups.append((exp_id, label, [values]))
    if not groups:
        raise EmptyFile("dataset file has a header but no rows")
    return Dataset(tuple(Experiment(i, np.array(rows), lab) for i, lab, rows in groups))


def load_dataset(path) -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    return parse_dataset(text)


def format_dataset(ds: Dataset) -> str:
    """Canonical CSV text: shortest round-trip float repr, ``\\n`` line ends."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for exp in ds:
        for row in exp.readings:
            writer.writerow([exp.id, *(repr(float(x)) for x in row), exp.label.key])
    return buf.getvalue()


def write_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(format_dataset(ds), encoding="utf-8")


def split_dataset(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Shuffle experiments with ``seed`` and cut at floor(n * train_fraction).

    The permutation comes from numpy's PCG64 generator, so the split does not
    depend on the labels and is identical on every call with the same seed.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(ds)
    if n == 0:
        raise EmptySplit("cannot split an empty dataset")
    # the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    n_train = math.floor(n * train_fraction + 1e-9)
    if n_train == 0 or n_train == n:
        raise EmptySplit(f"{n} experiments at fraction {train_fraction} leave an empty side "
                         f"({n_train}/{n - n_train})")
    order = np.random.default_rng(seed).permutation(n)
    train = tuple(ds.experiments[i] for i in order[:n_train])
    test = tuple(ds.experiments[i] for i in order[n_train:])
    return Dataset(train), Dataset(test)
