"""Feature extraction: pair distance and speed statistics, averaged vectors, sequences.

Every feature vector has 16 slots in the order of :data:`FEATURE_NAMES`. The
first slot is the experiment duration for averaged vectors and the raw
detection time for sequence steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import P1, P2, T, VT1, VT2, Experiment, RelationshipLabel, TrajectoryReading
from .errors import EmptyInput, ShapeMismatch

FEATURE_NAMES = (
    "duration",
    "p1x", "p1y", "p1z",
    "p2x", "p2y", "p2z",
    "v1x", "v1y",
    "v2x", "v2y",
    "vt1", "vt2",
    "dist", "vel_rel", "vel_tot",
)
N_FEATURES = len(FEATURE_NAMES)


def derived_columns(readings: np.ndarray) -> np.ndarray:
    """Vectorised pair statistics for an (n, 13) reading array, returned as (n, 3)."""
    diff = readings[:, P2] - readings[:, P1]
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    vt1 = readings[:, VT1]
    vt2 = readings[:, VT2]
    vel_relative = np.abs(vt1 - vt2)
    vel_total = (vt1 + vt2) / 2.0
    return np.column_stack([dist, vel_relative, vel_total])


def derived_features(r: TrajectoryReading) -> tuple[float, float, float]:
    """Return ``(dist, vel_relative, vel_total)`` for one reading."""
    dist, vel_rel, vel_tot = derived_columns(r.as_array()[None, :])[0]
    return float(dist), float(vel_rel), float(vel_tot)


def _step_matrix(readings: np.ndarray) -> np.ndarray:
    return np.hstack([readings, derived_columns(readings)])


def experiment_to_vector(e: Experiment) -> np.ndarray:
    """Average every raw and derived column over the readings; slot 0 holds the duration.

    Column sums use :func:`math.fsum`, so means of cancelling coordinates stay
    accurate to a few ulps.
    """
    steps = _step_matrix(e.readings)
    vec = np.array([math.fsum(col) for col in steps.T]) / steps.shape[0]
    vec[0] = e.readings[-1, T] - e.readings[0, T]
    return vec


def experiment_to_sequence(e: Experiment) -> np.ndarray:
    """One 16-vector per reading, in time order, raw detection time in slot 0."""
    return _step_matrix(e.readings)


@dataclass(frozen=True)
class FeatureSequence:
    steps: np.ndarray
    label: RelationshipLabel

    def __len__(self) -> int:
        return self.steps.shape[0]


def dataset_vectors(experiments) -> np.ndarray:
    return np.vstack([experiment_to_vector(e) for e in experiments])


def dataset_sequences(experiments) -> list[FeatureSequence]:
    return [FeatureSequence(experiment_to_sequence(e), e.label) for e in experiments]


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64)
        std = np.array(self.std, dtype=np.float64)
        if mean.shape != (N_FEATURES,) or std.shape != (N_FEATURES,):
            raise ShapeMismatch(f"standardizer needs {N_FEATURES} means and deviations")
        if np.any(std <= 0):
            raise ValueError("standard deviations must be positive")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def __eq__(self, other):
        if not isinstance(other, Standardizer):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.std, other.std)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return apply_standardizer(self, v)

    def to_text(self) -> str:
        lines = ["# format: standardizer/1", "feature\tmean\tstd"]
        for name, m, s in zip(FEATURE_NAMES, self.mean, self.std):
            lines.append(f"{name}\t{float(m)!r}\t{float(s)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Standardizer":
        rows = [ln.split("\t") for ln in text.splitlines()
                if ln and not ln.startswith("#")]
        if not rows or rows[0] != ["feature", "mean", "std"] or len(rows) != N_FEATURES + 1:
            raise ValueError("not a standardizer/1 file")
        body = rows[1:]
        if tuple(r[0] for r in body) != FEATURE_NAMES:
            raise ValueError("standardizer feature names do not match")
        return cls(np.array([float(r[1]) for r in body]), np.array([float(r[2]) for r in body]))


def fit_standardizer(vectors) -> Standardizer:
    """Population mean/std per column; zero-variance columns get std 1."""
    X = np.asarray(vectors, dtype=np.float64)
    if X.size == 0:
        raise EmptyInput("cannot fit a standardizer on zero vectors")
    X = X.reshape(-1, N_FEATURES)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return Standardizer(mean, std)


def apply_standardizer(s: Standardizer, v) -> np.ndarray:
    """Works on a single vector, a batch, or a (batch, time, 16) stack."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != N_FEATURES:
        raise ShapeMismatch(f"expected {N_FEATURES} features in the last axis, got {v.shape}")
    return (v - s.mean) / s.std
