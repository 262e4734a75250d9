"""Deterministic synthetic dyad trajectories with per-category statistics.

Each experiment is a straight walk along one of the four axis directions.
Pedestrian 1 walks on the axis line itself and pedestrian 2 beside it at the
current interpersonal distance, so the pair distance of every reading is
reproduced exactly from the positions. Per-reading distance, pair speed and
speed asymmetry are Gaussian draws around the category profile.
"""

from __future__ import annotations

import configparser
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from importlib import resources

import numpy as np

from .data import Dataset, Experiment, RelationshipLabel
from .errors import InvalidProfile

MODES = ("separable", "overlapping")
NOMINAL_HEIGHT = 1.0
_HEADINGS = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))


@dataclass(frozen=True)
class CategoryProfile:
    distance_mean: float
    distance_jitter: float
    speed_mean: float
    speed_jitter: float
    asymmetry_mean: float
    duration_min: float
    duration_max: float
    period: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise InvalidProfile(f"{f.name} must be a finite number, got {v!r}")
        if min(self.distance_mean, self.speed_mean, self.asymmetry_mean) < 0:
            raise InvalidProfile("profile means must be non-negative")
        if min(self.distance_jitter, self.speed_jitter) < 0:
            raise InvalidProfile("profile jitters must be non-negative")
        if self.duration_min < 0 or self.duration_max < self.duration_min:
            raise InvalidProfile("duration range must satisfy 0 <= min <= max")
        if self.period <= 0:
            raise InvalidProfile("sampling period must be positive")


def parse_profiles(text: str, mode: str) -> dict[RelationshipLabel, CategoryProfile]:
    """Read the ``<mode>.<label>`` sections of a profile INI document."""
    cp = configparser.ConfigParser()
    cp.read_string(text)
    names = [f.name for f in fields(CategoryProfile)]
    out = {}
    for label in RelationshipLabel:
        section = f"{mode}.{label.key}"
        if section not in cp:
            continue
        sec = cp[section]
        unknown = set(sec) - set(names)
        if unknown:
            raise InvalidProfile(f"[{section}] unknown keys: {', '.join(sorted(unknown))}")
        try:
            out[label] = CategoryProfile(**{n: sec.getfloat(n) for n in names})
        except (TypeError, ValueError) as exc:
            raise InvalidProfile(f"[{section}] {exc}") from None
    if not out:
        raise InvalidProfile(f"no profiles for mode {mode!r}")
    return out


def load_profiles(path, mode: str = "separable") -> dict[RelationshipLabel, CategoryProfile]:
    with open(path, encoding="utf-8") as fh:
        return parse_profiles(fh.read(), mode)


def default_profiles(mode: str = "separable") -> dict[RelationshipLabel, CategoryProfile]:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    text = resources.files(__package__).joinpath("profiles.ini").read_text(encoding="utf-8")
    return parse_profiles(text, mode)


def reading_count(duration: float, period: float) -> int:
    return math.floor(duration / period + 1e-9) + 1


def generate_experiment(exp_id: str, label: RelationshipLabel, profile: CategoryProfile,
                        rng: np.random.Generator) -> Experiment:
    p = profile
    duration = rng.uniform(p.duration_min, p.duration_max)
    n = reading_count(duration, p.period)
    ux, uy = _HEADINGS[rng.integers(4)]
    nx, ny = -uy, ux
    start = rng.uniform(-10.0, 10.0)
    first_is_faster = rng.random() < 0.5

    dist = np.abs(p.distance_mean + p.distance_jitter * rng.standard_normal(n))
    speed = np.abs(p.speed_mean + p.speed_jitter * rng.standard_normal(n))
    asym = np.abs(p.asymmetry_mean + p.speed_jitter * rng.standard_normal(n))
    asym = np.minimum(asym, 2.0 * speed)
    fast = speed + asym / 2.0
    slow = np.maximum(speed - asym / 2.0, 0.0)
    vt1, vt2 = (fast, slow) if first_is_faster else (slow, fast)

    t = np.arange(n) * p.period
    along = start + np.concatenate([[0.0], np.cumsum(speed[:-1] * p.period)])
    rows = np.empty((n, 13))
    rows[:, 0] = t
    rows[:, 1] = along * ux
    rows[:, 2] = along * uy
    rows[:, 3] = NOMINAL_HEIGHT
    rows[:, 4] = rows[:, 1] + dist * nx
    rows[:, 5] = rows[:, 2] + dist * ny
    rows[:, 6] = NOMINAL_HEIGHT
    rows[:, 7] = vt1 * ux
    rows[:, 8] = vt1 * uy
    rows[:, 9] = vt2 * ux
    rows[:, 10] = vt2 * uy
    rows[:, 11] = np.hypot(rows[:, 7], rows[:, 8])
    rows[:, 12] = np.hypot(rows[:, 9], rows[:, 10])
    return Experiment(exp_id, rows, label)


def generate(profiles, counts, seed: int, jobs: int = 1) -> Dataset:
    """Generate ``counts[label]`` experiments per label, in label order.

    Every experiment draws from its own generator seeded with
    ``(seed, label, index)``, so ``jobs`` never changes the output.
    """
    tasks = []
    for label in RelationshipLabel:
        count = int(counts.get(label, 0))
        if count < 0:
            raise InvalidProfile(f"negative count for {label.key}")
        if count and label not in profiles:
            raise InvalidProfile(f"no profile for requested label {label.key}")
        for k in range(count):
            tasks.append((label, k))

    def make(task):
        label, k = task
        rng = np.random.default_rng([seed, int(label), k])
        return generate_experiment(f"{label.key}-{k:04d}", label, profiles[label], rng)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            experiments = list(pool.map(make, tasks))
    else:
        experiments = [make(t) for t in tasks]
    return Dataset(tuple(experiments))


# class sizes of the original 867-experiment corpus
REFERENCE_COUNTS = {
    RelationshipLabel.COLLEAGUES: 267,
    RelationshipLabel.COUPLE: 96,
    RelationshipLabel.FAMILY: 218,
    RelationshipLabel.FRIENDSHIP: 286,
}


def parse_counts(text: str) -> dict[RelationshipLabel, int]:
    """Parse ``colleagues=267,couple=96,...``."""
    out = {}
    for item in text.split(","):
        if not item.strip():
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"count entry {item!r} is not label=count")
        label = RelationshipLabel.parse(key)
        out[label] = int(value)
        if out[label] < 0:
            raise ValueError(f"count for {key} is negative")
    return out
