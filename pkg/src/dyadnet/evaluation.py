"""Confusion matrices in row-normalised percentage form, binary merging and text tables."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path

import numpy as np

from .data import BinaryLabel, RelationshipLabel, merge_to_binary
from .errors import LabelOutOfSpace, ShapeMismatch

CORNER = "real \\ predicted"
ZERO_SUPPORT_MARK = "*"
ZERO_SUPPORT_NOTE = "* no examples of this class; row shown as zeros"


def half_up(value, places: int = 2) -> str:
    """Round half away from zero on the exact decimal value (not the binary float)."""
    if isinstance(value, Fraction):
        scale = 10 ** places
        q = (abs(value) * scale + Fraction(1, 2)).__floor__()
        sign = "-" if value < 0 and q else ""
        return f"{sign}{q // scale}.{q % scale:0{places}d}"
    quant = Decimal(1).scaleb(-places)
    return str(Decimal(str(value)).quantize(quant, rounding=ROUND_HALF_UP))


def _coerce(label, space):
    if isinstance(label, space):
        return label
    if isinstance(label, str):
        try:
            return space.parse(label)
        except Exception:
            raise LabelOutOfSpace(f"{label!r} is not a {space.__name__}") from None
    raise LabelOutOfSpace(f"{label!r} is not a {space.__name__}")


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """``counts[i, j]`` = examples of true class ``i`` predicted as ``j``."""

    space: type
    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        k = len(self.space)
        if counts.shape != (k, k):
            raise ShapeMismatch(f"counts must be {k}x{k}, got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.space is other.space and np.array_equal(self.counts, other.counts)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab.title for lab in self.space)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def zero_support_rows(self) -> list[int]:
        return [i for i, s in enumerate(self.support) if s == 0]

    @property
    def percentages(self) -> np.ndarray:
        """Rows scaled to 100; rows without support are all zeros."""
        support = self.support[:, None].astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            pct = np.where(support > 0, 100.0 * self.counts / support, 0.0)
        return pct

    def rounded_percentages(self) -> list[list[str]]:
        out = []
        for row, s in zip(self.counts, self.support):
            if s == 0:
                out.append(["0.00"] * len(row))
            else:
                out.append([half_up(Fraction(100 * int(c), int(s))) for c in row])
        return out

    @property
    def accuracy(self) -> float:
        """Overall accuracy in percent, computed from the trace."""
        if self.total == 0:
            return float("nan")
        return 100.0 * int(np.trace(self.counts)) / self.total

    def recall(self) -> np.ndarray:
        """Per-class recall in percent (the diagonal of :attr:`percentages`)."""
        return np.diag(self.percentages).copy()


def confusion(predictions, space=RelationshipLabel) -> ConfusionMatrix:
    """Tally ``(true, predicted)`` pairs; ``(exp_id, true, predicted)`` triples also work."""
    k = len(space)
    counts = np.zeros((k, k), dtype=np.int64)
    for item in predictions:
        true, pred = item[-2], item[-1]
        counts[int(_coerce(true, space)), int(_coerce(pred, space))] += 1
    return ConfusionMatrix(space, counts)


def merge_confusion(cm4: ConfusionMatrix) -> ConfusionMatrix:
    """Block-sum a 4-class matrix into acquaintances/intimate."""
    if cm4.space is not RelationshipLabel:
        raise ShapeMismatch("merge_confusion needs a 4-class relationship matrix")
    counts = np.zeros((2, 2), dtype=np.int64)
    for i in RelationshipLabel:
        for j in RelationshipLabel:
            counts[int(merge_to_binary(i)), int(merge_to_binary(j))] += cm4.counts[i, j]
    return ConfusionMatrix(BinaryLabel, counts)


def format_table(row_labels, col_labels, cells, flagged=()) -> str:
    """Fixed-width grid with right-aligned cells; flagged rows get a marker."""
    names = [lab + (ZERO_SUPPORT_MARK if i in flagged else "") for i, lab in enumerate(row_labels)]
    first = max(len(CORNER), *(len(n) for n in names))
    widths = [max(len(c), *(len(r[j]) for r in cells)) for j, c in enumerate(col_labels)]
    lines = ["  ".join([CORNER.ljust(first)] + [c.rjust(w) for c, w in zip(col_labels, widths)])]
    for name, row in zip(names, cells):
        lines.append("  ".join([name.ljust(first)] + [v.rjust(w) for v, w in zip(row, widths)]))
    if flagged:
        lines.append(ZERO_SUPPORT_NOTE)
    return "\n".join(lines) + "\n"


def render(cm: ConfusionMatrix, style: str = "percent") -> str:
    """Rows are true classes, columns predicted classes."""
    if style == "percent":
        cells = cm.rounded_percentages()
    elif style == "counts":
        cells = [[str(int(c)) for c in row] for row in cm.counts]
    else:
        raise ValueError(f"style must be 'percent' or 'counts', got {style!r}")
    return format_table(cm.labels, cm.labels, cells, flagged=cm.zero_support_rows)


def render_percent_values(labels, values) -> str:
    """Render a percentage matrix that arrives without counts (e.g. a published table)."""
    cells = [[half_up(v) for v in row] for row in values]
    return format_table(labels, labels, cells)


def side_by_side(left: str, right: str, gap: int = 4) -> str:
    a = left.rstrip("\n").split("\n")
    b = right.rstrip("\n").split("\n")
    width = max(len(x) for x in a)
    n = max(len(a), len(b))
    a += [""] * (n - len(a))
    b += [""] * (n - len(b))
    return "\n".join((x.ljust(width + gap) + y).rstrip() for x, y in zip(a, b)) + "\n"


def load_percent_fixture(path) -> tuple[list[str], list[list[float]], str]:
    """Read a ``confusion-percent/1`` TSV; returns labels, values and its title line."""
    title = ""
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# title:"):
            title = line.partition(":")[2].strip()
        elif line and not line.startswith("#"):
            rows.append(line.split("\t"))
    header, body = rows[0], rows[1:]
    labels = header[1:]
    if [r[0] for r in body] != labels:
        raise ValueError(f"{path}: row labels do not match column labels")
    return labels, [[float(v) for v in r[1:]] for r in body], title


def per_class_table(cm: ConfusionMatrix) -> str:
    lines = ["class\tsupport\taccuracy"]
    recall = cm.rounded_percentages()
    for i, lab in enumerate(cm.labels):
        acc = recall[i][i] if cm.support[i] else "n/a"
        lines.append(f"{lab}\t{int(cm.support[i])}\t{acc}")
    return "\n".join(lines) + "\n"


def report_text(cm: ConfusionMatrix, reference: tuple[str, str] | None = None) -> str:
    """Counts table, percentage table and accuracies as one text block.

    ``reference`` is an optional ``(title, rendered table)`` printed beside the
    percentage table.
    """
    acc = "n/a" if cm.total == 0 else half_up(Fraction(100 * int(np.trace(cm.counts)), cm.total))
    parts = [
        "# format: report/1",
        f"classes\t{','.join(lab.key for lab in cm.space)}",
        f"examples\t{cm.total}",
        f"overall_accuracy\t{acc}",
        "",
        "## counts",
        render(cm, "counts").rstrip("\n"),
        "",
        "## percent (rows: real value, columns: predicted value)",
    ]
    pct = render(cm, "percent")
    if reference is not None:
        title, table = reference
        pct = side_by_side("this run\n" + pct, f"{title}\n" + table)
    parts += [pct.rstrip("\n"), "", "## per-class accuracy", per_class_table(cm).rstrip("\n")]
    return "\n".join(parts) + "\n"


def read_predictions(path) -> list[tuple[str, str, str]]:
    """Parse ``exp_id<TAB>true<TAB>pred`` lines; ``#`` lines and the header are skipped."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
        if fields == ["exp_id", "true", "pred"]:
            continue
        out.append((fields[0], fields[1], fields[2]))
    return out


def format_predictions(predictions) -> str:
    lines = ["# format: predictions/1", "exp_id\ttrue\tpred"]
    lines += [f"{i}\t{t.key}\t{p.key}" for i, t, p in predictions]
    return "\n".join(lines) + "\n"


def infer_space(predictions):
    """Binary when every label string names a binary class, otherwise 4-class."""
    keys = {lab.key for lab in BinaryLabel}
    if predictions and all(t.strip().lower() in keys and p.strip().lower() in keys
                           for _, t, p in predictions):
        return BinaryLabel
    return RelationshipLabel
