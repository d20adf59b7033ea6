"""Classification scoring over annotated pixels (confusion counts, overall
and average accuracy, Cohen's kappa) and deterministic map rendering.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError

# background + 16 class colors; fixed so renders are byte-reproducible
PALETTE = np.array([
    (0, 0, 0),        # 0 background
    (230, 25, 75),    # 1
    (60, 180, 75),    # 2
    (255, 225, 25),   # 3
    (0, 130, 200),    # 4
    (245, 130, 48),   # 5
    (145, 30, 180),   # 6
    (70, 240, 240),   # 7
    (240, 50, 230),   # 8
    (210, 245, 60),   # 9
    (250, 190, 212),  # 10
    (0, 128, 128),    # 11
    (220, 190, 255),  # 12
    (170, 110, 40),   # 13
    (255, 250, 200),  # 14
    (128, 0, 0),      # 15
    (170, 255, 195),  # 16
], dtype=np.uint8)


@dataclass
class ConfusionMatrix:
    """Counts over annotated pixels; rows are truth, columns predictions."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ShapeError(f"counts must be square, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ContractError("confusion counts must be nonnegative")

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass
class MetricsReport:
    per_class: np.ndarray
    oa: float
    aa: float
    kappa: float
    evaluated_count: int


def confusion(truth, pred, n_y=None):
    """Tally truth-vs-predicted counts; truth label 0 pixels are skipped."""
    t = np.asarray(getattr(truth, "labels", truth))
    p = np.asarray(getattr(pred, "labels", pred))
    if t.shape != p.shape:
        raise ShapeError(f"truth {t.shape} and prediction {p.shape} differ")
    if n_y is None:
        n_y = int(max(t.max(initial=0), p.max(initial=0)))
    mask = t > 0
    tm = t[mask].astype(np.int64)
    pm = p[mask].astype(np.int64)
    if pm.max(initial=0) > n_y or tm.max(initial=0) > n_y:
        raise ContractError(f"labels exceed n_y={n_y}")
    if (pm < 1).any():
        where = np.argwhere(mask & (p < 1))[0]
        raise ContractError(
            f"prediction missing (label 0) at annotated pixel "
            f"({where[0]}, {where[1]})")
    counts = np.zeros((n_y, n_y), dtype=np.int64)
    np.add.at(counts, (tm - 1, pm - 1), 1)
    return ConfusionMatrix(counts=counts)


def metrics(cm):
    """OA, AA over classes present in truth, and integer-form Cohen kappa."""
    counts = cm.counts
    total = cm.total
    if total == 0:
        raise ContractError("no annotated pixels to evaluate")
    n_y = counts.shape[0]
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)
    diag = np.diag(counts)
    trace = int(diag.sum())

    per_class = np.zeros(n_y, dtype=np.float64)
    present = row > 0
    per_class[present] = diag[present] / row[present]
    oa = trace / total
    aa = float(per_class[present].mean()) if present.any() else 0.0

    # integer numerator/denominator keep simple ratios exact (e.g. 2/3)
    chance = int((row.astype(object) * col.astype(object)).sum())
    numer = total * trace - chance
    denom = total * total - chance
    if denom == 0:
        # single truth and prediction class: perfect or total disagreement
        kappa = 1.0 if trace == total else 0.0
    else:
        kappa = numer / denom
    return MetricsReport(per_class=per_class, oa=float(oa), aa=aa,
                         kappa=float(kappa), evaluated_count=total)


def metrics_json(report):
    """Stable JSON rendering of a report (sorted keys, plain lists)."""
    return json.dumps({
        "oa": report.oa,
        "aa": report.aa,
        "kappa": report.kappa,
        "per_class": [float(v) for v in report.per_class],
        "evaluated": report.evaluated_count,
    }, sort_keys=True)


def render_map(pred, palette=None):
    """Encode a label map as binary PPM bytes with the fixed palette."""
    labels = np.asarray(getattr(pred, "labels", pred))
    if labels.ndim != 2:
        raise ShapeError(f"label map must be 2-D, got ndim={labels.ndim}")
    pal = PALETTE if palette is None else np.asarray(palette, dtype=np.uint8)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= len(pal):
        raise ContractError(
            f"labels must be in [0, {len(pal) - 1}] for the {len(pal)}-entry palette")
    h, w = labels.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + pal[labels].tobytes()
