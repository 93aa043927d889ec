"""Segmentation and feature-statistics diagnostics: mIoU, channel-stat embeddings, MMD."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

IGNORE_LABEL = 255
STAT_EPS = 1e-5


@dataclass
class ConfusionMatrix:
    num_classes: int
    ignore_label: int = IGNORE_LABEL
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != (self.num_classes, self.num_classes):
                raise ValueError("counts shape does not match num_classes")

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge confusion matrices of different size")
        return ConfusionMatrix(self.num_classes, self.ignore_label, self.counts + other.counts)


@dataclass
class MIoUReport:
    per_class_iou: np.ndarray  # NaN for classes absent from both gt and prediction
    mean_iou: float
    confusion: np.ndarray

    def to_dict(self) -> dict:
        return {
            "per_class_iou": [None if np.isnan(v) else float(v) for v in self.per_class_iou],
            "mean_iou": float(self.mean_iou),
            "confusion": self.confusion.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MIoUReport":
        iou = np.array([np.nan if v is None else v for v in d["per_class_iou"]], dtype=float)
        return cls(iou, float(d["mean_iou"]), np.asarray(d["confusion"], dtype=np.int64))


def accumulate(cm: ConfusionMatrix, gt, pred) -> ConfusionMatrix:
    """Add one (gt, pred) label-map pair to ``cm`` in place and return it."""
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape:
        raise ValueError(f"gt shape {gt.shape} != pred shape {pred.shape}")
    k = cm.num_classes
    valid = gt != cm.ignore_label
    g = gt[valid].astype(np.int64)
    p = pred[valid].astype(np.int64)
    if g.size and (g.min() < 0 or g.max() >= k):
        raise ValueError(f"ground-truth label outside [0, {k}) and not ignore_label")
    if p.size and (p.min() < 0 or p.max() >= k):
        raise ValueError(f"predicted label outside [0, {k})")
    cm.counts += np.bincount(g * k + p, minlength=k * k).reshape(k, k)
    return cm


def miou(cm: ConfusionMatrix) -> MIoUReport:
    counts = cm.counts
    if counts.sum() == 0:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(counts).astype(float)
    union = counts.sum(axis=1) + counts.sum(axis=0) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, tp / np.where(union > 0, union, 1), np.nan)
    return MIoUReport(iou, float(np.nanmean(iou)), counts.copy())


@dataclass
class StatEmbedding:
    vectors: np.ndarray  # (N, 2C): per-sample [channel means ; channel stds]

    def __len__(self):
        return self.vectors.shape[0]


def stat_embedding(features, eps: float = STAT_EPS) -> StatEmbedding:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 4:
        raise ValueError(f"expected (N, C, H, W) features, got shape {f.shape}")
    mu = f.mean(axis=(2, 3))
    sigma = np.sqrt(f.var(axis=(2, 3)) + eps)
    return StatEmbedding(np.concatenate([mu, sigma], axis=1))


def _as_matrix(e) -> np.ndarray:
    return np.asarray(e.vectors if isinstance(e, StatEmbedding) else e, dtype=np.float64)


def median_bandwidth(pooled: np.ndarray) -> float:
    d = pdist(pooled)
    return float(np.median(d)) if d.size else 0.0


def mmd(a, b, bandwidth: float | None = None) -> float:
    """Biased squared MMD with an RBF kernel ``exp(-d^2 / (2 h^2))``.

    ``h`` defaults to the median pairwise distance over the pooled sample.
    """
    x, y = _as_matrix(a), _as_matrix(b)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if len(x) < 2 or len(y) < 2:
        raise ValueError("need at least two samples on each side")
    if bandwidth is None:
        bandwidth = median_bandwidth(np.vstack([x, y]))
    if bandwidth == 0:
        return 0.0  # every pooled point coincides
    gamma = 1.0 / (2.0 * bandwidth**2)
    kxx = np.exp(-gamma * cdist(x, x, "sqeuclidean")).mean()
    kyy = np.exp(-gamma * cdist(y, y, "sqeuclidean")).mean()
    kxy = np.exp(-gamma * cdist(x, y, "sqeuclidean")).mean()
    return max(float(kxx + kyy - 2.0 * kxy), 0.0)


def export_embedding(e: StatEmbedding, path) -> None:
    v = _as_matrix(e)
    n, d = (v.shape if v.size else (0, v.shape[1] if v.ndim == 2 else 0))
    c = d // 2
    names = [f"mu_{i}" for i in range(c)] + [f"sigma_{i}" for i in range(c)]
    with open(path, "w", newline="\n") as fh:
        fh.write("# " + " ".join(names) + "\n")
        for row in v:
            fh.write(" ".join(format(float(val), ".17g") for val in row) + "\n")


def load_embedding(path) -> StatEmbedding:
    with open(path) as fh:
        header = fh.readline()
        d = len(header[1:].split())
        rows = [[float(t) for t in line.split()] for line in fh if line.strip()]
    return StatEmbedding(np.array(rows, dtype=np.float64).reshape(len(rows), d))
