"""Merge-aware per-class IoU and accuracy.

A prediction is a true positive for the pixel's ground-truth class whenever
it lies in that pixel's allowed-label set (the class itself under the
identity policy, possibly more under a merge policy, possibly more still
for water-glass instances on a model allowlist).  Correct-under-merging
pixels credit the ground-truth class and are not false positives for the
predicted class; this makes every per-class metric monotone when the policy
grows.

Per class: IoU = TP / (TP + FP + FN), Acc = TP / (TP + FN).  Classes whose
denominator is zero are undefined (NaN) and are dropped from the means;
background participates like any other class.  Dataset-level numbers come
from globally summed counts, never from averaging per-image metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .merging import MergePolicy
from .raster_io import GroundTruth
from .taxonomy import Taxonomy


@dataclass(eq=False)
class Tally:
    """Per-class pixel counts; add tallies together with :func:`merge_tallies`."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.tp.size


@dataclass(eq=False)
class MetricsReport:
    iou: np.ndarray
    acc: np.ndarray
    miou: float
    macc: float
    highlight_class: int | None = None
    highlight_iou: float | None = None


def allowed_labels(class_id: int, model: str | None, policy: MergePolicy) -> frozenset[int]:
    """Predicted labels accepted as correct for a pixel of this class/model."""
    base = policy.allowed[class_id]
    extra = {
        rule.partner
        for rule in policy.overrides
        if rule.water_glass == class_id and model in rule.models
    }
    return base | extra if extra else base


def tally_image(
    gt: GroundTruth, pred: np.ndarray, policy: MergePolicy, taxonomy: Taxonomy
) -> Tally:
    """Count TP/FP/FN for one image under the policy."""
    if pred.shape != gt.instance_map.shape:
        raise ValidationError(
            f"prediction shape {pred.shape} does not match ground truth "
            f"{gt.instance_map.shape}"
        )
    k = len(taxonomy)
    if int(pred.max()) >= k:
        raise ValidationError("prediction contains class ids outside the taxonomy")

    ids, index_map = np.unique(gt.instance_map.ravel(), return_inverse=True)
    counts = np.bincount(
        index_map.astype(np.int64) * k + pred.astype(np.int64).ravel(),
        minlength=ids.size * k,
    ).reshape(ids.size, k)

    tp = np.zeros(k, dtype=np.int64)
    fp = np.zeros(k, dtype=np.int64)
    fn = np.zeros(k, dtype=np.int64)
    bg = taxonomy.background
    for row, iid in enumerate(ids):
        if iid == 0:
            g, allowed = bg, policy.allowed[bg]
        else:
            inst = gt.instances[int(iid)]
            g = inst.class_id
            allowed = allowed_labels(g, inst.model, policy)
        row_counts = counts[row]
        for d in row_counts.nonzero()[0]:
            n = int(row_counts[d])
            if int(d) in allowed:
                tp[g] += n
            else:
                fn[g] += n
                fp[d] += n
    return Tally(tp, fp, fn)


def merge_tallies(tallies) -> Tally:
    """Componentwise sum; associative and commutative."""
    tallies = list(tallies)
    if not tallies:
        raise ValidationError("cannot merge zero tallies")
    k = tallies[0].num_classes
    if any(t.num_classes != k for t in tallies):
        raise ValidationError("tallies cover different class counts")
    return Tally(
        sum(t.tp for t in tallies),
        sum(t.fp for t in tallies),
        sum(t.fn for t in tallies),
    )


def _safe_ratio(num: np.ndarray, denom: np.ndarray) -> np.ndarray:
    out = np.full(num.shape, np.nan)
    np.divide(num, denom, out=out, where=denom > 0)
    return out


def _nan_mean(values: np.ndarray) -> float:
    defined = values[~np.isnan(values)]
    return float(defined.mean()) if defined.size else float("nan")


def compute_metrics(
    tally: Tally, taxonomy: Taxonomy, highlight: int | None = None
) -> MetricsReport:
    """Per-class IoU/Acc plus their means over defined classes."""
    tp = tally.tp.astype(np.float64)
    iou = _safe_ratio(tp, tally.tp + tally.fp + tally.fn)
    acc = _safe_ratio(tp, tally.tp + tally.fn)
    report = MetricsReport(iou, acc, _nan_mean(iou), _nan_mean(acc))
    if highlight is not None:
        report.highlight_class = highlight
        report.highlight_iou = float(iou[highlight])
    return report
