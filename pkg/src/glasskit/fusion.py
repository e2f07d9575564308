"""Refine a semantic label map with class-agnostic masklets.

Each masklet is classified against the *original* label map: if the largest
single glass category inside it covers strictly more than ``glass_fraction_min``
of the masklet area, the masklet is assigned that category by majority vote
(among glass categories only; ties break to the lowest class id).  Otherwise
the region is considered a background false positive.

Accepted masklets overwrite their pixels with the assigned class; rejected
ones overwrite with background (``reject_mode="background"``) or leave the
map untouched (``"keep"``).  Writes are applied in ascending (score, id)
order, so higher-score masklets win overlaps.  Pixels covered by no masklet
keep their input label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .raster_io import Masklet
from .taxonomy import Taxonomy

REJECT_MODES = ("background", "keep")

ASSIGNED = "assigned"
REJECTED = "rejected"


@dataclass(frozen=True)
class FusionConfig:
    glass_fraction_min: float = 0.10
    quality_min: float = 0.0
    reject_mode: str = "background"

    def __post_init__(self):
        if not 0.0 <= self.glass_fraction_min <= 1.0:
            raise ValidationError("glass_fraction_min must be in [0, 1]")
        if not 0.0 <= self.quality_min <= 1.0:
            raise ValidationError("quality_min must be in [0, 1]")
        if self.reject_mode not in REJECT_MODES:
            raise ValidationError(f"reject_mode must be one of {REJECT_MODES}")


@dataclass(eq=False)
class MaskletDecision:
    masklet_id: int
    verdict: str
    assigned_class: int | None
    class_counts: np.ndarray
    max_glass_fraction: float


def classify_masklet(
    masklet: Masklet,
    labels: np.ndarray,
    taxonomy: Taxonomy,
    config: FusionConfig = FusionConfig(),
) -> MaskletDecision:
    """Decide whether a masklet is a glass object and which category it gets."""
    if masklet.mask.shape != labels.shape:
        raise ValidationError(
            f"masklet {masklet.id} shape {masklet.mask.shape} does not match "
            f"label map shape {labels.shape}"
        )
    y0, y1, x0, x1 = masklet.bbox
    values = labels[y0:y1, x0:x1][masklet.mask[y0:y1, x0:x1]]
    counts = np.bincount(values, minlength=len(taxonomy))
    if counts.size > len(taxonomy):
        raise ValidationError("label map contains class ids outside the taxonomy")
    glass_ids = np.asarray(taxonomy.glass_ids, dtype=np.int64)
    if glass_ids.size == 0:
        return MaskletDecision(masklet.id, REJECTED, None, counts, 0.0)
    glass_counts = counts[glass_ids]
    best = int(glass_counts.argmax())  # first maximum = lowest class id
    fraction = glass_counts[best] / masklet.area
    if fraction > config.glass_fraction_min:
        return MaskletDecision(
            masklet.id, ASSIGNED, int(glass_ids[best]), counts, float(fraction)
        )
    return MaskletDecision(masklet.id, REJECTED, None, counts, float(fraction))


def fuse(
    labels: np.ndarray,
    masklets: list[Masklet],
    taxonomy: Taxonomy,
    config: FusionConfig = FusionConfig(),
) -> tuple[np.ndarray, list[MaskletDecision]]:
    """Apply the masklet policy to ``labels``; returns the refined map and the
    per-masklet decisions (for surviving masklets, in input order)."""
    for m in masklets:
        if m.mask.shape != labels.shape:
            raise ValidationError(
                f"masklet {m.id} shape {m.mask.shape} does not match "
                f"label map shape {labels.shape}"
            )
    surviving = [m for m in masklets if m.score >= config.quality_min]
    decisions = [classify_masklet(m, labels, taxonomy, config) for m in surviving]

    out = labels.copy()
    order = sorted(range(len(surviving)), key=lambda i: (surviving[i].score, surviving[i].id))
    for i in order:
        decision = decisions[i]
        if decision.verdict == ASSIGNED:
            value = decision.assigned_class
        elif config.reject_mode == "background":
            value = taxonomy.background
        else:
            continue
        m = surviving[i]
        y0, y1, x0, x1 = m.bbox
        out[y0:y1, x0:x1][m.mask[y0:y1, x0:x1]] = value
    return out, decisions
