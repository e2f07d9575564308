"""Deterministic desk-scale scene synthesis.

Stands in for a rendered dataset: simple geometric "glasses" with instance
and model labels, label-map perturbations emulating real failure modes
(class confusion, interior patchiness, background speckle, border erosion),
and per-instance masklets with optional jitter plus spurious background
regions.

Every generator is a pure function of (seed, params).  Randomness flows
through :class:`~glasskit.rng.SplitMix64` in a documented draw order, so
fixtures are reproducible bit for bit anywhere; reordering draws is a
breaking change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .raster_io import GroundTruth, Instance, Masklet
from .rng import SplitMix64
from .taxonomy import Taxonomy

_PLACE_ATTEMPTS = 200


@dataclass(frozen=True)
class SceneParams:
    class_pool: tuple[int, ...]
    model_pool: dict[int, tuple[str, ...]]
    width: int = 64
    height: int = 64
    object_count: tuple[int, int] = (3, 4)
    distractor_prob: float = 0.25

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValidationError("scene dimensions must be at least 16x16")
        lo, hi = self.object_count
        if lo < 1 or hi < lo:
            raise ValidationError("object_count range must satisfy 1 <= lo <= hi")
        if not self.class_pool:
            raise ValidationError("class pool must be non-empty")
        for cid in self.class_pool:
            if not self.model_pool.get(cid):
                raise ValidationError(f"class {cid} has no models in the pool")
        if not 0.0 <= self.distractor_prob <= 1.0:
            raise ValidationError("distractor_prob must be in [0, 1]")

    @classmethod
    def for_taxonomy(cls, taxonomy: Taxonomy, **kwargs) -> "SceneParams":
        """Pool every glass class that has at least one registered model."""
        pool = tuple(c for c in taxonomy.glass_ids if taxonomy.models_of(c))
        models = {c: taxonomy.models_of(c) for c in pool}
        return cls(class_pool=pool, model_pool=models, **kwargs)


@dataclass(frozen=True)
class PerturbParams:
    """Applied in stage order: confusion pairs, uniform flips, border
    erosion, background speckle.  Stages with a zero rate consume no
    randomness."""

    flip_rate: float = 0.0
    confusion: tuple[tuple[int, int, float], ...] = ()
    speckle_rate: float = 0.0
    erosion_rate: float = 0.0

    def __post_init__(self):
        rates = [self.flip_rate, self.speckle_rate, self.erosion_rate]
        rates += [p for _, _, p in self.confusion]
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise ValidationError("all perturbation rates must be in [0, 1]")


def interior_patchiness_params(taxonomy: Taxonomy, rate: float = 0.35) -> PerturbParams:
    """Perturbation confined to object interiors: glass pixels drop to
    background at the given rate, the background itself stays clean."""
    return PerturbParams(
        confusion=tuple((c, taxonomy.background, rate) for c in taxonomy.glass_ids)
    )


# ---------------------------------------------------------------------------
# Shape rasterization

_RECT, _ELLIPSE, _STEM_AND_BOWL = range(3)


def _shape_mask(kind: int, w: int, h: int) -> np.ndarray:
    if kind == _RECT:
        return np.ones((h, w), dtype=bool)
    yy, xx = np.ogrid[0:h, 0:w]
    if kind == _ELLIPSE:
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        return ((xx - cx) / (w / 2.0)) ** 2 + ((yy - cy) / (h / 2.0)) ** 2 <= 1.0
    # stem-and-bowl composite: ellipse bowl, thin stem, flat base
    bowl_h = max(2, (h * 11) // 20)
    cy, cx = (bowl_h - 1) / 2.0, (w - 1) / 2.0
    bowl = ((xx - cx) / (w / 2.0)) ** 2 + ((yy - cy) / (bowl_h / 2.0)) ** 2 <= 1.0
    bowl &= yy < bowl_h
    stem_w = max(1, w // 5)
    x0 = (w - stem_w) // 2
    stem = (yy >= bowl_h // 2) & (xx >= x0) & (xx < x0 + stem_w)
    base_h = max(1, h // 8)
    base_w = max(stem_w, (w * 3) // 5)
    bx0 = (w - base_w) // 2
    base = (yy >= h - base_h) & (xx >= bx0) & (xx < bx0 + base_w)
    return bowl | stem | base


def _place_shape(
    rng: SplitMix64,
    occupancy: np.ndarray,
    min_dim: int,
    max_dim: int,
    kinds: int = 3,
) -> tuple[int, int, np.ndarray]:
    """Drop a fresh shape somewhere free; draws (kind, w, h, x, y) per attempt."""
    height, width = occupancy.shape
    for _ in range(_PLACE_ATTEMPTS):
        kind = rng.below(kinds)
        w = rng.randrange(min_dim, max_dim + 1)
        h = rng.randrange(min_dim, max_dim + 1)
        x = rng.below(width - w + 1)
        y = rng.below(height - h + 1)
        shape = _shape_mask(kind, w, h)
        if not (occupancy[y : y + h, x : x + w] & shape).any():
            occupancy[y : y + h, x : x + w] |= shape
            return y, x, shape
    raise ValidationError(
        f"could not place an object after {_PLACE_ATTEMPTS} attempts; "
        "scene is too crowded"
    )


def gen_scene(seed: int, params: SceneParams) -> tuple[GroundTruth, np.ndarray]:
    """Ground truth plus its projected label map.

    Draw order: object count, then per instance (class, model, placement),
    then up to two distractor slots (opaque objects occupying space but
    rendered as background)."""
    rng = SplitMix64(seed)
    occupancy = np.zeros((params.height, params.width), dtype=bool)
    instance_map = np.zeros_like(occupancy, dtype=np.int32)
    instances: dict[int, Instance] = {}

    min_dim = 8
    max_dim = max(min_dim, min(params.width, params.height) // 3)
    lo, hi = params.object_count
    n_objects = rng.randrange(lo, hi + 1)
    for iid in range(1, n_objects + 1):
        class_id = params.class_pool[rng.below(len(params.class_pool))]
        models = params.model_pool[class_id]
        model = models[rng.below(len(models))]
        y, x, shape = _place_shape(rng, occupancy, min_dim, max_dim)
        instance_map[y : y + shape.shape[0], x : x + shape.shape[1]][shape] = iid
        instances[iid] = Instance(class_id, model)

    for _ in range(2):
        if rng.uniform() < params.distractor_prob:
            try:
                _place_shape(rng, occupancy, min_dim, max_dim, kinds=2)
            except ValidationError:
                pass  # distractors are best effort

    gt = GroundTruth(instance_map, instances)
    return gt, gt.project_labels()


# ---------------------------------------------------------------------------
# Label perturbation


def perturb_labels(
    labels: np.ndarray, params: PerturbParams, seed: int, taxonomy: Taxonomy
) -> np.ndarray:
    """Deterministically corrupt a label map.

    Stage draw order (row-major within each stage):
      1. per confusion pair, one uniform per pixel;
      2. one uniform per pixel, then one class draw per flipped pixel
         (uniform over the other K-1 classes);
      3. one uniform per border pixel (object pixel with a 4-neighbor
         background pixel);
      4. one uniform per background pixel, then one glass-class draw per
         speckled pixel.
    """
    rng = SplitMix64(seed)
    out = labels.copy()
    k = len(taxonomy)
    n = out.size
    bg = taxonomy.background

    for src, dst, p in params.confusion:
        if src >= k or dst >= k:
            raise ValidationError("confusion pair references unknown class ids")
        if p <= 0.0:
            continue
        u = rng.fill_uniform(n).reshape(out.shape)
        out[(out == src) & (u < p)] = dst

    if params.flip_rate > 0.0:
        u = rng.fill_uniform(n).reshape(out.shape)
        flips = u < params.flip_rate
        current = out[flips].astype(np.int64)
        drawn = rng.fill_below(current.size, k - 1)
        out[flips] = drawn + (drawn >= current)

    if params.erosion_rate > 0.0:
        is_bg = out == bg
        padded = np.pad(is_bg, 1, constant_values=True)
        near_bg = (
            padded[:-2, 1:-1] | padded[2:, 1:-1] | padded[1:-1, :-2] | padded[1:-1, 2:]
        )
        border = ~is_bg & near_bg
        idx = np.flatnonzero(border.ravel())
        u = rng.fill_uniform(idx.size)
        out.ravel()[idx[u < params.erosion_rate]] = bg

    if params.speckle_rate > 0.0:
        glass = np.asarray(taxonomy.glass_ids, dtype=np.int64)
        idx = np.flatnonzero((out == bg).ravel())
        u = rng.fill_uniform(idx.size)
        chosen = idx[u < params.speckle_rate]
        out.ravel()[chosen] = glass[rng.fill_below(chosen.size, glass.size)]

    return out


# ---------------------------------------------------------------------------
# Masklet synthesis


def _dilate(mask: np.ndarray, iterations: int) -> np.ndarray:
    for _ in range(iterations):
        p = np.pad(mask, 1)
        mask = (
            p[:-2, :-2] | p[:-2, 1:-1] | p[:-2, 2:]
            | p[1:-1, :-2] | p[1:-1, 1:-1] | p[1:-1, 2:]
            | p[2:, :-2] | p[2:, 1:-1] | p[2:, 2:]
        )
    return mask


def _erode(mask: np.ndarray, iterations: int) -> np.ndarray:
    for _ in range(iterations):
        p = np.pad(mask, 1)  # outside counts as background
        mask = (
            p[:-2, :-2] & p[:-2, 1:-1] & p[:-2, 2:]
            & p[1:-1, :-2] & p[1:-1, 1:-1] & p[1:-1, 2:]
            & p[2:, :-2] & p[2:, 1:-1] & p[2:, 2:]
        )
    return mask


def gen_masklets(
    gt: GroundTruth, jitter: int, spurious_count: int, seed: int
) -> list[Masklet]:
    """One masklet per instance, grown or shrunk by at most ``jitter`` pixels
    (3x3 structuring element per step; erosion that would empty the mask falls
    back to the exact region), plus spurious masklets placed on pure
    background, pairwise disjoint and disjoint from every instance.

    Draw order: per instance in ascending id order, (amount, direction) when
    jitter > 0, then the score in [0.5, 1); per spurious masklet, placement
    attempts then the score in [0.1, 0.6)."""
    rng = SplitMix64(seed)
    masklets = []
    for iid in sorted(gt.instances):
        base = gt.instance_map == iid
        if not base.any():
            continue
        mask = base
        if jitter > 0:
            amount = rng.below(jitter + 1)
            grow = rng.uniform() < 0.5
            if amount > 0:
                jittered = _dilate(base, amount) if grow else _erode(base, amount)
                if jittered.any():
                    mask = jittered
        score = 0.5 + 0.5 * rng.uniform()
        masklets.append(Masklet(iid, score, mask))

    occupancy = gt.instance_map != 0
    next_id = max(gt.instances, default=0) + 1
    min_dim = 4
    max_dim = max(min_dim + 1, min(gt.width, gt.height) // 6)
    for k in range(spurious_count):
        y, x, shape = _place_shape(rng, occupancy, min_dim, max_dim, kinds=2)
        mask = np.zeros_like(occupancy)
        mask[y : y + shape.shape[0], x : x + shape.shape[1]] = shape
        score = 0.1 + 0.5 * rng.uniform()
        masklets.append(Masklet(next_id + k, score, mask))
    return masklets
