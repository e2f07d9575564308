"""Confusion matrices and the class-merging policy derived from them.

Two glass classes count as similar when the row-normalized confusion
fraction exceeds ``similarity_min`` in either direction (rows index the
ground-truth class, columns the prediction).  Excluded classes (typically
the unseen class) never enter a pair, and neither does background.

The resulting policy maps every class to the set of labels accepted as
correct for it.  Pairs are not closed transitively.  Pairs with the
water-glass class are asymmetric: the partner class keeps water glass in
its allowed set, while the reverse direction is granted only to water-glass
instances whose 3D model appears on a manually curated allowlist.

Policy document::

    {
      "allowed": {"white_wine_glass": ["white_wine_glass", "red_wine_glass", ...], ...},
      "water_glass_overrides": [{"class": "pint_glass", "models": ["WAT-01"]}]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .raster_io import GroundTruth
from .taxonomy import Taxonomy

Pair = tuple[int, int]


def new_confusion(num_classes: int) -> np.ndarray:
    return np.zeros((num_classes, num_classes), dtype=np.int64)


def accumulate_confusion(
    gt: GroundTruth, pred: np.ndarray, taxonomy: Taxonomy, acc: np.ndarray
) -> np.ndarray:
    """Add one (ground truth, prediction) pair of rasters into ``acc`` in place."""
    gt_labels = gt.project_labels()
    if gt_labels.shape != pred.shape:
        raise ValidationError(
            f"prediction shape {pred.shape} does not match ground truth {gt_labels.shape}"
        )
    k = len(taxonomy)
    if int(pred.max()) >= k:
        raise ValidationError("prediction contains class ids outside the taxonomy")
    keys = gt_labels.astype(np.int64).ravel() * k + pred.astype(np.int64).ravel()
    acc += np.bincount(keys, minlength=k * k).reshape(k, k)
    return acc


def row_normalize(matrix: np.ndarray) -> np.ndarray:
    """Per ground-truth class fractions; zero rows stay zero."""
    matrix = np.asarray(matrix, dtype=np.float64)
    sums = matrix.sum(axis=1, keepdims=True)
    return np.divide(matrix, sums, out=np.zeros_like(matrix), where=sums > 0)


@dataclass(frozen=True)
class MergeDerivationConfig:
    similarity_min: float = 0.05
    excluded: frozenset[int] = frozenset()
    water_glass_class: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.similarity_min <= 1.0:
            raise ValidationError("similarity_min must be in [0, 1]")


def derive_similar_pairs(
    fractions: np.ndarray, config: MergeDerivationConfig, taxonomy: Taxonomy
) -> set[Pair]:
    """Unordered glass-class pairs whose confusion exceeds the threshold
    (strictly) in either direction.  Pairs are returned as (low id, high id)."""
    for cid in config.excluded:
        if not taxonomy.is_glass(cid):
            raise ValidationError("excluded classes must be glass classes")
    pairs: set[Pair] = set()
    eligible = [
        c for c in taxonomy.glass_ids if c not in config.excluded
    ]
    for i, c in enumerate(eligible):
        for d in eligible[i + 1 :]:
            if (
                fractions[c][d] > config.similarity_min
                or fractions[d][c] > config.similarity_min
            ):
                pairs.add((c, d))
    return pairs


@dataclass(frozen=True)
class OverrideRule:
    """Water-glass instances of these models may also be labeled ``partner``."""

    partner: int
    water_glass: int
    models: frozenset[str]


@dataclass(frozen=True)
class MergePolicy:
    allowed: dict[int, frozenset[int]]
    overrides: tuple[OverrideRule, ...] = ()


def identity_policy(taxonomy: Taxonomy) -> MergePolicy:
    return MergePolicy({c: frozenset({c}) for c in range(len(taxonomy))})


def build_merge_policy(
    pairs: set[Pair],
    overrides: list[tuple[int, list[str]]],
    taxonomy: Taxonomy,
    water_glass: int | None = None,
) -> MergePolicy:
    """Turn similarity pairs plus manual water-glass allowlists into a policy.

    ``overrides`` lists (partner class, water-glass model allowlist) entries;
    each partner must actually be paired with ``water_glass``.  The partner
    keeps water glass in its allowed set, but the reverse direction is
    downgraded from class level to the allowlisted instances.
    """
    for c, d in pairs:
        if not (taxonomy.is_glass(c) and taxonomy.is_glass(d)):
            raise ValidationError("merge pairs must contain glass classes only")
    allowed = {c: {c} for c in range(len(taxonomy))}
    for c, d in pairs:
        allowed[c].add(d)
        allowed[d].add(c)
    rules = []
    for partner, models in overrides:
        if water_glass is None:
            raise ValidationError("overrides require a water-glass class designation")
        if (min(partner, water_glass), max(partner, water_glass)) not in pairs:
            raise ValidationError(
                f"override for {taxonomy.name_of(partner)!r} does not correspond "
                "to a derived water-glass pair"
            )
        for model in models:
            if model not in taxonomy.models:
                raise ValidationError(f"unknown model id {model!r} in override")
        allowed[water_glass].discard(partner)
        # An empty allowlist grants nothing beyond the removal above, so no
        # rule needs to be recorded for it.
        if models:
            rules.append(OverrideRule(partner, water_glass, frozenset(models)))
    return MergePolicy(
        {c: frozenset(s) for c, s in allowed.items()}, tuple(rules)
    )


# ---------------------------------------------------------------------------
# Serialization


def policy_to_doc(policy: MergePolicy, taxonomy: Taxonomy) -> dict:
    allowed = {}
    for cid in range(len(taxonomy)):
        others = sorted(policy.allowed[cid] - {cid})
        allowed[taxonomy.name_of(cid)] = [
            taxonomy.name_of(c) for c in [cid, *others]
        ]
    return {
        "allowed": allowed,
        "water_glass_overrides": [
            {"class": taxonomy.name_of(rule.partner), "models": sorted(rule.models)}
            for rule in policy.overrides
        ],
    }


def policy_from_doc(doc: dict, taxonomy: Taxonomy) -> MergePolicy:
    if "allowed" not in doc:
        raise ValidationError("policy document needs an 'allowed' map")
    allowed: dict[int, frozenset[int]] = {}
    for name, labels in doc["allowed"].items():
        cid = taxonomy.class_by_name(name)
        allowed[cid] = frozenset(taxonomy.class_by_name(n) for n in labels)
    for cid in range(len(taxonomy)):
        allowed.setdefault(cid, frozenset({cid}))
        if cid not in allowed[cid]:
            raise ValidationError(
                f"allowed set of {taxonomy.name_of(cid)!r} must contain the class itself"
            )
    bg = taxonomy.background
    if allowed[bg] != frozenset({bg}):
        raise ValidationError("background may only be labeled background")
    rules = []
    for entry in doc.get("water_glass_overrides", []):
        partner = taxonomy.class_by_name(str(entry["class"]))
        models = frozenset(str(m) for m in entry.get("models", []))
        if not models:
            continue  # grants nothing
        mapped = set()
        for model in models:
            if model not in taxonomy.models:
                raise ValidationError(f"unknown model id {model!r} in override")
            mapped.add(taxonomy.models[model])
        if len(mapped) > 1:
            raise ValidationError(
                "override allowlist mixes models of different classes"
            )
        rules.append(OverrideRule(partner, mapped.pop(), models))
    return MergePolicy(allowed, tuple(rules))


def save_policy(policy: MergePolicy, taxonomy: Taxonomy, path) -> None:
    Path(path).write_text(
        json.dumps(policy_to_doc(policy, taxonomy), indent=2) + "\n",
        encoding="utf-8",
    )


def load_policy(path, taxonomy: Taxonomy) -> MergePolicy:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return policy_from_doc(doc, taxonomy)
