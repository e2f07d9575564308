import numpy as np
import pytest

from glasskit import FusionConfig, Masklet, ValidationError, classify_masklet, fuse
from glasskit.fusion import ASSIGNED, REJECTED

from reference import fuse_reference

BG, GOBLET, WATER = 0, 1, 2  # ids in abc_taxonomy
RED, WHITE = 1, 2  # aliases for readability in two-glass-class scenes


def strip_masklet(width, mid=1, score=0.9):
    """Masklet covering one 1-pixel-high strip of a (1, width) map."""
    return Masklet(mid, score, np.ones((1, width), dtype=bool))


def strip_labels(values):
    return np.array([values], dtype=np.uint8)


def test_classify_accepts_above_threshold(abc_taxonomy):
    # 20 px, 3 goblet + 17 background: 0.15 > 0.10
    labels = strip_labels([GOBLET] * 3 + [BG] * 17)
    d = classify_masklet(strip_masklet(20), labels, abc_taxonomy)
    assert d.verdict == ASSIGNED
    assert d.assigned_class == GOBLET
    assert d.max_glass_fraction == pytest.approx(0.15)


def test_classify_single_category_not_union(abc_taxonomy):
    # 4 px red + 4 px white + 42 background: each category 0.08 <= 0.10,
    # rejected even though the glass union is 0.16
    labels = strip_labels([RED] * 4 + [WHITE] * 4 + [BG] * 42)
    d = classify_masklet(strip_masklet(50), labels, abc_taxonomy)
    assert d.verdict == REJECTED
    assert d.max_glass_fraction == pytest.approx(0.08)


def test_classify_majority_among_glass(abc_taxonomy):
    # 6 goblet + 9 water + 15 background: background never wins the vote
    labels = strip_labels([GOBLET] * 6 + [WATER] * 9 + [BG] * 15)
    d = classify_masklet(strip_masklet(30), labels, abc_taxonomy)
    assert d.verdict == ASSIGNED
    assert d.assigned_class == WATER
    assert d.max_glass_fraction == pytest.approx(0.30)


def test_classify_threshold_is_strict(abc_taxonomy):
    # exactly 10% is a rejection; one more pixel accepts
    labels = strip_labels([GOBLET] * 2 + [BG] * 18)
    assert classify_masklet(strip_masklet(20), labels, abc_taxonomy).verdict == REJECTED
    labels = strip_labels([GOBLET] * 3 + [BG] * 17)
    assert classify_masklet(strip_masklet(20), labels, abc_taxonomy).verdict == ASSIGNED


def test_classify_tie_breaks_to_lowest_id(abc_taxonomy):
    labels = strip_labels([GOBLET] * 5 + [WATER] * 5 + [BG] * 10)
    d = classify_masklet(strip_masklet(20), labels, abc_taxonomy)
    assert d.assigned_class == GOBLET


def test_classify_counts_sum_to_area(abc_taxonomy):
    labels = strip_labels([GOBLET, WATER, WATER, BG, BG])
    m = strip_masklet(5)
    d = classify_masklet(m, labels, abc_taxonomy)
    assert int(d.class_counts.sum()) == m.area == 5
    assert d.class_counts.tolist() == [2, 1, 2]


def test_classify_dimension_mismatch(abc_taxonomy):
    with pytest.raises(ValidationError, match="does not match"):
        classify_masklet(strip_masklet(4), strip_labels([0] * 5), abc_taxonomy)


def test_fuse_no_masklets_is_identity(abc_taxonomy):
    labels = strip_labels([BG, GOBLET, WATER, BG])
    out, decisions = fuse(labels, [], abc_taxonomy)
    assert (out == labels).all()
    assert decisions == []


def test_fuse_heals_patchy_region(abc_taxonomy):
    # goblet region with interior background holes becomes solid goblet
    labels = np.full((8, 8), BG, dtype=np.uint8)
    region = np.zeros((8, 8), dtype=bool)
    region[2:7, 2:7] = True
    labels[region] = GOBLET
    labels[3, 3] = BG
    labels[4, 5] = BG
    labels[5, 4] = BG
    out, _ = fuse(labels, [Masklet(1, 0.8, region)], abc_taxonomy)
    assert (out[region] == GOBLET).all()
    assert (out[~region] == BG).all()


def test_fuse_higher_score_wins_overlap(abc_taxonomy):
    labels = np.zeros((4, 8), dtype=np.uint8)
    left = np.zeros_like(labels, dtype=bool)
    left[:, :5] = True
    right = np.zeros_like(labels, dtype=bool)
    right[:, 3:] = True
    labels[:, :5] = GOBLET  # left masklet votes goblet
    labels[:, 5:] = WATER  # right masklet majority still water over its area?
    # right covers columns 3..7: 2 columns goblet (8px), 3 columns water (12px)
    out, decisions = fuse(
        labels,
        [Masklet(1, 0.4, left), Masklet(2, 0.9, right)],
        abc_taxonomy,
    )
    verdicts = {d.masklet_id: d.assigned_class for d in decisions}
    assert verdicts == {1: GOBLET, 2: WATER}
    assert (out[:, 3:] == WATER).all()  # overlap columns 3-4 went to score 0.9
    assert (out[:, :3] == GOBLET).all()


def test_fuse_equal_scores_higher_id_wins(abc_taxonomy):
    labels = strip_labels([GOBLET, GOBLET, WATER, WATER])
    a = Masklet(1, 0.5, np.array([[True, True, True, False]]))
    b = Masklet(2, 0.5, np.array([[False, True, True, True]]))
    out, _ = fuse(labels, [a, b], abc_taxonomy)
    # both assigned; b applied later under (score, id) ascending order
    assert out.tolist() == [[GOBLET, WATER, WATER, WATER]]


def test_fuse_reject_modes(abc_taxonomy):
    # stray glass speckles inside a background region
    labels = np.full((1, 20), BG, dtype=np.uint8)
    labels[0, 3] = GOBLET
    labels[0, 7] = WATER  # max single-category fraction 1/20 = 0.05 -> rejected
    m = strip_masklet(20)
    out, decisions = fuse(labels, [m], abc_taxonomy)
    assert decisions[0].verdict == REJECTED
    assert (out == BG).all()  # speckles cleared
    out_keep, _ = fuse(labels, [m], abc_taxonomy, FusionConfig(reject_mode="keep"))
    assert (out_keep == labels).all()


def test_fuse_quality_filter_drops_before_classification(abc_taxonomy):
    labels = strip_labels([GOBLET] * 10)
    low = Masklet(1, 0.29, np.ones((1, 10), dtype=bool))
    boundary = Masklet(2, 0.30, np.ones((1, 10), dtype=bool))
    out, decisions = fuse(
        labels, [low, boundary], abc_taxonomy, FusionConfig(quality_min=0.30)
    )
    assert [d.masklet_id for d in decisions] == [2]  # score == quality_min survives


def test_fuse_untouched_pixels_keep_labels(abc_taxonomy):
    labels = strip_labels([WATER, WATER, GOBLET, GOBLET])
    m = Masklet(1, 0.9, np.array([[True, True, False, False]]))
    out, _ = fuse(labels, [m], abc_taxonomy)
    assert out.tolist() == [[WATER, WATER, GOBLET, GOBLET]]


def test_fuse_is_deterministic(abc_taxonomy):
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 3, size=(16, 16), dtype=np.uint8)
    masklets = []
    for i in range(4):
        mask = np.zeros((16, 16), dtype=bool)
        y, x = rng.integers(0, 10, size=2)
        mask[y : y + 6, x : x + 6] = True
        masklets.append(Masklet(i, float(rng.random()), mask))
    first, _ = fuse(labels, masklets, abc_taxonomy)
    second, _ = fuse(labels, masklets, abc_taxonomy)
    assert (first == second).all()


def _random_case(rng, num_classes, size=16, n_masklets=4):
    labels = rng.integers(0, num_classes, size=(size, size), dtype=np.uint8)
    masklets = []
    for i in range(rng.integers(0, n_masklets + 1)):
        mask = np.zeros((size, size), dtype=bool)
        w, h = rng.integers(2, size // 2, size=2)
        y, x = rng.integers(0, size - h), rng.integers(0, size - w)
        mask[y : y + h, x : x + w] = True
        masklets.append(Masklet(int(i), float(rng.random()), mask))
    return labels, masklets


@pytest.mark.parametrize("reject_mode", ["background", "keep"])
def test_fuse_matches_reference_on_random_cases(abc_taxonomy, reject_mode):
    rng = np.random.default_rng(42)
    config = FusionConfig(reject_mode=reject_mode)
    for _ in range(25):
        labels, masklets = _random_case(rng, len(abc_taxonomy))
        out, _ = fuse(labels, masklets, abc_taxonomy, config)
        assert out.tolist() == fuse_reference(labels, masklets, abc_taxonomy, config)


def test_fuse_conservation_of_labels(abc_taxonomy):
    rng = np.random.default_rng(7)
    for _ in range(10):
        labels, masklets = _random_case(rng, len(abc_taxonomy))
        out, decisions = fuse(labels, masklets, abc_taxonomy)
        assigned = {d.assigned_class for d in decisions if d.verdict == ASSIGNED}
        legal = assigned | {abc_taxonomy.background}
        changed = out != labels
        assert all(v in legal for v in np.unique(out[changed]))


def test_fuse_idempotent_on_disjoint_masklets(abc_taxonomy):
    rng = np.random.default_rng(11)
    for mode in ("background", "keep"):
        config = FusionConfig(reject_mode=mode)
        for _ in range(10):
            labels = rng.integers(0, 3, size=(12, 12), dtype=np.uint8)
            masklets = []
            for i, x in enumerate(range(0, 12, 4)):
                mask = np.zeros((12, 12), dtype=bool)
                mask[rng.integers(0, 6) : rng.integers(7, 12), x : x + 3] = True
                masklets.append(Masklet(i, float(rng.random()), mask))
            once, _ = fuse(labels, masklets, abc_taxonomy, config)
            twice, _ = fuse(once, masklets, abc_taxonomy, config)
            assert (once == twice).all()
