import numpy as np
import pytest

from glasskit import (
    PerturbParams,
    SceneParams,
    ValidationError,
    compute_metrics,
    fuse,
    gen_masklets,
    gen_scene,
    identity_policy,
    interior_patchiness_params,
    perturb_labels,
    tally_image,
)
from glasskit.rng import SplitMix64


def test_splitmix_vector_matches_scalar():
    a = SplitMix64(12345)
    b = SplitMix64(12345)
    scalar = [a.next_u64() for _ in range(100)]
    assert SplitMix64(12345).fill_u64(100).tolist() == scalar
    # interleaved vector/scalar calls stay on the same stream
    head = b.fill_u64(40).tolist()
    tail = [b.next_u64() for _ in range(60)]
    assert head + tail == scalar


def test_splitmix_uniform_range():
    values = SplitMix64(7).fill_uniform(1000)
    assert ((0.0 <= values) & (values < 1.0)).all()
    scalar_rng = SplitMix64(7)
    assert [scalar_rng.uniform() for _ in range(3)] == values[:3].tolist()


def test_splitmix_below():
    rng = SplitMix64(0)
    assert all(0 <= rng.below(7) < 7 for _ in range(100))
    scalar_rng = SplitMix64(3)
    scalar = [scalar_rng.below(13) for _ in range(50)]
    assert SplitMix64(3).fill_below(50, 13).tolist() == scalar


@pytest.fixture(scope="module")
def params(request):
    from glasskit import default_taxonomy

    return SceneParams.for_taxonomy(default_taxonomy())


@pytest.fixture(scope="module")
def taxonomy():
    from glasskit import default_taxonomy

    return default_taxonomy()


def test_gen_scene_deterministic(params):
    gt1, labels1 = gen_scene(77, params)
    gt2, labels2 = gen_scene(77, params)
    assert (gt1.instance_map == gt2.instance_map).all()
    assert gt1.instances == gt2.instances
    assert (labels1 == labels2).all()


def test_gen_scene_object_count(params):
    for seed in range(20):
        gt, _ = gen_scene(seed, params)
        assert len(gt.instances) in (3, 4)


def test_gen_scene_structure(params):
    for seed in range(10):
        gt, labels = gen_scene(seed, params)
        areas = {i: int((gt.instance_map == i).sum()) for i in gt.instances}
        assert all(a > 0 for a in areas.values())
        assert sum(areas.values()) == int((labels != 0).sum())
        for iid, inst in gt.instances.items():
            assert (labels[gt.instance_map == iid] == inst.class_id).all()


def test_gen_scene_distractors_occupy_space_invisibly(taxonomy):
    base = SceneParams.for_taxonomy(taxonomy, distractor_prob=0.0)
    always = SceneParams.for_taxonomy(taxonomy, distractor_prob=1.0)
    gt_a, labels_a = gen_scene(5, base)
    gt_b, labels_b = gen_scene(5, always)
    # distractors render as background: identical label alphabet
    assert set(np.unique(labels_b)) <= set(range(len(taxonomy)))
    assert gt_a.instances == gt_b.instances  # same draws up to distractor stage


def test_perturb_zero_rates_identity(params, taxonomy):
    _, labels = gen_scene(1, params)
    out = perturb_labels(labels, PerturbParams(), 9, taxonomy)
    assert (out == labels).all()


def test_perturb_confusion_pair_total(params, taxonomy):
    _, labels = gen_scene(2, params)
    gt_classes = np.unique(labels[labels != 0])
    src = int(gt_classes[0])
    dst = int(gt_classes[-1]) if len(gt_classes) > 1 else taxonomy.background
    out = perturb_labels(
        labels, PerturbParams(confusion=((src, dst, 1.0),)), 9, taxonomy
    )
    assert not (out == src).any()
    assert (out[labels == src] == dst).all()


def test_perturb_flip_fraction(params, taxonomy):
    _, labels = gen_scene(3, params)
    out = perturb_labels(labels, PerturbParams(flip_rate=0.1), 13, taxonomy)
    fraction = float((out != labels).mean())
    assert 0.05 <= fraction <= 0.15


def test_perturb_deterministic(params, taxonomy):
    _, labels = gen_scene(4, params)
    p = PerturbParams(flip_rate=0.05, speckle_rate=0.1, erosion_rate=0.4)
    a = perturb_labels(labels, p, 21, taxonomy)
    b = perturb_labels(labels, p, 21, taxonomy)
    assert (a == b).all()


def test_perturb_erosion_only_touches_borders(params, taxonomy):
    _, labels = gen_scene(6, params)
    out = perturb_labels(labels, PerturbParams(erosion_rate=1.0), 30, taxonomy)
    changed = out != labels
    assert (out[changed] == taxonomy.background).all()
    # all changed pixels were object borders (4-adjacent to background)
    is_bg = labels == taxonomy.background
    padded = np.pad(is_bg, 1, constant_values=True)
    near_bg = padded[:-2, 1:-1] | padded[2:, 1:-1] | padded[1:-1, :-2] | padded[1:-1, 2:]
    assert (changed <= (~is_bg & near_bg)).all()


def test_perturb_speckle_only_touches_background(params, taxonomy):
    _, labels = gen_scene(7, params)
    out = perturb_labels(labels, PerturbParams(speckle_rate=0.2), 31, taxonomy)
    changed = out != labels
    assert (labels[changed] == taxonomy.background).all()
    assert all(taxonomy.is_glass(int(c)) for c in np.unique(out[changed]))


def test_perturb_validates_rates():
    with pytest.raises(ValidationError):
        PerturbParams(flip_rate=1.5)
    with pytest.raises(ValidationError):
        PerturbParams(confusion=((1, 2, -0.1),))


def test_gen_scene_fails_when_too_crowded(taxonomy):
    # four 8x8-minimum shapes cannot be placed disjointly on 16x16
    cramped = SceneParams.for_taxonomy(
        taxonomy, width=16, height=16, object_count=(4, 4)
    )
    with pytest.raises(ValidationError, match="could not place"):
        gen_scene(0, cramped)


def test_gen_masklets_exact_without_jitter(params):
    gt, _ = gen_scene(8, params)
    masklets = gen_masklets(gt, 0, 0, 50)
    assert [m.id for m in masklets] == sorted(gt.instances)
    for m in masklets:
        assert (m.mask == (gt.instance_map == m.id)).all()
        assert 0.5 <= m.score < 1.0


def test_gen_masklets_spurious_disjoint(params):
    gt, _ = gen_scene(9, params)
    masklets = gen_masklets(gt, 1, 2, 51)
    spurious = masklets[len(gt.instances) :]
    assert len(spurious) == 2
    occupied = gt.instance_map != 0
    for m in spurious:
        assert not (m.mask & occupied).any()
    assert not (spurious[0].mask & spurious[1].mask).any()


def test_gen_masklets_jitter_bounded(params):
    gt, _ = gen_scene(10, params)
    for m in gen_masklets(gt, 2, 0, 52):
        base = gt.instance_map == m.id
        grown = base.copy()
        for _ in range(2):
            p = np.pad(grown, 1)
            grown = (
                p[:-2, :-2] | p[:-2, 1:-1] | p[:-2, 2:]
                | p[1:-1, :-2] | p[1:-1, 1:-1] | p[1:-1, 2:]
                | p[2:, :-2] | p[2:, 1:-1] | p[2:, 2:]
            )
        assert (m.mask <= grown).all()  # never grows past the jitter radius
        assert m.area > 0


def test_fusion_fixed_point_on_exact_masklets(params, taxonomy):
    for seed in range(5):
        gt, labels = gen_scene(seed, params)
        masklets = gen_masklets(gt, 0, 2, seed + 60)
        fused, _ = fuse(labels, masklets, taxonomy)
        assert (fused == labels).all()


def test_fusion_recovers_interior_patchiness(params, taxonomy):
    policy = identity_policy(taxonomy)
    improved = 0
    for seed in range(10):
        gt, labels = gen_scene(seed, params)
        pred = perturb_labels(
            labels, interior_patchiness_params(taxonomy), seed + 200, taxonomy
        )
        fused, _ = fuse(pred, gen_masklets(gt, 0, 0, seed + 300), taxonomy)
        raw = compute_metrics(tally_image(gt, pred, policy, taxonomy), taxonomy)
        post = compute_metrics(tally_image(gt, fused, policy, taxonomy), taxonomy)
        assert post.miou >= raw.miou
        improved += post.miou > raw.miou
    assert improved == 10  # interior dropout always hurts, fusion always heals
