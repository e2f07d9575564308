"""Post-processing and merge-aware evaluation for glass segmentation maps.

The pipeline refines semantic label maps with class-agnostic masklets,
derives class-merging policies from confusion matrices, and scores
predictions with merge-aware per-class IoU and accuracy.
"""

__version__ = "0.1.0"

from .errors import ValidationError
from .fixtures import (
    PerturbParams,
    SceneParams,
    gen_masklets,
    gen_scene,
    interior_patchiness_params,
    perturb_labels,
)
from .fusion import FusionConfig, MaskletDecision, classify_masklet, fuse
from .merging import (
    MergeDerivationConfig,
    MergePolicy,
    OverrideRule,
    accumulate_confusion,
    build_merge_policy,
    derive_similar_pairs,
    identity_policy,
    load_policy,
    new_confusion,
    row_normalize,
    save_policy,
)
from .metrics import (
    MetricsReport,
    Tally,
    allowed_labels,
    compute_metrics,
    merge_tallies,
    tally_image,
)
from .raster_io import (
    GroundTruth,
    Instance,
    Masklet,
    decode_rle,
    encode_rle,
    read_groundtruth,
    read_labelmap,
    read_masklets,
    write_groundtruth,
    write_labelmap,
    write_masklets,
)
from .taxonomy import (
    ClassDef,
    Taxonomy,
    default_taxonomy,
    load_taxonomy,
    read_taxonomy,
    write_taxonomy,
)
