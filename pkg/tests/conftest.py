import json

import numpy as np
import pytest

from glasskit import GroundTruth, Instance, Taxonomy, default_taxonomy, load_taxonomy

ABC_CONFIG = json.dumps(
    {
        "classes": [
            {"name": "background", "kind": "background"},
            {"name": "goblet", "kind": "glass"},
            {"name": "water_glass", "kind": "glass"},
        ],
        "models": {"POKAL": "water_glass", "SVALKA": "goblet"},
        "unseen": ["goblet"],
    }
)


@pytest.fixture
def abc_taxonomy() -> Taxonomy:
    """background=0, goblet=1, water_glass=2."""
    return load_taxonomy(ABC_CONFIG)


@pytest.fixture(scope="session")
def paper_taxonomy() -> Taxonomy:
    """The bundled 12-class taxonomy (11 published categories + background)."""
    return default_taxonomy()


def make_gt(instance_rows, instances) -> GroundTruth:
    """GroundTruth from a nested-list instance map and {id: (class, model)}."""
    return GroundTruth(
        np.asarray(instance_rows, dtype=np.int32),
        {iid: Instance(cid, model) for iid, (cid, model) in instances.items()},
    )
