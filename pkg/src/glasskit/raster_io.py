"""Bit-exact codecs and file I/O for label maps, masklets, and ground truth.

Formats
-------
Label map
    Binary PGM: ``P5\\n<width> <height>\\n255\\n`` followed by width*height
    bytes in row-major order, pixel value = class id.  The writer always
    emits this canonical header; the reader additionally tolerates PNM
    comments and arbitrary header whitespace.

Run-length encoding
    COCO-compatible uncompressed RLE: alternating run lengths over the
    pixels in column-major order (column 0 top to bottom, then column 1,
    ...), first run counting zeros and therefore possibly 0.  The canonical
    form produced by :func:`encode_rle` contains no zero-length interior
    runs.

Masklets
    ``{"size": [H, W], "masklets": [{"id": 1, "score": 0.87,
    "counts": [...]}, ...]}``

Ground truth
    ``{"size": [H, W], "instances": [{"id": 1, "class": "goblet",
    "model": "GOB-01", "counts": [...]}, ...]}``; instance regions must be
    pairwise disjoint.

All codecs are pure functions; arrays are (height, width) numpy rasters.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .taxonomy import Taxonomy

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Run-length encoding


def decode_rle(counts, width: int, height: int) -> np.ndarray:
    """Decode alternating zero/one run lengths into a (height, width) bool mask."""
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise ValidationError("RLE counts must be non-negative")
    total = sum(counts)
    if total != width * height:
        raise ValidationError(
            f"RLE counts sum to {total}, expected {width}*{height}={width * height}"
        )
    values = np.resize(np.array([False, True]), len(counts))
    flat = np.repeat(values, counts)
    # column-major sequence -> (width, height), transpose to row-major raster
    return flat.reshape(width, height).T.copy()


def encode_rle(mask: np.ndarray) -> list[int]:
    """Inverse of :func:`decode_rle`; always emits the canonical form."""
    mask = np.asarray(mask, dtype=bool)
    flat = mask.T.ravel()
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


# ---------------------------------------------------------------------------
# PGM label maps


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos]
        if c in b" \t\r\n":
            pos += 1
        elif c == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in b" \t\r\n":
        pos += 1
    if start == pos:
        raise ValidationError("truncated PGM header")
    return data[start:pos], pos


def _header_int(data: bytes, pos: int, what: str) -> tuple[int, int]:
    token, pos = _next_token(data, pos)
    if not token.isdigit():
        raise ValidationError(f"malformed PGM header: bad {what} {token!r}")
    return int(token), pos


def read_labelmap(path, taxonomy: Taxonomy | None = None) -> np.ndarray:
    """Read a PGM label map; validates pixel range when a taxonomy is given."""
    data = Path(path).read_bytes()
    magic, pos = _next_token(data, 0)
    if magic != b"P5":
        raise ValidationError(f"not a binary PGM (magic {magic!r})")
    width, pos = _header_int(data, pos, "width")
    height, pos = _header_int(data, pos, "height")
    maxval, pos = _header_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise ValidationError("PGM dimensions must be at least 1x1")
    if maxval != 255:
        raise ValidationError(f"unsupported PGM maxval {maxval} (expected 255)")
    if pos >= len(data) or data[pos] not in b" \t\r\n":
        raise ValidationError("malformed PGM header: missing separator")
    pixels = data[pos + 1 :]
    if len(pixels) != width * height:
        raise ValidationError(
            f"PGM pixel data is {len(pixels)} bytes, expected {width * height}"
        )
    labels = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width).copy()
    if taxonomy is not None and int(labels.max()) >= len(taxonomy):
        raise ValidationError(
            f"class id out of range: label map contains {int(labels.max())}, "
            f"taxonomy has {len(taxonomy)} classes"
        )
    return labels


def write_labelmap(labels: np.ndarray, path) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.size == 0:
        raise ValidationError("label map must be a non-empty 2D array")
    if labels.min() < 0 or labels.max() > 255:
        raise ValidationError("label map values must fit in one byte")
    height, width = labels.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# Masklets


@dataclass(eq=False)
class Masklet:
    """One class-agnostic region proposal with its predicted quality score."""

    id: int
    score: float
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 2:
            raise ValidationError("masklet mask must be 2D")
        self.area = int(np.count_nonzero(self.mask))
        if self.area == 0:
            raise ValidationError(f"masklet {self.id} has zero area")
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(
                f"masklet {self.id} score {self.score} outside [0, 1]"
            )
        # (y0, y1, x0, x1) half-open bounds; lets the fusion hot path work on
        # bounding-box slices instead of full-frame arrays
        rows = self.mask.any(axis=1)
        cols = self.mask.any(axis=0)
        self.bbox = (
            int(rows.argmax()),
            self.mask.shape[0] - int(rows[::-1].argmax()),
            int(cols.argmax()),
            self.mask.shape[1] - int(cols[::-1].argmax()),
        )


def _read_size(doc: dict, what: str) -> tuple[int, int]:
    size = doc.get("size")
    if (
        not isinstance(size, (list, tuple))
        or len(size) != 2
        or not all(isinstance(v, int) and v >= 1 for v in size)
    ):
        raise ValidationError(f"{what} document needs \"size\": [H, W]")
    return int(size[0]), int(size[1])


def read_masklets(path) -> list[Masklet]:
    """Load masklets in file order; ids must be unique."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    height, width = _read_size(doc, "masklet")
    masklets = []
    seen = set()
    for entry in doc.get("masklets", []):
        mid = int(entry["id"])
        if mid in seen:
            raise ValidationError(f"duplicate masklet id {mid}")
        seen.add(mid)
        mask = decode_rle(entry["counts"], width, height)
        masklets.append(Masklet(mid, float(entry["score"]), mask))
    return masklets


def write_masklets(masklets, height: int, width: int, path) -> None:
    doc = {
        "size": [height, width],
        "masklets": [
            {"id": m.id, "score": m.score, "counts": encode_rle(m.mask)}
            for m in masklets
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Ground truth


@dataclass(frozen=True)
class Instance:
    class_id: int
    model: str


@dataclass(eq=False)
class GroundTruth:
    """Instance-labeled raster: 0 is background, each instance carries (class, model)."""

    instance_map: np.ndarray
    instances: dict[int, Instance]

    @property
    def height(self) -> int:
        return self.instance_map.shape[0]

    @property
    def width(self) -> int:
        return self.instance_map.shape[1]

    def project_labels(self) -> np.ndarray:
        """Collapse instances to their class ids (the label map metrics compare against)."""
        lut = np.zeros(max(self.instances, default=0) + 1, dtype=np.uint8)
        for iid, inst in self.instances.items():
            lut[iid] = inst.class_id
        return lut[self.instance_map]


def read_groundtruth(path, taxonomy: Taxonomy, strict_models: bool = False) -> GroundTruth:
    """Compose the instance map from per-instance RLEs; overlap is a hard error.

    Model ids missing from the taxonomy registry are logged as warnings by
    default (no merge override will ever apply to them); ``strict_models``
    turns them into errors.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    height, width = _read_size(doc, "ground truth")
    instance_map = np.zeros((height, width), dtype=np.int32)
    instances: dict[int, Instance] = {}
    for entry in doc.get("instances", []):
        iid = int(entry["id"])
        if iid == 0:
            raise ValidationError("instance id 0 is reserved for background")
        if iid in instances:
            raise ValidationError(f"duplicate instance id {iid}")
        class_id = taxonomy.class_by_name(str(entry["class"]))
        if not taxonomy.is_glass(class_id):
            raise ValidationError(
                f"instance {iid} references non-glass class {entry['class']!r}"
            )
        model = str(entry["model"])
        if model not in taxonomy.models:
            message = f"instance {iid} model {model!r} not in taxonomy registry"
            if strict_models:
                raise ValidationError(message)
            log.warning("%s: %s", path, message)
        mask = decode_rle(entry["counts"], width, height)
        clash = mask & (instance_map != 0)
        if clash.any():
            y, x = np.argwhere(clash)[0]
            raise ValidationError(f"instances overlap at pixel ({x}, {y})")
        instance_map[mask] = iid
        instances[iid] = Instance(class_id, model)
    return GroundTruth(instance_map, instances)


def write_groundtruth(gt: GroundTruth, taxonomy: Taxonomy, path) -> None:
    doc = {
        "size": [gt.height, gt.width],
        "instances": [
            {
                "id": iid,
                "class": taxonomy.name_of(inst.class_id),
                "model": inst.model,
                "counts": encode_rle(gt.instance_map == iid),
            }
            for iid, inst in sorted(gt.instances.items())
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
