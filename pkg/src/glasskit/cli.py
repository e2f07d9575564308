"""Command-line pipeline: fixture generation, fusion, confusion/merge
derivation, evaluation, and RLE utilities.

Exit codes: 0 success, 1 validation or usage error, 2 I/O error.  Outputs
are deterministic given identical inputs; rerunning a subcommand rewrites
byte-identical files.  The only environment variable consulted is
``GLASSKIT_JOBS`` (default parallelism for manifest processing, overridden
by ``--jobs``).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError
from .fixtures import (
    PerturbParams,
    SceneParams,
    gen_masklets,
    gen_scene,
    interior_patchiness_params,
    perturb_labels,
)
from .fusion import ASSIGNED, FusionConfig, fuse
from .merging import (
    MergeDerivationConfig,
    accumulate_confusion,
    build_merge_policy,
    derive_similar_pairs,
    identity_policy,
    load_policy,
    new_confusion,
    row_normalize,
    save_policy,
)
from .metrics import compute_metrics, merge_tallies, tally_image
from .raster_io import (
    decode_rle,
    encode_rle,
    read_groundtruth,
    read_labelmap,
    read_masklets,
    write_groundtruth,
    write_labelmap,
    write_masklets,
)
from .taxonomy import ClassDef, Taxonomy, default_taxonomy, read_taxonomy, write_taxonomy

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Manifest


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    groundtruth: Path
    prediction: Path
    masklets: Path | None = None


@dataclass(frozen=True)
class Manifest:
    records: tuple[ManifestRecord, ...]
    taxonomy: Path | None = None


def load_manifest(path) -> Manifest:
    """Load a dataset manifest; paths resolve relative to the manifest file."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    base = path.resolve().parent
    records = []
    seen = set()
    for entry in doc.get("records", []):
        try:
            rid = str(entry["id"])
            gt = base / entry["groundtruth"]
            pred = base / entry["prediction"]
        except KeyError as exc:
            raise ValidationError(f"manifest record missing field {exc}") from None
        if rid in seen:
            raise ValidationError(f"duplicate manifest record id {rid!r}")
        seen.add(rid)
        masklets = base / entry["masklets"] if entry.get("masklets") else None
        records.append(ManifestRecord(rid, gt, pred, masklets))
    taxonomy = base / doc["taxonomy"] if doc.get("taxonomy") else None
    return Manifest(tuple(records), taxonomy)


def _manifest_taxonomy(args, manifest: Manifest) -> Taxonomy:
    if args.taxonomy:
        return read_taxonomy(args.taxonomy)
    if manifest.taxonomy:
        return read_taxonomy(manifest.taxonomy)
    raise ValidationError(
        "no taxonomy: pass --taxonomy or add a 'taxonomy' entry to the manifest"
    )


def _map_records(records, fn, jobs: int) -> list:
    """Apply fn to every record; results ordered by record id regardless of schedule."""
    if jobs <= 1:
        results = {r.id: fn(r) for r in records}
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = dict(zip((r.id for r in records), pool.map(fn, records)))
    return [results[rid] for rid in sorted(results)]


def _resolve_jobs(args) -> int:
    if args.jobs is not None:
        return max(1, args.jobs)
    env = os.environ.get("GLASSKIT_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError("GLASSKIT_JOBS must be an integer") from None
    return 1


# ---------------------------------------------------------------------------
# Serialization helpers


def _write_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _num(value: float) -> float | None:
    return None if math.isnan(value) else float(value)


def _fmt(value: float) -> str:
    return "" if math.isnan(value) else repr(float(value))


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_gen_fixtures(args) -> int:
    taxonomy = read_taxonomy(args.taxonomy) if args.taxonomy else default_taxonomy()
    scene_params = SceneParams.for_taxonomy(
        taxonomy,
        width=args.width,
        height=args.height,
        object_count=(args.objects[0], args.objects[1]),
        distractor_prob=args.distractor_prob,
    )
    if args.interior_patchiness is not None:
        perturb = interior_patchiness_params(taxonomy, args.interior_patchiness)
    else:
        perturb = PerturbParams(
            flip_rate=args.flip_rate,
            speckle_rate=args.speckle_rate,
            erosion_rate=args.erosion_rate,
        )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .taxonomy import write_taxonomy

    write_taxonomy(taxonomy, out_dir / "taxonomy.json")
    records = []
    for i in range(args.count):
        name = f"scene-{i:04d}"
        scene_dir = out_dir / name
        scene_dir.mkdir(exist_ok=True)
        base_seed = args.seed + 3 * i
        gt, labels = gen_scene(base_seed, scene_params)
        pred = perturb_labels(labels, perturb, base_seed + 1, taxonomy)
        masklets = gen_masklets(gt, args.jitter, args.spurious, base_seed + 2)
        write_groundtruth(gt, taxonomy, scene_dir / "gt.json")
        write_labelmap(labels, scene_dir / "gt.pgm")
        write_labelmap(pred, scene_dir / "pred.pgm")
        write_masklets(masklets, gt.height, gt.width, scene_dir / "masklets.json")
        records.append(
            {
                "id": name,
                "groundtruth": f"{name}/gt.json",
                "prediction": f"{name}/pred.pgm",
                "masklets": f"{name}/masklets.json",
            }
        )
    _write_json(
        {"schema_version": SCHEMA_VERSION, "taxonomy": "taxonomy.json", "records": records},
        out_dir / "manifest.json",
    )
    if not args.quiet:
        print(f"wrote {args.count} scenes under {out_dir}")
    return 0


def _cmd_fuse(args) -> int:
    taxonomy = read_taxonomy(args.taxonomy)
    labels = read_labelmap(args.labelmap, taxonomy)
    masklets = read_masklets(args.masklets)
    config = FusionConfig(
        glass_fraction_min=args.glass_fraction,
        quality_min=args.quality_min,
        reject_mode=args.reject_mode,
    )
    fused, decisions = fuse(labels, masklets, taxonomy, config)
    write_labelmap(fused, args.out)
    assigned = sum(1 for d in decisions if d.verdict == ASSIGNED)
    dropped = [m.id for m in masklets if m.score < config.quality_min]
    if args.decisions:
        by_id = {m.id: m for m in masklets}
        doc = {
            "schema_version": SCHEMA_VERSION,
            "glass_fraction_min": config.glass_fraction_min,
            "quality_min": config.quality_min,
            "reject_mode": config.reject_mode,
            "dropped": dropped,
            "masklets": [
                {
                    "id": d.masklet_id,
                    "score": by_id[d.masklet_id].score,
                    "verdict": d.verdict,
                    "assigned_class": (
                        taxonomy.name_of(d.assigned_class)
                        if d.assigned_class is not None
                        else None
                    ),
                    "max_glass_fraction": d.max_glass_fraction,
                    "area": by_id[d.masklet_id].area,
                    "class_counts": {
                        taxonomy.name_of(c): int(n)
                        for c, n in enumerate(d.class_counts)
                        if n
                    },
                }
                for d in decisions
            ],
        }
        _write_json(doc, args.decisions)
    if not args.quiet:
        print(
            f"fused {len(masklets)} masklets ({assigned} assigned, "
            f"{len(decisions) - assigned} rejected, {len(dropped)} dropped) -> {args.out}"
        )
    return 0


def _confmat_doc(counts: np.ndarray, taxonomy: Taxonomy) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "classes": [{"name": c.name, "kind": c.kind} for c in taxonomy.classes],
        "counts": counts.tolist(),
    }


def _cmd_confmat(args) -> int:
    manifest = load_manifest(args.manifest)
    taxonomy = _manifest_taxonomy(args, manifest)
    k = len(taxonomy)

    def one(record: ManifestRecord) -> np.ndarray:
        gt = read_groundtruth(record.groundtruth, taxonomy)
        pred = read_labelmap(record.prediction, taxonomy)
        return accumulate_confusion(gt, pred, taxonomy, new_confusion(k))

    matrices = _map_records(manifest.records, one, _resolve_jobs(args))
    total = sum(matrices, new_confusion(k))

    out = Path(args.out)
    if out.suffix == ".json":
        _write_json(_confmat_doc(total, taxonomy), out)
    elif out.suffix == ".csv":
        names = [c.name for c in taxonomy.classes]
        with open(out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", *names])
            for cid, name in enumerate(names):
                writer.writerow([name, *total[cid].tolist()])
    else:
        raise ValidationError("confmat --out must end in .json or .csv")
    if args.fig:
        from .figures import save_confusion_figure

        save_confusion_figure(total, taxonomy, args.fig)
    if not args.quiet:
        print(f"confusion matrix over {len(manifest.records)} records -> {out}")
    return 0


def _load_confmat(path) -> tuple[np.ndarray, list[ClassDef]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "classes" not in doc or "counts" not in doc:
        raise ValidationError("confusion matrix document needs 'classes' and 'counts'")
    classes = [ClassDef(str(c["name"]), str(c["kind"])) for c in doc["classes"]]
    counts = np.asarray(doc["counts"], dtype=np.int64)
    if counts.shape != (len(classes), len(classes)):
        raise ValidationError("confusion counts must be a KxK matrix")
    if (counts < 0).any():
        raise ValidationError("confusion counts must be non-negative")
    return counts, classes


def _cmd_derive_merges(args) -> int:
    counts, classes = _load_confmat(args.confmat)
    if args.taxonomy:
        taxonomy = read_taxonomy(args.taxonomy)
        if list(taxonomy.classes) != classes:
            raise ValidationError(
                "taxonomy classes do not match the confusion matrix classes"
            )
    else:
        taxonomy = Taxonomy(tuple(classes))

    if args.exclude:
        excluded = frozenset(taxonomy.class_by_name(n) for n in args.exclude)
    else:
        excluded = taxonomy.unseen

    water_glass = None
    overrides = []
    if args.overrides:
        doc = json.loads(Path(args.overrides).read_text(encoding="utf-8"))
        water_glass = taxonomy.class_by_name(doc.get("water_glass", "water_glass"))
        for entry in doc.get("overrides", []):
            partner = taxonomy.class_by_name(str(entry["class"]))
            overrides.append((partner, [str(m) for m in entry.get("models", [])]))

    config = MergeDerivationConfig(
        similarity_min=args.threshold,
        excluded=excluded,
        water_glass_class=water_glass,
    )
    pairs = derive_similar_pairs(row_normalize(counts), config, taxonomy)
    policy = build_merge_policy(pairs, overrides, taxonomy, water_glass)
    save_policy(policy, taxonomy, args.out)
    if not args.quiet:
        listing = ", ".join(
            f"{taxonomy.name_of(c)}+{taxonomy.name_of(d)}" for c, d in sorted(pairs)
        )
        print(f"derived {len(pairs)} similar pairs ({listing or 'none'}) -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest)
    taxonomy = _manifest_taxonomy(args, manifest)
    policy = load_policy(args.policy, taxonomy) if args.policy else identity_policy(taxonomy)
    highlight = taxonomy.class_by_name(args.highlight) if args.highlight else None

    def one(record: ManifestRecord):
        gt = read_groundtruth(record.groundtruth, taxonomy)
        pred = read_labelmap(record.prediction, taxonomy)
        return tally_image(gt, pred, policy, taxonomy)

    tallies = _map_records(manifest.records, one, _resolve_jobs(args))
    tally = merge_tallies(tallies)
    report = compute_metrics(tally, taxonomy, highlight)

    doc = {
        "schema_version": SCHEMA_VERSION,
        "num_records": len(manifest.records),
        "policy": str(args.policy) if args.policy else "identity",
        "classes": [
            {
                "id": cid,
                "name": cls.name,
                "kind": cls.kind,
                "unseen": cid in taxonomy.unseen,
                "tp": int(tally.tp[cid]),
                "fp": int(tally.fp[cid]),
                "fn": int(tally.fn[cid]),
                "iou": _num(report.iou[cid]),
                "acc": _num(report.acc[cid]),
            }
            for cid, cls in enumerate(taxonomy.classes)
        ],
        "miou": _num(report.miou),
        "macc": _num(report.macc),
    }
    if highlight is not None:
        doc["highlight"] = {
            "class": taxonomy.name_of(highlight),
            "iou": _num(report.highlight_iou),
        }
    _write_json(doc, args.out)

    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "TP", "FP", "FN", "IoU", "Acc"])
            for cid, cls in enumerate(taxonomy.classes):
                writer.writerow(
                    [
                        cls.name,
                        int(tally.tp[cid]),
                        int(tally.fp[cid]),
                        int(tally.fn[cid]),
                        _fmt(report.iou[cid]),
                        _fmt(report.acc[cid]),
                    ]
                )
            writer.writerow(["mean", "", "", "", _fmt(report.miou), _fmt(report.macc)])
    if args.fig:
        from .figures import save_metrics_figure

        save_metrics_figure(report, tally, taxonomy, args.fig)
    if not args.quiet:
        extra = ""
        if highlight is not None:
            extra = f"  IoU[{taxonomy.name_of(highlight)}]={_fmt(report.highlight_iou) or 'n/a'}"
        print(
            f"evaluated {len(manifest.records)} records: "
            f"mIoU={report.miou:.6f}  mAcc={report.macc:.6f}{extra}"
        )
    return 0


def _cmd_rle_encode(args) -> int:
    labels = read_labelmap(args.mask)
    counts = encode_rle(labels != 0)
    _write_json({"size": list(labels.shape), "counts": counts}, args.out)
    if not args.quiet:
        print(f"encoded {labels.shape[1]}x{labels.shape[0]} mask -> {args.out}")
    return 0


def _cmd_rle_decode(args) -> int:
    doc = json.loads(Path(args.rle).read_text(encoding="utf-8"))
    if "size" not in doc or "counts" not in doc:
        raise ValidationError("RLE document needs 'size' and 'counts'")
    height, width = int(doc["size"][0]), int(doc["size"][1])
    mask = decode_rle(doc["counts"], width, height)
    write_labelmap(mask.astype(np.uint8), args.out)
    if not args.quiet:
        print(f"decoded {width}x{height} mask -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--jobs", type=int, default=None, help="parallel workers for manifest records (default: GLASSKIT_JOBS or 1)")
    common.add_argument("--quiet", action="store_true", help="suppress status output")

    parser = _Parser(prog="glasskit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"glasskit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser(
        "gen-fixtures", parents=[common], help="generate deterministic test scenes"
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=8, help="number of scenes")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--taxonomy", help="taxonomy config (default: bundled taxonomy)")
    p.add_argument("--objects", type=int, nargs=2, default=[3, 4], metavar=("MIN", "MAX"))
    p.add_argument("--distractor-prob", type=float, default=0.25)
    p.add_argument("--jitter", type=int, default=1, help="max masklet dilation/erosion")
    p.add_argument("--spurious", type=int, default=2, help="background masklets per scene")
    p.add_argument("--flip-rate", type=float, default=0.03)
    p.add_argument("--speckle-rate", type=float, default=0.02)
    p.add_argument("--erosion-rate", type=float, default=0.3)
    p.add_argument(
        "--interior-patchiness",
        type=float,
        default=None,
        metavar="RATE",
        help="replace the perturbation with interior-only dropout at RATE",
    )
    p.set_defaults(func=_cmd_gen_fixtures)

    p = sub.add_parser(
        "fuse", parents=[common], help="refine a label map with masklets"
    )
    p.add_argument("--labelmap", required=True, help="input PGM label map")
    p.add_argument("--masklets", required=True, help="masklet JSON")
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--glass-fraction", type=float, default=0.10, help="single-category acceptance threshold (strict)")
    p.add_argument("--quality-min", type=float, default=0.0, help="drop masklets scored below this")
    p.add_argument("--reject-mode", choices=["background", "keep"], default="background")
    p.add_argument("--out", required=True, help="output PGM")
    p.add_argument("--decisions", help="write per-masklet decisions JSON here")
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser(
        "confmat", parents=[common], help="accumulate a confusion matrix over a manifest"
    )
    p.add_argument("--manifest", required=True)
    p.add_argument("--taxonomy", help="overrides the manifest's taxonomy")
    p.add_argument("--out", required=True, help="output .json or .csv")
    p.add_argument("--fig", help="also render a heatmap PNG here")
    p.set_defaults(func=_cmd_confmat)

    p = sub.add_parser(
        "derive-merges", parents=[common], help="derive a merge policy from a confusion matrix"
    )
    p.add_argument("--confmat", required=True, help="confusion matrix JSON")
    p.add_argument("--taxonomy", help="taxonomy config (default: classes embedded in the matrix)")
    p.add_argument("--threshold", type=float, default=0.05, help="similarity threshold (strict)")
    p.add_argument(
        "--exclude",
        action="append",
        metavar="CLASS",
        help="never merge this class (repeatable; default: the taxonomy's unseen classes)",
    )
    p.add_argument("--overrides", help="water-glass model allowlists JSON")
    p.add_argument("--out", required=True, help="output policy JSON")
    p.set_defaults(func=_cmd_derive_merges)

    p = sub.add_parser(
        "evaluate", parents=[common], help="merge-aware IoU/accuracy over a manifest"
    )
    p.add_argument("--manifest", required=True)
    p.add_argument("--taxonomy", help="overrides the manifest's taxonomy")
    p.add_argument("--policy", help="merge policy JSON (default: identity)")
    p.add_argument("--highlight", metavar="CLASS", help="report this class's IoU separately")
    p.add_argument("--out", required=True, help="output report JSON")
    p.add_argument("--csv", help="also write per-class CSV here")
    p.add_argument("--fig", help="also render per-class bars PNG here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("rle", parents=[common], help="mask RLE utilities")
    rle_sub = p.add_subparsers(dest="rle_command", required=True, metavar="MODE")
    enc = rle_sub.add_parser("encode", parents=[common], help="PGM mask -> RLE JSON")
    enc.add_argument("--mask", required=True, help="input PGM (nonzero = set)")
    enc.add_argument("--out", required=True)
    enc.set_defaults(func=_cmd_rle_encode)
    dec = rle_sub.add_parser("decode", parents=[common], help="RLE JSON -> PGM mask")
    dec.add_argument("--rle", required=True)
    dec.add_argument("--out", required=True)
    dec.set_defaults(func=_cmd_rle_decode)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, int):
            return exc.code
        return 0 if exc.code is None else 1
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
