"""Class universe and 3D-model registry.

A taxonomy declares the ordered class list (exactly one background class
plus glass categories), the registry mapping 3D-model ids to their glass
class, and the set of classes treated as unseen for bookkeeping.  Class ids
are positional: declaration order starting at 0.  Instances are immutable
after loading and safe to share across worker threads.

Config document (UTF-8 JSON)::

    {
      "classes": [{"name": "background", "kind": "background"},
                  {"name": "goblet", "kind": "glass"}, ...],
      "models": {"POKAL": "water_glass", ...},
      "unseen": ["goblet"]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

from .errors import ValidationError

KIND_BACKGROUND = "background"
KIND_GLASS = "glass"


@dataclass(frozen=True)
class ClassDef:
    name: str
    kind: str


@dataclass(frozen=True)
class Taxonomy:
    classes: tuple[ClassDef, ...]
    models: dict[str, int] = field(default_factory=dict)
    unseen: frozenset[int] = frozenset()

    def __post_init__(self):
        names = set()
        backgrounds = []
        for cid, cls in enumerate(self.classes):
            if not cls.name:
                raise ValidationError("class name must be non-empty")
            if cls.name in names:
                raise ValidationError(f"duplicate class name {cls.name!r}")
            names.add(cls.name)
            if cls.kind == KIND_BACKGROUND:
                backgrounds.append(cid)
            elif cls.kind != KIND_GLASS:
                raise ValidationError(f"unknown class kind {cls.kind!r}")
        if len(backgrounds) > 1:
            raise ValidationError("multiple background classes")
        if not backgrounds:
            raise ValidationError("no background class declared")
        for model, cid in self.models.items():
            if self.classes[cid].kind != KIND_GLASS:
                raise ValidationError(
                    f"model {model!r} must map to a glass class, not background"
                )
        for cid in self.unseen:
            if self.classes[cid].kind != KIND_GLASS:
                raise ValidationError("unseen classes must be glass classes")

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @cached_property
    def background(self) -> int:
        return next(
            cid for cid, c in enumerate(self.classes) if c.kind == KIND_BACKGROUND
        )

    @cached_property
    def glass_ids(self) -> tuple[int, ...]:
        return tuple(
            cid for cid, c in enumerate(self.classes) if c.kind == KIND_GLASS
        )

    @cached_property
    def _ids_by_name(self) -> dict[str, int]:
        return {c.name: cid for cid, c in enumerate(self.classes)}

    def class_by_name(self, name: str) -> int:
        """Exact, case-sensitive name lookup."""
        try:
            return self._ids_by_name[name]
        except KeyError:
            raise ValidationError(f"unknown class name {name!r}") from None

    def name_of(self, class_id: int) -> str:
        return self.classes[class_id].name

    def is_glass(self, class_id: int) -> bool:
        return self.classes[class_id].kind == KIND_GLASS

    def models_of(self, class_id: int) -> tuple[str, ...]:
        return tuple(sorted(m for m, cid in self.models.items() if cid == class_id))

    def to_config(self) -> dict:
        """Config document equal (after load) to this taxonomy."""
        return {
            "classes": [{"name": c.name, "kind": c.kind} for c in self.classes],
            "models": {m: self.name_of(cid) for m, cid in sorted(self.models.items())},
            "unseen": sorted(self.name_of(cid) for cid in self.unseen),
        }


def _from_config(doc: dict) -> Taxonomy:
    if not isinstance(doc, dict) or "classes" not in doc:
        raise ValidationError("taxonomy config must be an object with a 'classes' list")
    classes = []
    for entry in doc["classes"]:
        if not isinstance(entry, dict) or "name" not in entry or "kind" not in entry:
            raise ValidationError("each class needs 'name' and 'kind'")
        classes.append(ClassDef(str(entry["name"]), str(entry["kind"])))
    ids = {c.name: cid for cid, c in enumerate(classes)}

    def lookup(name, what):
        if name not in ids:
            raise ValidationError(f"{what} references unknown class {name!r}")
        return ids[name]

    models = {
        str(model): lookup(cls_name, f"model {model!r}")
        for model, cls_name in doc.get("models", {}).items()
    }
    unseen = frozenset(lookup(n, "unseen") for n in doc.get("unseen", []))
    return Taxonomy(tuple(classes), models, unseen)


def load_taxonomy(text: str) -> Taxonomy:
    """Parse and validate a taxonomy config document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"taxonomy config is not valid JSON: {exc}") from None
    return _from_config(doc)


def read_taxonomy(path) -> Taxonomy:
    return load_taxonomy(Path(path).read_text(encoding="utf-8"))


def write_taxonomy(taxonomy: Taxonomy, path) -> None:
    Path(path).write_text(
        json.dumps(taxonomy.to_config(), indent=2) + "\n", encoding="utf-8"
    )


def default_taxonomy() -> Taxonomy:
    """The bundled config: the eleven published glass categories plus background."""
    text = resources.files("glasskit.data").joinpath("default_taxonomy.json").read_text(
        encoding="utf-8"
    )
    return load_taxonomy(text)
