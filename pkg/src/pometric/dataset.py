"""JSONL dataset ingestion and the train/val/test bundle.

One record per line:

    {"id": str, "split": "train"|"val"|"test", "video_id": str,
     "language": str, "features": [float, ...],
     "caption": {"text": str, "nouns": [str], "verbs": [str]}}

The caption block is optional; records without one are gallery-only
items (the video side, or points of a single-modality dataset).  Schema
violations report the offending line number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .mining import CaptionRecord

SPLITS = ("train", "val", "test")
_REQUIRED_KEYS = {"id", "split", "video_id", "language", "features"}
_ALLOWED_KEYS = _REQUIRED_KEYS | {"caption"}
_CAPTION_KEYS = {"text", "nouns", "verbs"}


class SchemaError(ValueError):
    """A dataset record violates the JSONL schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True, eq=False)
class Item:
    """One dataset row: an embedded item, optionally carrying a caption."""

    id: str
    split: str
    video_id: str
    language: str
    features: np.ndarray
    caption: CaptionRecord | None = None

    @property
    def has_caption(self) -> bool:
        return self.caption is not None


@dataclass
class DatasetBundle:
    train: list[Item] = field(default_factory=list)
    val: list[Item] = field(default_factory=list)
    test: list[Item] = field(default_factory=list)

    def all_items(self) -> list[Item]:
        return [*self.train, *self.val, *self.test]

    @property
    def is_cross_modal(self) -> bool:
        return any(item.has_caption for item in self.all_items())

    def validate(self):
        seen: set[str] = set()
        dims: dict[bool, int] = {}   # per side: caption items vs video items
        for item in self.all_items():
            if item.id in seen:
                raise SchemaError(f"duplicate id {item.id!r}")
            seen.add(item.id)
            side = item.has_caption
            dim = item.features.shape[0]
            if side not in dims:
                dims[side] = dim
            elif dims[side] != dim:
                raise SchemaError(
                    f"feature dimension mismatch on {item.id!r}: "
                    f"{dim} vs {dims[side]}"
                )
        if self.is_cross_modal:
            # every test video needs a matched test caption, and vice versa
            test_caption_videos = {
                i.video_id for i in self.test if i.has_caption
            }
            test_video_ids = {
                i.video_id for i in self.test if not i.has_caption
            }
            for item in self.test:
                if not item.has_caption and item.video_id not in test_caption_videos:
                    raise SchemaError(
                        f"test video {item.id!r} has no matched caption"
                    )
                if item.has_caption and item.video_id not in test_video_ids:
                    raise SchemaError(
                        f"test caption {item.id!r} has no matched video item"
                    )
        else:
            # single modality: test queries need same-group gallery items
            train_videos = {i.video_id for i in self.train}
            for item in self.test:
                if item.video_id not in train_videos:
                    raise SchemaError(
                        f"test item {item.id!r} has no gallery items to match"
                    )


def _parse_record(rec: dict, lineno: int) -> Item:
    if not isinstance(rec, dict):
        raise SchemaError("record is not a JSON object", lineno)
    missing = _REQUIRED_KEYS - rec.keys()
    if missing:
        raise SchemaError(f"missing field {sorted(missing)[0]!r}", lineno)
    unknown = rec.keys() - _ALLOWED_KEYS
    if unknown:
        raise SchemaError(f"unknown field {sorted(unknown)[0]!r}", lineno)
    if rec["split"] not in SPLITS:
        raise SchemaError(f"split must be one of {SPLITS}", lineno)
    features = rec["features"]
    if (
        not isinstance(features, list)
        or not features
        or not all(isinstance(v, (int, float)) for v in features)
    ):
        raise SchemaError("'features' must be a non-empty list of reals", lineno)
    arr = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise SchemaError("'features' must be finite", lineno)
    caption = None
    if "caption" in rec:
        cap = rec["caption"]
        if not isinstance(cap, dict) or cap.keys() - _CAPTION_KEYS:
            raise SchemaError("malformed 'caption' block", lineno)
        caption = CaptionRecord(
            id=rec["id"],
            video_id=rec["video_id"],
            language=rec["language"],
            text=cap.get("text", ""),
            nouns=frozenset(cap["nouns"]) if "nouns" in cap else None,
            verbs=frozenset(cap["verbs"]) if "verbs" in cap else None,
            features=arr,
        )
    return Item(
        id=str(rec["id"]),
        split=rec["split"],
        video_id=str(rec["video_id"]),
        language=str(rec["language"]),
        features=arr,
        caption=caption,
    )


def load_dataset(path) -> DatasetBundle:
    """Parse and validate a JSONL dataset file."""
    bundle = DatasetBundle()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc}", lineno)
            item = _parse_record(rec, lineno)
            getattr(bundle, item.split).append(item)
    bundle.validate()
    return bundle


def write_jsonl(records: list[dict], path):
    """Write dataset records; float repr round-trips bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
