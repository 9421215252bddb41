"""Synthetic concentric-ring retrieval benchmark.

Each of ``n_groups`` well-separated groups is an inner disc plus the
annulus around it, sized so both regions have the same area
(outer radius = inner * sqrt(2)).  Odd class ids are the discs, even ids
the annuli; the disc and annulus of one group form the partial-relevance
pair that the quadruplet loss places in its middle margin band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .mining import RelevanceLabel
from .numerics import seeded_rng


def split_budget(total: int, n_classes: int) -> list[int]:
    """Split a point budget as evenly as possible across classes.

    The remainder is assigned round-robin in class-id order, so a budget
    of 100 over 8 classes gives 13 points to classes 1-4 and 12 to 5-8.
    """
    if total < n_classes:
        raise ValueError("budget must allow at least one point per class")
    base, rem = divmod(total, n_classes)
    return [base + (1 if c < rem else 0) for c in range(n_classes)]


def _default_centers(n_groups: int, inner_radius: float) -> tuple[tuple[float, float], ...]:
    r = inner_radius
    if n_groups == 1:
        return ((0.0, 0.0),)
    if n_groups == 4:
        return ((3 * r, 3 * r), (-3 * r, 3 * r), (-3 * r, -3 * r), (3 * r, -3 * r))
    # general case: a circle wide enough that groups cannot touch
    outer = r * math.sqrt(2)
    ring = max(3 * r, 1.1 * outer / math.sin(math.pi / n_groups))
    return tuple(
        (ring * math.cos(2 * math.pi * k / n_groups),
         ring * math.sin(2 * math.pi * k / n_groups))
        for k in range(n_groups)
    )


@dataclass(frozen=True)
class RingSpec:
    """Geometry, per-class point counts and the generation seed."""

    inner_radius: float = 1.0
    n_groups: int = 4
    centers: tuple[tuple[float, float], ...] | None = None
    points_per_class_train: int | Sequence[int] = 13
    points_per_class_test: int | Sequence[int] = 20
    seed: int = 0

    def __post_init__(self):
        if not self.inner_radius > 0:
            raise ValueError("inner_radius must be positive")
        if self.n_groups < 1:
            raise ValueError("need at least one group")
        centers = self.centers
        if centers is None:
            centers = _default_centers(self.n_groups, self.inner_radius)
        centers = tuple((float(x), float(y)) for x, y in centers)
        object.__setattr__(self, "centers", centers)
        if len(centers) != self.n_groups:
            raise ValueError("need one center per group")
        min_sep = 2 * self.outer_radius
        for a in range(len(centers)):
            for b in range(a + 1, len(centers)):
                sep = math.dist(centers[a], centers[b])
                if sep <= min_sep:
                    raise ValueError(
                        f"centers {a} and {b} are {sep:.3f} apart; groups "
                        f"need separation > {min_sep:.3f}"
                    )
        object.__setattr__(
            self, "points_per_class_train",
            self._counts(self.points_per_class_train),
        )
        object.__setattr__(
            self, "points_per_class_test",
            self._counts(self.points_per_class_test),
        )

    def _counts(self, value) -> tuple[int, ...]:
        if isinstance(value, int):
            counts = (value,) * self.n_classes
        else:
            counts = tuple(int(v) for v in value)
        if len(counts) != self.n_classes:
            raise ValueError(f"need one count per class ({self.n_classes})")
        if any(c < 0 for c in counts):
            raise ValueError("point counts must be non-negative")
        return counts

    @property
    def outer_radius(self) -> float:
        # equal-area constraint: pi*r^2 = pi*(R^2 - r^2)  =>  R = r*sqrt(2)
        return self.inner_radius * math.sqrt(2)

    @property
    def n_classes(self) -> int:
        return 2 * self.n_groups


@dataclass(frozen=True)
class LabeledPoint:
    xy: tuple[float, float]
    class_id: int


def _sample_class(spec: RingSpec, class_id: int, count: int, rng) -> list[LabeledPoint]:
    group = (class_id - 1) // 2
    cx, cy = spec.centers[group]
    r_in, r_out = spec.inner_radius, spec.outer_radius
    points = []
    for _ in range(count):
        u = rng.random()
        theta = rng.random() * 2 * math.pi
        if class_id % 2 == 1:
            radius = r_in * math.sqrt(u)                      # uniform on the disc
        else:
            radius = math.sqrt(r_in**2 + u * (r_out**2 - r_in**2))  # uniform on the annulus
        points.append(
            LabeledPoint(
                xy=(cx + radius * math.cos(theta), cy + radius * math.sin(theta)),
                class_id=class_id,
            )
        )
    return points


def generate_rings(spec: RingSpec) -> tuple[list[LabeledPoint], list[LabeledPoint]]:
    """Sample the train and test point sets for one seed.

    Points are uniform by area within their class region; counts per
    class are exactly as the spec states.  The same seed always yields
    the identical dataset.
    """
    rng = seeded_rng(spec.seed)
    train, test = [], []
    for class_id in range(1, spec.n_classes + 1):
        train.extend(
            _sample_class(spec, class_id, spec.points_per_class_train[class_id - 1], rng)
        )
    for class_id in range(1, spec.n_classes + 1):
        test.extend(
            _sample_class(spec, class_id, spec.points_per_class_test[class_id - 1], rng)
        )
    return train, test


def ring_relevance(class_a: int, class_b: int, n_classes: int = 8) -> RelevanceLabel:
    """Three-way relevance between ring classes.

    Same class is positive; the disc/annulus pair of one group
    ({2k-1, 2k}) is partial in both directions; any other combination is
    negative.
    """
    for c in (class_a, class_b):
        if not 1 <= c <= n_classes:
            raise ValueError(f"class {c} outside [1, {n_classes}]")
    if class_a == class_b:
        return RelevanceLabel.POSITIVE
    if (max(class_a, class_b) % 2 == 0
            and max(class_a, class_b) - min(class_a, class_b) == 1):
        return RelevanceLabel.PARTIAL
    return RelevanceLabel.NEGATIVE


def class_video_id(class_id: int) -> str:
    """video_id naming that lets the loader recover the class."""
    return f"class-{class_id}"


def class_from_video_id(video_id: str) -> int:
    try:
        prefix, num = video_id.rsplit("-", 1)
        if prefix != "class":
            raise ValueError
        return int(num)
    except ValueError:
        raise ValueError(
            f"video_id {video_id!r} does not follow the class-<k> naming"
        )


def to_records(
    train: list[LabeledPoint], test: list[LabeledPoint]
) -> list[dict]:
    """Dataset JSONL records; features are the raw 2-D coordinates."""
    records = []
    for split, points in (("train", train), ("test", test)):
        for k, pt in enumerate(points):
            records.append(
                {
                    "id": f"{split}-{k:05d}",
                    "split": split,
                    "video_id": class_video_id(pt.class_id),
                    "language": "synthetic",
                    "features": [pt.xy[0], pt.xy[1]],
                }
            )
    return records
