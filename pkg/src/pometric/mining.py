"""Relevance labels, quadruplet-set construction and negative samplers."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .losses import QuadrupletSets
from .numerics import pairwise_distances


class RelevanceLabel(enum.Enum):
    POSITIVE = "positive"
    PARTIAL = "partial"
    NEGATIVE = "negative"


SOURCE_TAGS = ("manual", "heuristic")


class AnnotationMissingError(ValueError):
    """A record lacks the noun/verb annotations the heuristic needs."""


class LabelCollisionError(ValueError):
    """The same pair was given two different relevance labels."""


class EmptyNegativeSetError(ValueError):
    """A sampler was asked for a negative where the row has none."""


@dataclass(frozen=True, eq=False)
class CaptionRecord:
    """One caption with its annotated lemma sets and feature vector.

    nouns/verbs are None when the record was loaded without annotations;
    empty sets are valid annotations (a caption can simply contain no
    nouns).
    """

    id: str
    video_id: str
    language: str = ""
    text: str = ""
    nouns: frozenset | None = None
    verbs: frozenset | None = None
    features: np.ndarray | None = None


def noun_verb_label(
    query: CaptionRecord, candidate: CaptionRecord
) -> RelevanceLabel | None:
    """Label a caption pair from its annotated noun and verb sets.

    positive  -- identical noun sets and identical verb sets
    partial   -- exactly one of the two sets identical (same nouns with
                 different verbs, or same verbs with different nouns)
    negative  -- no noun in common and no verb in common

    Pairs that fit none of the rules (overlapping but unequal sets) are
    left unlabeled and return None; downstream they default into S-.
    Lemmas are compared as exact lowercase strings.
    """
    if query.video_id == candidate.video_id:
        raise ValueError("heuristic labels apply only across videos")
    for rec in (query, candidate):
        if rec.nouns is None or rec.verbs is None:
            raise AnnotationMissingError(
                f"record {rec.id!r} has no noun/verb annotations"
            )
    q_nouns = {s.lower() for s in query.nouns}
    q_verbs = {s.lower() for s in query.verbs}
    c_nouns = {s.lower() for s in candidate.nouns}
    c_verbs = {s.lower() for s in candidate.verbs}
    same_nouns = q_nouns == c_nouns
    same_verbs = q_verbs == c_verbs
    if same_nouns and same_verbs:
        return RelevanceLabel.POSITIVE
    if same_nouns != same_verbs:
        return RelevanceLabel.PARTIAL
    if not (q_nouns & c_nouns) and not (q_verbs & c_verbs):
        return RelevanceLabel.NEGATIVE
    return None


class RelevanceTable:
    """Sparse (query_id, candidate_id) -> RelevanceLabel map.

    Labels are applied only in the annotated direction; nothing is
    mirrored onto (candidate, query).  Self pairs are rejected and
    re-adding a pair with a different label is a data error.
    """

    def __init__(self, source_tag: str = "manual"):
        if source_tag not in SOURCE_TAGS:
            raise ValueError(f"source_tag must be one of {SOURCE_TAGS}")
        self.source_tag = source_tag
        self._labels: dict[tuple[str, str], RelevanceLabel] = {}

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, pair) -> bool:
        return tuple(pair) in self._labels

    def pairs(self):
        return self._labels.items()

    def add(self, query_id: str, candidate_id: str, label: RelevanceLabel):
        if query_id == candidate_id:
            raise ValueError(f"self pair {query_id!r} is not allowed")
        key = (query_id, candidate_id)
        existing = self._labels.get(key)
        if existing is not None and existing is not label:
            raise LabelCollisionError(
                f"pair {key} labeled both {existing.value} and {label.value}"
            )
        self._labels[key] = label

    def get(self, query_id: str, candidate_id: str) -> RelevanceLabel | None:
        return self._labels.get((query_id, candidate_id))

    def asymmetric_pairs(self) -> list[tuple[str, str]]:
        """Annotated (q, c) whose mirror (c, q) is absent or different."""
        out = []
        for (q, c), label in self._labels.items():
            if self._labels.get((c, q)) is not label:
                out.append((q, c))
        return sorted(out)

    def save_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for (q, c), label in sorted(self._labels.items()):
                fh.write(
                    json.dumps(
                        {
                            "query": q,
                            "candidate": c,
                            "label": label.value,
                            "source": self.source_tag,
                        }
                    )
                    + "\n"
                )

    @classmethod
    def load_jsonl(cls, path) -> "RelevanceTable":
        table = None
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}")
                try:
                    label = RelevanceLabel(rec["label"])
                    source = rec["source"]
                    query, candidate = rec["query"], rec["candidate"]
                except (KeyError, ValueError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad record: {exc}")
                if table is None:
                    table = cls(source_tag=source)
                elif source != table.source_tag:
                    raise ValueError(
                        f"{path}:{lineno}: mixed source tags in one table"
                    )
                table.add(query, candidate, label)
        return table if table is not None else cls()


def shortlist_candidates(
    records: list[CaptionRecord], k: int = 10
) -> dict[str, list[str]]:
    """Per query, the k most similar other-video captions by cosine.

    Dataset-preparation helper mirroring how annotation candidates are
    shortlisted; uses the records' precomputed feature vectors.
    """
    if any(r.features is None for r in records):
        raise ValueError("shortlisting needs feature vectors on every record")
    feats = np.stack([np.asarray(r.features, dtype=np.float64) for r in records])
    dist = pairwise_distances(feats, feats, "cosine")
    out: dict[str, list[str]] = {}
    for qi, query in enumerate(records):
        order = np.lexsort((np.arange(len(records)), dist[qi]))
        picks = []
        for ci in order:
            if records[ci].video_id == query.video_id:
                continue
            picks.append(records[ci].id)
            if len(picks) == k:
                break
        out[query.id] = picks
    return out


def heuristic_table(
    records: list[CaptionRecord], shortlist_k: int | None = None
) -> RelevanceTable:
    """Noun-verb labels over caption pairs from different videos.

    With shortlist_k set, each query only labels its k nearest
    candidates by caption-feature cosine similarity.
    """
    table = RelevanceTable(source_tag="heuristic")
    by_id = {r.id: r for r in records}
    if shortlist_k is not None:
        shortlist = shortlist_candidates(records, k=shortlist_k)
        candidate_ids = {q: ids for q, ids in shortlist.items()}
    else:
        candidate_ids = {
            q.id: [c.id for c in records if c.video_id != q.video_id]
            for q in records
        }
    for query in records:
        for cid in candidate_ids[query.id]:
            label = noun_verb_label(query, by_id[cid])
            if label is not None:
                table.add(query.id, cid, label)
    return table


def build_quadruplet_sets(
    batch: list[tuple[str, str]], table: RelevanceTable | None = None
) -> QuadrupletSets:
    """Assign every batch pair to S+, S- or S~.

    batch lists (video_id, caption_id) ground-truth matches in diagonal
    order.  (i, i) always lands in S+; an off-diagonal (i, j) follows
    the table lookup (caption_i, caption_j) and defaults to S- when the
    pair is unannotated.
    """
    n = len(batch)
    s_plus = {(i, i) for i in range(n)}
    s_minus, s_partial = set(), set()
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            label = (
                table.get(batch[i][1], batch[j][1]) if table is not None else None
            )
            if label is RelevanceLabel.POSITIVE:
                s_plus.add((i, j))
            elif label is RelevanceLabel.PARTIAL:
                s_partial.add((i, j))
            else:
                s_minus.add((i, j))
    return QuadrupletSets(
        s_plus=frozenset(s_plus),
        s_minus=frozenset(s_minus),
        s_partial=frozenset(s_partial),
    )


def _row_negatives(row: int, s_minus) -> list[int]:
    cands = sorted(j for i, j in s_minus if i == row)
    if not cands:
        raise EmptyNegativeSetError(f"row {row} has no negatives")
    return cands


def hardest_negative(D, row: int, s_minus) -> int:
    """Closest negative to the anchor; ties go to the smallest index."""
    D = np.asarray(D, dtype=np.float64)
    cands = _row_negatives(row, s_minus)
    dists = D[row, cands]
    return cands[int(np.argmin(dists))]


def semi_hard_negative(
    D, row: int, d_pos: float, margin: float, s_minus, rng: np.random.Generator
) -> int:
    """Uniform draw among negatives inside (d_pos, d_pos + margin).

    Falls back to the hardest negative when the band is empty.
    """
    D = np.asarray(D, dtype=np.float64)
    cands = _row_negatives(row, s_minus)
    band = [j for j in cands if d_pos < D[row, j] < d_pos + margin]
    if not band:
        return hardest_negative(D, row, s_minus)
    return int(band[rng.integers(len(band))])


def distance_weighted_negative(
    D,
    row: int,
    s_minus,
    embed_dim: int,
    clamp: float,
    rng: np.random.Generator,
) -> int:
    """Sample a negative with probability proportional to min(clamp, 1/q(d)).

    q(d) = d^(dim-2) * (1 - d^2/4)^((dim-3)/2) is the pairwise-distance
    density on the unit (dim-1)-sphere, so weighting by its inverse
    flattens the distance distribution of drawn negatives.  Distances
    are clipped to [0.05, 1.99] before weighting; embeddings are assumed
    unit-normalized.  The clamp keeps near-duplicate points from
    dominating; clamp=inf disables it.
    """
    if embed_dim < 3:
        raise ValueError("distance-weighted sampling needs embed_dim >= 3")
    D = np.asarray(D, dtype=np.float64)
    cands = _row_negatives(row, s_minus)
    d = np.clip(D[row, cands], 0.05, 1.99)
    # log(1/q); the clamp is applied in the log domain to dodge overflow
    log_inv_q = -((embed_dim - 2) * np.log(d)
                  + 0.5 * (embed_dim - 3) * np.log(1.0 - 0.25 * d**2))
    log_w = np.minimum(log_inv_q, np.log(clamp)) if np.isfinite(clamp) else log_inv_q
    w = np.exp(log_w - log_w.max())
    probs = w / w.sum()
    return int(np.asarray(cands)[rng.choice(len(cands), p=probs)])
