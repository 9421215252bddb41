"""Retrieval metrics and the exact Wilcoxon signed-rank test.

Ranks are 1-based.  For queries with several valid matches the rank is
the minimum rank over all of them (the usual multi-caption protocol).
Distance ties are broken by gallery index so early-training evaluations,
where many distances coincide, stay reproducible.
"""

from __future__ import annotations

import math

import numpy as np

PROTOCOLS = ("first_relevant",)


class DegenerateSampleError(ValueError):
    """The signed-rank test got too few nonzero differences."""


def rank_queries(distances, relevant, protocol: str = "first_relevant") -> np.ndarray:
    """Rank of the first relevant gallery item per query.

    The gallery is sorted ascending by (distance, index); the rank is
    one plus the number of irrelevant items sorting strictly before the
    best relevant one.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    D = np.asarray(distances, dtype=np.float64)
    if D.ndim != 2:
        raise ValueError("distances must be a queries x gallery matrix")
    if not np.all(np.isfinite(D)):
        raise ValueError("non-finite distances")
    n_queries, n_gallery = D.shape
    if len(relevant) != n_queries:
        raise ValueError("need one relevance set per query")
    ranks = np.empty(n_queries, dtype=np.int64)
    gallery_idx = np.arange(n_gallery)
    for q in range(n_queries):
        rel = np.asarray(sorted(relevant[q]), dtype=np.int64)
        if rel.size == 0:
            raise ValueError(f"query {q} has an empty relevance set")
        if rel.min() < 0 or rel.max() >= n_gallery:
            raise ValueError(f"query {q} has out-of-range relevant indices")
        order = np.lexsort((gallery_idx, D[q]))
        positions = np.empty(n_gallery, dtype=np.int64)
        positions[order] = np.arange(n_gallery)
        ranks[q] = positions[rel].min() + 1
    return ranks


def recall_at_k(ranks, k: int) -> float:
    """Percentage of queries whose first relevant item ranks within k."""
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("empty rank list")
    if k < 1:
        raise ValueError("k must be at least 1")
    return 100.0 * float((ranks <= k).sum()) / ranks.size


def median_rank(ranks) -> float:
    """Median rank; even counts use the midpoint of the middle pair."""
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("empty rank list")
    return float(np.median(ranks))


def mean_rank(ranks) -> float:
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("empty rank list")
    return float(np.mean(ranks))


def _rank_with_ties(values: np.ndarray) -> np.ndarray:
    """Ascending ranks, tied values receiving the mean of their ranks."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


_EXACT_LIMIT = 20
_TAIL_TIE_TOL = 1e-9


def wilcoxon_signed_rank(
    x, y, alternative: str = "two-sided"
) -> tuple[float, float]:
    """Paired signed-rank test; the statistic is W+ (positive-rank sum).

    Zero differences are dropped; tied magnitudes receive mean ranks.
    For n <= 20 the p-value is exact, from enumerating all 2^n sign
    assignments of the observed ranks; beyond that a normal
    approximation with tie and continuity corrections is used.
    'greater' tests whether x tends to exceed y.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError("alternative must be two-sided, greater or less")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and the same length")
    diffs = x - y
    diffs = diffs[diffs != 0.0]
    if diffs.size == 0:
        raise DegenerateSampleError("all differences are zero")
    if diffs.size < 3:
        raise DegenerateSampleError(
            f"only {diffs.size} nonzero differences; need at least 3"
        )
    n = diffs.size
    ranks = _rank_with_ties(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    if n <= _EXACT_LIMIT:
        p = _exact_p(ranks, w_plus, alternative)
    else:
        p = _normal_p(ranks, w_plus, alternative)
    return w_plus, p


def _exact_p(ranks: np.ndarray, w: float, alternative: str) -> float:
    # all 2^n positive-rank sums, built by doubling
    sums = np.zeros(1)
    for r in ranks:
        sums = np.concatenate([sums, sums + r])
    total = sums.size
    if alternative == "greater":
        return float((sums >= w - _TAIL_TIE_TOL).sum()) / total
    if alternative == "less":
        return float((sums <= w + _TAIL_TIE_TOL).sum()) / total
    center = ranks.sum() / 2.0
    dev = abs(w - center)
    return float((np.abs(sums - center) >= dev - _TAIL_TIE_TOL).sum()) / total


def _normal_p(ranks: np.ndarray, w: float, alternative: str) -> float:
    n = ranks.size
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, counts = np.unique(ranks, return_counts=True)
    var -= float((counts**3 - counts).sum()) / 48.0
    sd = math.sqrt(var)

    def upper(value: float) -> float:     # P(W+ >= value), continuity corrected
        return 0.5 * math.erfc((value - 0.5 - mu) / (sd * math.sqrt(2)))

    def lower(value: float) -> float:
        return 0.5 * math.erfc((mu - value - 0.5) / (sd * math.sqrt(2)))

    if alternative == "greater":
        return upper(w)
    if alternative == "less":
        return lower(w)
    dev = abs(w - mu)
    return min(1.0, upper(mu + dev) + lower(mu - dev))


def metric_record(ranks, ks) -> dict:
    """One metrics row: R@K for each requested K plus MdR and MnR.

    Recall is checked to be non-decreasing in K before the record is
    returned, so a violation can never reach an emitted report.
    """
    record = {}
    previous = None
    for k in sorted(ks):
        value = recall_at_k(ranks, k)
        if previous is not None and value < previous:
            raise AssertionError("recall must be non-decreasing in K")
        previous = value
        record[f"R@{k}"] = value
    record["MdR"] = median_rank(ranks)
    record["MnR"] = mean_rank(ranks)
    return record


def format_table(rows: list[dict], columns: list[str], title: str = "") -> str:
    """Plain-text aligned table in the result-table layout."""
    widths = {c: len(c) for c in columns}
    rendered = []
    for row in rows:
        cells = {}
        for c in columns:
            value = row.get(c, "")
            cells[c] = f"{value:.2f}" if isinstance(value, float) else str(value)
            widths[c] = max(widths[c], len(cells[c]))
        rendered.append(cells)
    lines = []
    if title:
        lines.append(title)
    header = "  ".join(c.ljust(widths[c]) for c in columns)
    lines.append(header)
    lines.append("-" * len(header))
    for cells in rendered:
        lines.append("  ".join(cells[c].ljust(widths[c]) for c in columns))
    return "\n".join(lines)
