"""Deterministic vector and distance primitives shared by every other module.

All arithmetic runs in float64 and all inputs are validated to be finite,
so downstream tolerances never have to absorb NaN/Inf propagation or
platform drift.  Randomness is always taken from an explicitly seeded
:class:`numpy.random.Generator` (PCG64), which draws identical sequences
across runs and platforms for identical seed keys.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

METRICS = ("euclidean", "cosine")


class ZeroNormError(ValueError):
    """A zero-norm vector was passed where a direction is required."""


def seeded_rng(*key: int) -> np.random.Generator:
    """Generator keyed by one or more integers; same key, same stream.

    Components may be any Python ints; negatives are mapped into the
    unsigned 64-bit range so the key stays well defined.
    """
    if not key:
        raise ValueError("seeded_rng needs at least one key component")
    entropy = [int(k) & 0xFFFFFFFFFFFFFFFF for k in key]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def as_batch(vectors) -> np.ndarray:
    """Coerce input to a 2-D float64 array of row vectors and validate it."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise ValueError(f"expected a batch of vectors, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite entries in embedding batch")
    return arr


def normalize_l2(v) -> np.ndarray:
    """Scale a single vector to unit L2 norm, preserving its direction."""
    arr = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite entries in vector")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ZeroNormError("cannot normalize a zero vector")
    return arr / norm


def normalize_rows(batch) -> np.ndarray:
    """L2-normalize every row of a batch; rejects zero rows."""
    arr = as_batch(batch)
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroNormError("cannot normalize a zero vector")
    return arr / norms


def pairwise_distances(a, b, metric: str = "euclidean") -> np.ndarray:
    """Distance matrix between two batches of row vectors.

    Entry (i, j) is the metric applied to a[i] and b[j].  Euclidean is
    computed from explicit coordinate differences (not the expanded
    quadratic form) so that identical vectors give an exact zero and the
    matrix is exactly symmetric when ``a is b``.  Cosine distance is
    1 - cos(angle), which lies in [0, 2]; it rejects zero-norm rows.
    """
    a = as_batch(a)
    b = as_batch(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"dimensionality mismatch: {a.shape[1]} vs {b.shape[1]}"
        )
    if metric == "euclidean":
        return _euclidean(a, b)
    if metric == "cosine":
        return _cosine(a, b)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def _euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, m = a.shape[0], b.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    # chunk the broadcast so n*m*dim temporaries stay small
    chunk = max(1, int(4_000_000 // max(1, m * a.shape[1])))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        diff = a[start:stop, np.newaxis, :] - b[np.newaxis, :, :]
        out[start:stop] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def _cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise ZeroNormError("cosine distance undefined for zero vectors")
    sim = (a @ b.T) / np.outer(na, nb)
    return np.clip(1.0 - sim, 0.0, 2.0)


def distance_gradients(
    a, b, metric: str, d_grad: np.ndarray, distances: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Chain a distance-matrix gradient back onto the two embedding batches.

    Given dL/dD for D = pairwise_distances(a, b, metric), returns
    (dL/da, dL/db).  Euclidean uses the subgradient 0 at coincident
    points (d = 0), matching the hinge-kink convention used by the
    losses.
    """
    a = as_batch(a)
    b = as_batch(b)
    d_grad = np.asarray(d_grad, dtype=np.float64)
    if d_grad.shape != (a.shape[0], b.shape[0]):
        raise ValueError("d_grad shape does not match the distance matrix")
    if metric == "euclidean":
        d = pairwise_distances(a, b, "euclidean") if distances is None else distances
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(d > 0.0, d_grad / d, 0.0)
        grad_a = w.sum(axis=1, keepdims=True) * a - w @ b
        grad_b = w.sum(axis=0)[:, np.newaxis] * b - w.T @ a
        return grad_a, grad_b
    if metric == "cosine":
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        if np.any(na == 0.0) or np.any(nb == 0.0):
            raise ZeroNormError("cosine distance undefined for zero vectors")
        sim = (a @ b.T) / np.outer(na, nb)
        # d = 1 - u.v/(|u||v|):
        #   dd/du = -v/(|u||v|) + (u.v/(|u||v|)) * u/|u|^2
        gn = d_grad / nb[np.newaxis, :]
        grad_a = -(gn @ b) / na[:, np.newaxis] + a * (
            (d_grad * sim).sum(axis=1) / na**2
        )[:, np.newaxis]
        gm = d_grad / na[:, np.newaxis]
        grad_b = -(gm.T @ a) / nb[:, np.newaxis] + b * (
            (d_grad * sim).sum(axis=0) / nb**2
        )[:, np.newaxis]
        return grad_a, grad_b
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def normalization_gradient(raw, grad_normed) -> np.ndarray:
    """Backward pass of row-wise L2 normalization.

    For u_hat = u/|u| the Jacobian is (I - u_hat u_hat^T)/|u|, applied
    row by row.
    """
    raw = as_batch(raw)
    grad_normed = np.asarray(grad_normed, dtype=np.float64)
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroNormError("cannot normalize a zero vector")
    unit = raw / norms
    inner = (grad_normed * unit).sum(axis=1, keepdims=True)
    return (grad_normed - inner * unit) / norms
