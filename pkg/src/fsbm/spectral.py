"""Spectral initialization: adjacency embedding, k-means, and k-center."""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputWarning, InputError, NumericalError
from .network import check_adjacency


@dataclass(frozen=True)
class SpectralEmbedding:
    """Leading eigenvectors of A (columns orthonormal) and row-normalized copy.

    Zero rows (isolated in the leading subspace) stay zero in the
    normalized copy.
    """

    vectors: np.ndarray     # (n, K+1)
    normalized: np.ndarray  # (n, K+1)


def embed(A, K):
    """Embedding from the K+1 largest-magnitude eigenvalues of A."""
    A = check_adjacency(A)
    n = A.shape[0]
    if n < K + 1:
        raise InputError(f"need n >= K+1 = {K + 1}, got n = {n}")
    try:
        vals, vecs = np.linalg.eigh(A.astype(float))
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(-np.abs(vals), kind="stable")[: K + 1]
    V = vecs[:, order]
    norms = np.linalg.norm(V, axis=1)
    normalized = np.zeros_like(V)
    nz = norms > 0
    normalized[nz] = V[nz] / norms[nz, None]
    return SpectralEmbedding(vectors=V, normalized=normalized)


def _canonical_labels(assign):
    """Relabel clusters by first occurrence so output is order-deterministic."""
    out = np.empty_like(assign)
    mapping = {}
    for i, a in enumerate(assign):
        if a not in mapping:
            mapping[a] = len(mapping)
        out[i] = mapping[a]
    return out


def _kmeans_once(points, k, rng):
    """k-means++ seeding then Lloyd iterations; returns (labels, inertia)."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j:] = points[rng.integers(n, size=k - j)]
            break
        centers[j] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    for _ in range(300):
        dist = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = dist.argmin(axis=1)
        new_centers = centers.copy()
        for j in range(k):
            mask = assign == j
            if mask.any():
                new_centers[j] = points[mask].mean(axis=0)
            else:
                # Reseed an empty cluster at the worst-served point.
                far = dist[np.arange(n), assign].argmax()
                new_centers[j] = points[far]
        if np.allclose(new_centers, centers, rtol=0.0, atol=1e-12):
            centers = new_centers
            break
        centers = new_centers
    dist = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = dist.argmin(axis=1)
    return assign, float(dist[np.arange(n), assign].sum())


def _warn_if_few_rows(points, k):
    if np.unique(points, axis=0).shape[0] < k:
        warnings.warn(
            f"fewer than {k} distinct embedding rows; some classes will be empty",
            DegenerateInputWarning,
            stacklevel=3,
        )


def approx_kmeans(E, K, restarts=20, seed=0):
    """Best-of-restarts k-means labels on the normalized embedding rows.

    Ties between restarts resolve to the lowest restart index, so output
    is deterministic given the seed. Identical rows always share a label.
    """
    if restarts < 1:
        raise InputError("restarts must be >= 1")
    points = E.normalized
    k = K + 1
    _warn_if_few_rows(points, k)
    best = None
    for r in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        assign, inertia = _kmeans_once(points, k, rng)
        if best is None or inertia < best[0]:
            best = (inertia, assign)
    return _canonical_labels(best[1])


def kcenter_cluster(E, K):
    """Farthest-first traversal labels; max radius within 2x of optimum.

    Deterministic: the first center is the largest-norm row, each next
    center the point farthest from the chosen set, ties to the lowest
    index; assignment ties go to the lowest center index.
    """
    points = E.normalized
    n = points.shape[0]
    k = K + 1
    if n < k:
        raise InputError(f"need n >= K+1 = {k}, got n = {n}")
    _warn_if_few_rows(points, k)
    centers = [int(np.linalg.norm(points, axis=1).argmax())]
    d = np.linalg.norm(points - points[centers[0]], axis=1)
    for _ in range(k - 1):
        nxt = int(d.argmax())
        centers.append(nxt)
        d = np.minimum(d, np.linalg.norm(points - points[nxt], axis=1))
    dist = np.linalg.norm(points[:, None, :] - points[None, centers, :], axis=2)
    return _canonical_labels(dist.argmin(axis=1))


def initial_responsibilities(labels, smoothing=0.05, n_classes=None):
    """Soften hard labels into responsibilities for the variational loop.

    Row i puts 1 - K * smoothing on its label and smoothing elsewhere.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    K = n_classes - 1
    if not 0.0 < smoothing < 1.0 / n_classes:
        raise InputError(f"smoothing must lie in (0, 1/{n_classes})")
    q = np.full((labels.size, n_classes), smoothing)
    q[np.arange(labels.size), labels] = 1.0 - K * smoothing
    return q
