"""Graph and label data types, SBM edge sampling, and clustering metrics.

Community labels take values in {0, ..., K} with 0 the reference
community; the block matrix is (K+1) x (K+1).
"""

import itertools

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError

# Block probabilities are clamped into this interval after fitting.
BLOCK_CLAMP = (1e-6, 1.0 - 1e-6)

# Exhaustive permutation search is exact up to this many classes.
_EXHAUSTIVE_CLASS_LIMIT = 8


def check_adjacency(A):
    """Validate a symmetric binary adjacency matrix with zero diagonal."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"adjacency must be square, got shape {A.shape}")
    if not np.array_equal(A, A.T):
        raise InputError("adjacency must be symmetric")
    if np.any(np.diag(A) != 0):
        raise InputError("adjacency must have zero diagonal")
    if not np.isin(A, (0, 1)).all():
        raise InputError("adjacency entries must be 0 or 1")
    return A.astype(np.int8)


def check_labels(labels, n_classes=None):
    """Validate a label vector with values in {0, ..., K}."""
    z = np.asarray(labels)
    if z.ndim != 1:
        raise InputError(f"labels must be a vector, got shape {z.shape}")
    if z.size == 0:
        raise InputError("labels must be nonempty")
    if not np.issubdtype(z.dtype, np.integer):
        zi = z.astype(np.int64)
        if not np.array_equal(zi, z):
            raise InputError("labels must be integers")
        z = zi
    if z.min() < 0:
        raise InputError("labels must be nonnegative")
    if n_classes is not None and z.max() >= n_classes:
        raise InputError(
            f"label {z.max()} out of range for {n_classes} communities"
        )
    return z.astype(np.int64)


def check_block_matrix(B, n_classes=None):
    """Validate a symmetric block probability matrix."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise InputError(f"block matrix must be square, got shape {B.shape}")
    if not np.allclose(B, B.T, atol=1e-12):
        raise InputError("block matrix must be symmetric")
    if B.min() < 0.0 or B.max() > 1.0:
        raise InputError("block probabilities must lie in [0, 1]")
    if n_classes is not None and B.shape[0] != n_classes:
        raise InputError(
            f"block matrix has {B.shape[0]} classes, expected {n_classes}"
        )
    return B


def clamp_block_matrix(B):
    """Clamp block probabilities away from {0, 1} so logs stay finite."""
    return np.clip(B, BLOCK_CLAMP[0], BLOCK_CLAMP[1])


def sample_sbm(labels, B, seed):
    """Sample an adjacency matrix: A_ij ~ Bernoulli(B[z_i, z_j]) for i < j.

    The upper triangle is drawn independently and mirrored; the diagonal
    is zero. Deterministic given the seed.
    """
    B = check_block_matrix(B)
    z = check_labels(labels, n_classes=B.shape[0])
    n = z.size
    rng = np.random.default_rng(seed)
    P = B[np.ix_(z, z)]
    U = rng.random((n, n))
    iu = np.triu_indices(n, k=1)
    A = np.zeros((n, n), dtype=np.int8)
    A[iu] = (U[iu] < P[iu]).astype(np.int8)
    A += A.T
    return A


def expected_edge_count(labels, B):
    """Sum of B[z_i, z_j] over i < j; the mean number of edges."""
    B = check_block_matrix(B)
    z = check_labels(labels, n_classes=B.shape[0])
    P = B[np.ix_(z, z)]
    return float(np.triu(P, k=1).sum())


def _contingency(a, b):
    ka, kb = a.max() + 1, b.max() + 1
    table = np.zeros((ka, kb), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    return table


def nmi(a, b):
    """Normalized mutual information between two labelings, in [0, 1].

    Uses the arithmetic-mean normalization with the 0*log(0) := 0
    convention; two single-class labelings score 1 by convention.
    """
    a = check_labels(a)
    b = check_labels(b)
    if a.size != b.size:
        raise InputError(f"label lengths differ: {a.size} vs {b.size}")
    n = a.size
    table = _contingency(a, b)
    row = table.sum(axis=1)
    col = table.sum(axis=0)
    row = row[row > 0]
    col = col[col > 0]
    denom = np.sum(row * np.log(row / n)) + np.sum(col * np.log(col / n))
    if denom == 0.0:
        # Both labelings are single-class: identical partitions.
        return 1.0
    nz = table > 0
    nij = table[nz].astype(float)
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz]
    numer = -2.0 * np.sum(nij * np.log(nij * n / outer))
    return float(numer / denom)


def best_label_permutation(zhat, z, n_classes=None):
    """Permutation sigma of class ids minimizing sum(sigma(zhat) != z).

    Exhaustive search (lexicographically smallest tie-break) up to
    8 classes, Hungarian assignment on the confusion matrix beyond.

    Returns:
        (perm, errors) where perm[c] is the class that zhat-class c maps to.
    """
    zhat = check_labels(zhat)
    z = check_labels(z)
    if zhat.size != z.size:
        raise InputError(f"label lengths differ: {zhat.size} vs {z.size}")
    if n_classes is None:
        n_classes = int(max(zhat.max(), z.max())) + 1
    table = _contingency(
        check_labels(zhat, n_classes), check_labels(z, n_classes)
    )
    if table.shape[0] < n_classes or table.shape[1] < n_classes:
        pad = np.zeros((n_classes, n_classes), dtype=np.int64)
        pad[: table.shape[0], : table.shape[1]] = table
        table = pad
    n = zhat.size
    if n_classes <= _EXHAUSTIVE_CLASS_LIMIT:
        best_perm, best_err = None, None
        for perm in itertools.permutations(range(n_classes)):
            matched = sum(table[c, perm[c]] for c in range(n_classes))
            err = n - matched
            if best_err is None or err < best_err:
                best_perm, best_err = perm, err
        return np.array(best_perm, dtype=np.int64), int(best_err)
    rows, cols = linear_sum_assignment(-table)
    perm = np.empty(n_classes, dtype=np.int64)
    perm[rows] = cols
    return perm, int(n - table[rows, cols].sum())


def clustering_error(zhat, z):
    """Minimum number of disagreements over relabelings of zhat."""
    _, err = best_label_permutation(zhat, z)
    return err
