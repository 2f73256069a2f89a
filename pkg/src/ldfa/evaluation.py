"""Embedding quality metrics and reference embeddings.

Includes k-means with purity scoring, 1-NN classification, a PCA baseline and
local-PCA feature blocks that turn the alignment stage into classical LTSA.
"""

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .alignment import GlobalEmbedding
from .neighborhoods import gather, nearest_order
from .scae import LocalFeatureBlock

MAX_LLOYD_ITER = 300


@dataclass(frozen=True)
class ClusteringResult:
    assignment: np.ndarray
    centroids: np.ndarray  # (d, n_clusters)
    inertia: float


def _farthest_point_seeds(points, n_clusters, rng):
    n = points.shape[1]
    chosen = [int(rng.integers(n))]
    d2 = cdist(points.T, points[:, chosen].T, "sqeuclidean")[:, 0]
    for _ in range(1, n_clusters):
        d2m = d2.copy()
        d2m[chosen] = -1.0
        nxt = int(np.argmax(d2m))
        chosen.append(nxt)
        d2 = np.minimum(d2, cdist(points.T, points[:, [nxt]].T, "sqeuclidean")[:, 0])
    return points[:, chosen].copy()


def _lloyd(points, centroids, inertia_trace=None):
    assign = None
    for _ in range(MAX_LLOYD_ITER):
        d2 = cdist(points.T, centroids.T, "sqeuclidean")
        new = np.argmin(d2, axis=1)
        if inertia_trace is not None:
            inertia_trace.append(float(d2[np.arange(len(new)), new].sum()))
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for j in range(centroids.shape[1]):
            sel = assign == j
            if sel.any():
                centroids[:, j] = points[:, sel].mean(axis=1)
    d2 = cdist(points.T, centroids.T, "sqeuclidean")
    inertia = float(d2[np.arange(len(assign)), assign].sum())
    return assign, centroids, inertia


def kmeans(points, n_clusters, restarts=10, seed=0):
    """Best-of-restarts Lloyd iteration from farthest-point seeding.

    ``points`` holds one sample per column. The restart with the lowest inertia
    wins; ties go to the earlier restart.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[1]
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters must be between 1 and N={n}, got {n_clusters}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        assign, cents, inertia = _lloyd(points, _farthest_point_seeds(points, n_clusters, rng))
        if best is None or inertia < best.inertia:
            best = ClusteringResult(assign, cents, inertia)
    return best


def purity(assignment, labels):
    """Fraction of samples that belong to the majority class of their cluster."""
    assignment = list(assignment)
    labels = list(labels)
    if not assignment:
        raise ValueError("purity of an empty clustering is undefined")
    if len(assignment) != len(labels):
        raise ValueError(f"{len(assignment)} cluster assignments but {len(labels)} labels")
    by_cluster = {}
    for a, c in zip(assignment, labels):
        by_cluster.setdefault(a, Counter())[c] += 1
    return sum(max(cnt.values()) for cnt in by_cluster.values()) / len(assignment)


def nearest_indices(queries, reference):
    """Index of the nearest reference column for each query column (ties to lower index)."""
    d2 = cdist(np.asarray(queries, dtype=np.float64).T, np.asarray(reference, dtype=np.float64).T, "sqeuclidean")
    return np.array([nearest_order(row)[0] for row in d2], dtype=np.int64)


def knn_classify(train_points, train_labels, test_points, test_labels):
    """Accuracy of a 1-nearest-neighbour classifier."""
    train_points = np.asarray(train_points, dtype=np.float64)
    test_points = np.asarray(test_points, dtype=np.float64)
    if train_points.shape[1] == 0:
        raise ValueError("1-NN needs at least one training point")
    if train_points.shape[0] != test_points.shape[0]:
        raise ValueError("train and test embeddings have different dimensions")
    if test_points.shape[1] == 0:
        return float("nan")
    nn = nearest_indices(test_points, train_points)
    train_labels = np.asarray(train_labels)
    return float(np.mean(train_labels[nn] == np.asarray(test_labels)))


def pca_project(x, d):
    """Scores on the top-d principal components of the column samples ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if not 1 <= d <= min(x.shape):
        raise ValueError(f"d must be between 1 and min(D, N)={min(x.shape)}, got {d}")
    xc = x - x.mean(axis=1, keepdims=True)
    u, s, _ = np.linalg.svd(xc, full_matrices=False)
    u = u[:, :d]
    # deterministic orientation: largest-magnitude loading positive
    flip = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(d)])
    flip[flip == 0] = 1.0
    u = u * flip
    return GlobalEmbedding(u.T @ xc, s[:d] ** 2 / max(x.shape[1] - 1, 1))


def local_pca_coordinates(xi, d_local):
    """Coordinates of the centred columns of ``xi`` on their top principal directions."""
    xc = xi - xi.mean(axis=1, keepdims=True)
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    coords = np.zeros((d_local, xi.shape[1]))
    r = min(d_local, len(s))
    coords[:r] = s[:r, None] * vt[:r]
    return coords


def ltsa_mode_features(x, nbrs, d_local):
    """Local PCA blocks shaped like SCAE feature blocks."""
    if d_local > nbrs.k:
        raise ValueError(f"d_local={d_local} exceeds the neighbourhood size k={nbrs.k}")
    return [LocalFeatureBlock(nb, local_pca_coordinates(gather(x, nb), d_local)) for nb in nbrs]


def affine_fit_residual(embedding, truth):
    """Normalised residual of the best affine map from ``embedding`` to ``truth``.

    Both arguments hold one sample per column. The residual is
    ``||truth - fit||_F / ||truth - mean(truth)||_F``.
    """
    e = np.asarray(embedding, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    design = np.vstack([e, np.ones(e.shape[1])])
    coef, *_ = np.linalg.lstsq(design.T, t.T, rcond=None)
    fit = (design.T @ coef).T
    tc = t - t.mean(axis=1, keepdims=True)
    return float(np.linalg.norm(t - fit) / np.linalg.norm(tc))
