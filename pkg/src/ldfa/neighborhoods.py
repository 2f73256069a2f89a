"""k-nearest-neighbour neighbourhoods and the gathers that stand in for S_i."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

DEFAULT_K = 10


@dataclass(frozen=True)
class NeighborhoodIndex:
    center: int
    members: tuple  # center first, then neighbours by ascending distance

    def __post_init__(self):
        if not self.members or self.members[0] != self.center:
            raise ValueError("members must start with the center index")
        if len(set(self.members)) != len(self.members):
            raise ValueError("neighbourhood members must be distinct")

    @property
    def k(self):
        return len(self.members) - 1


@dataclass(frozen=True)
class NeighborhoodSet:
    neighborhoods: tuple
    k: int

    def __len__(self):
        return len(self.neighborhoods)

    def __getitem__(self, i):
        return self.neighborhoods[i]

    def __iter__(self):
        return iter(self.neighborhoods)

    def member_array(self):
        """(N, k+1) integer array of member indices."""
        return np.array([nb.members for nb in self.neighborhoods], dtype=np.int64)

    @classmethod
    def from_member_array(cls, members):
        members = np.asarray(members, dtype=np.int64)
        nbrs = tuple(NeighborhoodIndex(int(row[0]), tuple(int(j) for j in row)) for row in members)
        return cls(nbrs, members.shape[1] - 1)


def nearest_order(dist_row, exclude=None):
    """Indices sorted by distance; ties resolve to the lower index."""
    order = np.argsort(dist_row, kind="stable")
    if exclude is not None:
        order = order[order != exclude]
    return order


def build_neighborhoods(x, k=DEFAULT_K):
    """Neighbourhood of each column of ``x``: itself plus its k nearest others.

    Parameters
    ----------
    x : ndarray, shape (D, N)
        Samples as columns.
    k : int
        Number of neighbours per sample, ``1 <= k <= N - 1``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] == 0:
        raise ValueError("need a 2-D sample matrix with at least one sample")
    n = x.shape[1]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must satisfy 1 <= k <= N-1 = {n - 1}, got {k}")
    # cdist evaluates differences directly, so duplicate samples tie at exactly 0
    dist = cdist(x.T, x.T, "sqeuclidean")
    nbrs = []
    for i in range(n):
        order = nearest_order(dist[i], exclude=i)[:k]
        nbrs.append(NeighborhoodIndex(i, (i,) + tuple(int(j) for j in order)))
    return NeighborhoodSet(tuple(nbrs), k)


def gather(x, nbr):
    """Columns of ``x`` listed in ``nbr.members`` (the product X S_i)."""
    x = np.asarray(x)
    idx = np.asarray(nbr.members, dtype=np.int64)
    if idx.min() < 0 or idx.max() >= x.shape[1]:
        raise ValueError(f"neighbourhood index out of range for {x.shape[1]} samples")
    return x[:, idx]
