"""Global alignment of local feature blocks through an eigenvalue problem."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .numerics import DEFAULT_PINV_RTOL, centering_matrix, pseudoinverse, smallest_eigenvectors

log = logging.getLogger(__name__)

SPECTRAL_GAP_TOL = 1e-12


@dataclass(frozen=True)
class AlignmentBlock:
    neighborhood: object  # NeighborhoodIndex
    m: np.ndarray  # (k+1, k+1)


@dataclass(frozen=True)
class GlobalAlignment:
    phi: np.ndarray  # (N, N), symmetric PSD


@dataclass(frozen=True)
class GlobalEmbedding:
    h: np.ndarray  # (d, N), column i embeds sample i
    eigenvalues: np.ndarray = None
    warnings: tuple = field(default=())

    @property
    def degenerate(self):
        return bool(self.warnings)


def local_alignment_matrix(block, tol=DEFAULT_PINV_RTOL):
    """M_i = T (I - pinv(H_i) H_i) for the block's local features H_i."""
    f = np.asarray(block.features, dtype=np.float64)
    m = f.shape[1]
    proj = pseudoinverse(f, tol) @ f
    return AlignmentBlock(block.neighborhood, centering_matrix(m) @ (np.eye(m) - proj))


def optimal_affine(h_block, block, tol=DEFAULT_PINV_RTOL):
    """Best affine map A from local features to centred global coordinates.

    Returns ``(A, residual)`` where residual is ``||H_i T - A H_i^L||_F^2``.
    """
    h_block = np.asarray(h_block, dtype=np.float64)
    f = np.asarray(block.features, dtype=np.float64)
    if h_block.shape[1] != f.shape[1]:
        raise ValueError("global block and local features must have the same number of columns")
    ht = h_block @ centering_matrix(f.shape[1])
    a = ht @ pseudoinverse(f, tol)
    return a, float(np.sum((ht - a @ f) ** 2))


def assemble_phi(blocks, n):
    """Sum of S_i (M_i M_i^T) S_i^T, accumulated in block order."""
    phi = np.zeros((n, n))
    for blk in blocks:
        idx = np.asarray(blk.neighborhood.members, dtype=np.int64)
        if idx.min() < 0 or idx.max() >= n:
            raise ValueError(f"neighbourhood index out of range for {n} samples")
        phi[np.ix_(idx, idx)] += blk.m @ blk.m.T
    # the scatter adds are exact mirror images; this removes nothing but rounding asymmetry
    phi = 0.5 * (phi + phi.T)
    return GlobalAlignment(phi)


def fix_signs(h):
    """Flip each row so its largest-magnitude entry is positive."""
    h = np.array(h, dtype=np.float64)
    for row in h:
        j = np.argmax(np.abs(row))
        if row[j] < 0:
            row *= -1.0
    return h


def solve_embedding(g, d):
    """Orthonormal rows spanning the d smallest eigenvectors of Phi orthogonal to ones.

    Phi annihilates the constant vector, so shifting it by ``c * e e^T / N``
    with c above the spectrum moves only that eigenvector out of the way.
    """
    phi = g.phi
    n = phi.shape[0]
    if not 1 <= d <= n - 1:
        raise ValueError(f"embedding dimension must satisfy 1 <= d <= N-1 = {n - 1}, got {d}")
    shift = float(np.trace(phi)) + 1.0
    res = smallest_eigenvectors(phi + np.full((n, n), shift / n), d, skip=0)
    vals = res.eigenvalues
    notes = []
    scale = max(1.0, float(np.max(np.abs(vals))))
    if vals[0] < SPECTRAL_GAP_TOL * scale:
        notes.append(
            f"spectral gap between the null vector and the selected band is {vals[0]:.3g}; "
            "the embedding is not unique"
        )
    if np.all(np.abs(vals) < SPECTRAL_GAP_TOL * scale):
        notes.append("alignment matrix vanishes on the selected band")
    for msg in notes:
        log.warning(msg)
    return GlobalEmbedding(fix_signs(res.eigenvectors.T), vals, tuple(notes))


def align(blocks, n, d, tol=DEFAULT_PINV_RTOL):
    """Local features to global embedding: M_i blocks, Phi, eigenvectors."""
    mats = [local_alignment_matrix(b, tol) for b in blocks]
    return solve_embedding(assemble_phi(mats, n), d)
