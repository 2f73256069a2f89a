"""Dense matrix primitives shared by every stage of the pipeline.

All arrays are float64. Sample matrices are stored with one sample per
column (shape ``(n_features, n_samples)``).
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.special import expit

SYMMETRY_TOL = 1e-10
DEFAULT_PINV_RTOL = 1e-12


@dataclass(frozen=True)
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # one unit vector per column


def sigmoid(z):
    """Logistic function 1 / (1 + exp(-z)), computed without overflow."""
    out = expit(np.asarray(z, dtype=np.float64))
    if out.ndim == 0:
        return float(out)
    return out


def sigmoid_derivative_factor(h):
    """Elementwise h * (1 - h), the sigmoid slope written in terms of its output."""
    h = np.asarray(h, dtype=np.float64)
    return h * (1.0 - h)


def pseudoinverse(a, tol=DEFAULT_PINV_RTOL):
    """Moore-Penrose inverse via SVD.

    Singular values at or below ``tol * sigma_max`` are treated as zero. A zero
    matrix maps to the zero matrix of transposed shape.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"pseudoinverse expects a nonempty 2-D matrix, got shape {a.shape}")
    if tol < 0:
        raise ValueError("tol must be non-negative")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(a.shape[::-1])
    keep = s > tol * s[0]
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (vt.T * inv_s) @ u.T


def centering_matrix(m):
    """I_m - e e^T / m."""
    if m < 1:
        raise ValueError(f"centering_matrix needs m >= 1, got {m}")
    return np.eye(m) - np.full((m, m), 1.0 / m)


def smallest_eigenvectors(phi, d, skip=0):
    """Eigenpairs ``skip .. skip+d-1`` (ascending) of a symmetric matrix."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {phi.shape}")
    n = phi.shape[0]
    if d < 1 or skip < 0 or skip + d > n:
        raise ValueError(f"cannot take {d} eigenvectors after skipping {skip} from a {n}x{n} matrix")
    asym = np.max(np.abs(phi - phi.T)) if n else 0.0
    if asym >= SYMMETRY_TOL:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    vals, vecs = eigh(phi, subset_by_index=[skip, skip + d - 1])
    return SpectralResult(eigenvalues=vals, eigenvectors=vecs)
