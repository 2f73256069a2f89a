"""Independent reference computations used by the tests.

Nothing here calls the code paths it is used to check.
"""

import math

import numpy as np

FD_STEP = 1e-5


def central_difference(loss, arrays, step=FD_STEP):
    """Numerical gradient of ``loss()`` with respect to each array, perturbed in place."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + step
            up = loss()
            arr[idx] = orig - step
            down = loss()
            arr[idx] = orig
            g[idx] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-8):
    """Largest per-coordinate |a - n| / max(|a|, |n|, floor) over all arrays."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def scalar_sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def scalar_encode(w, b, x):
    d_out, d_in = w.shape
    n = x.shape[1]
    h = np.empty((d_out, n))
    for j in range(n):
        for i in range(d_out):
            h[i, j] = scalar_sigmoid(sum(w[i, t] * x[t, j] for t in range(d_in)) + b[i])
    return h


def scalar_decode(w, c, h):
    d_out, d_in = w.shape
    n = h.shape[1]
    r = np.empty((d_in, n))
    for j in range(n):
        for t in range(d_in):
            r[t, j] = scalar_sigmoid(sum(w[i, t] * h[i, j] for i in range(d_out)) + c[t])
    return r


def scalar_cae_loss(w, b, c, x, lam):
    """Reconstruction error plus lam * trace(W^T A A^T W), term by term."""
    h = scalar_encode(w, b, x)
    r = scalar_decode(w, c, h)
    rec = sum((x[t, j] - r[t, j]) ** 2 for t in range(x.shape[0]) for j in range(x.shape[1]))
    a = h * (1 - h)
    d_out, d_in = w.shape
    n = x.shape[1]
    # trace(W^T A A^T W) = sum_t sum_j (sum_i W[i,t] A[i,j])^2
    pen = 0.0
    for t in range(d_in):
        for j in range(n):
            pen += sum(w[i, t] * a[i, j] for i in range(d_out)) ** 2
    return rec + lam * pen


def brute_force_neighbors(x, k):
    """Exhaustive sort by (squared distance, index) for each column."""
    n = x.shape[1]
    out = []
    for i in range(n):
        cand = []
        for j in range(n):
            if j == i:
                continue
            d = sum((x[t, i] - x[t, j]) ** 2 for t in range(x.shape[0]))
            cand.append((d, j))
        cand.sort()
        out.append([i] + [j for _, j in cand[:k]])
    return out


def random_orthonormal_rows(rng, d, n):
    q, _ = np.linalg.qr(rng.normal(size=(n, d)))
    return q.T


def best_two_partition(points):
    """Exhaustive search for the 2-partition of <= 12 columns with least within-cluster SSE."""
    n = points.shape[1]
    best = None
    for mask in range(1, 2 ** (n - 1)):
        lab = np.array([(mask >> j) & 1 for j in range(n)])
        sse = 0.0
        for c in (0, 1):
            sel = points[:, lab == c]
            sse += float(np.sum((sel - sel.mean(axis=1, keepdims=True)) ** 2))
        if best is None or sse < best[0]:
            best = (sse, lab)
    return best[1]


def swiss_roll(n, seed, height=10.0, turns=1.5):
    """Swiss roll as (points (3, n), ground truth (2, n) = [arc length, height])."""
    rng = np.random.default_rng(seed)
    t = turns * np.pi * (1 + 2 * rng.uniform(size=n))
    y = height * rng.uniform(size=n)
    pts = np.vstack([t * np.cos(t), y, t * np.sin(t)])
    arc = 0.5 * (t * np.sqrt(1 + t * t) + np.arcsinh(t))
    return pts, np.vstack([arc, y])


def three_gaussians(seed, per_class=100, dim=10, separation=10.0):
    """Unit-variance Gaussian clusters centred at ``separation`` on three coordinate axes."""
    rng = np.random.default_rng(seed)
    centers = np.zeros((3, dim))
    for c in range(3):
        centers[c, c] = separation
    pts = np.vstack([ctr + rng.normal(size=(per_class, dim)) for ctr in centers])
    return pts, np.repeat(np.arange(3), per_class)


def classical_ltsa(x, member_lists, d):
    """Textbook LTSA: orthonormal local PCA basis plus the constant vector, dense eigensolve."""
    n = x.shape[1]
    big = np.zeros((n, n))
    for members in member_lists:
        xi = x[:, members]
        xc = xi - xi.mean(axis=1, keepdims=True)
        m = len(members)
        _, _, vt = np.linalg.svd(xc, full_matrices=False)
        g = np.hstack([np.full((m, 1), 1.0 / np.sqrt(m)), vt[:d].T])
        big[np.ix_(members, members)] += np.eye(m) - g @ g.T
    vals, vecs = np.linalg.eigh(big)
    return vecs[:, 1 : d + 1].T, vals


def subspace_distance(a, b):
    """Spectral-norm gap between the projectors onto the row spaces of a and b."""
    qa, _ = np.linalg.qr(a.T)
    qb, _ = np.linalg.qr(b.T)
    return float(np.linalg.norm(qa @ qa.T - qb @ qb.T, 2))
