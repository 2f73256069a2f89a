"""Tied-weight contractive auto-encoder layer.

The layer maps ``X`` (d_in x n) to ``H = sigmoid(W X + b)`` and reconstructs
``sigmoid(W^T H + c)``. Its objective is the squared reconstruction error plus
``lam * trace(W^T A A^T W)`` with ``A = H * (1 - H)``, i.e. the squared
Frobenius norm of ``W^T A``.
"""

from dataclasses import dataclass, replace

import numpy as np

from .numerics import sigmoid, sigmoid_derivative_factor

DEFAULT_LAMBDA = 0.1
DEFAULT_LEARNING_RATE = 0.1
DEFAULT_EPOCHS = 200
DEFAULT_INIT_SCALE = 0.05

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class CaeParams:
    w: np.ndarray  # (d_out, d_in)
    b: np.ndarray  # (d_out,)
    c: np.ndarray  # (d_in,)

    @property
    def d_in(self):
        return self.w.shape[1]

    @property
    def d_out(self):
        return self.w.shape[0]

    def __eq__(self, other):
        if not isinstance(other, CaeParams):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))

    def arrays(self):
        return (self.w, self.b, self.c)

    def copy(self):
        return CaeParams(self.w.copy(), self.b.copy(), self.c.copy())


@dataclass(frozen=True)
class TrainConfig:
    lam: float = DEFAULT_LAMBDA
    learning_rate: float = DEFAULT_LEARNING_RATE
    epochs: int = DEFAULT_EPOCHS
    seed: int = 0
    init_scale: float = DEFAULT_INIT_SCALE

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValueError("learning_rate must be finite and positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")

    def with_seed(self, seed):
        return replace(self, seed=seed & _SEED_MASK)


def _check_input(p, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != p.d_in:
        raise ValueError(f"expected input with {p.d_in} rows, got shape {x.shape}")
    return x


def encode(p, x):
    x = _check_input(p, x)
    return sigmoid(p.w @ x + p.b[:, None])


def decode(p, h):
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != p.d_out:
        raise ValueError(f"expected code with {p.d_out} rows, got shape {h.shape}")
    return sigmoid(p.w.T @ h + p.c[:, None])


def _layer_terms(p, x, lam):
    h = encode(p, x)
    r = decode(p, h)
    a = sigmoid_derivative_factor(h)
    wa = p.w.T @ a
    loss = float(np.sum((x - r) ** 2) + lam * np.sum(wa * wa))
    return h, r, a, wa, loss


def cae_loss(p, x, lam):
    return _layer_terms(p, x, lam)[-1]


def layer_backward(p, x, lam, upstream=None):
    """Loss and gradients of one layer's objective.

    ``upstream`` is an additional gradient arriving on the layer output H
    (from layers stacked above). Returns ``(loss, h, dw, db, dc, dx)``.
    """
    x = _check_input(p, x)
    w = p.w
    # forward pass inlined; this is the innermost loop of all training
    h = sigmoid(w @ x + p.b[:, None])
    r = sigmoid(w.T @ h + p.c[:, None])
    a = h * (1.0 - h)
    wa = w.T @ a
    resid = r - x
    loss = float((resid * resid).sum() + lam * (wa * wa).sum())
    g_r = 2.0 * resid * r * (1.0 - r)
    dc = g_r.sum(axis=1)
    dw = h @ g_r.T
    dh = p.w @ g_r
    # penalty lam * ||W^T A||^2
    dw += 2.0 * lam * (a @ wa.T)
    da = 2.0 * lam * (p.w @ wa)
    dh += da * (1.0 - 2.0 * h)
    if upstream is not None:
        dh += upstream
    dz = dh * a
    dw += dz @ x.T
    db = dz.sum(axis=1)
    dx = p.w.T @ dz - 2.0 * resid
    return loss, h, dw, db, dc, dx


def cae_gradient(p, x, lam):
    """Analytic (dW, db, dc) of :func:`cae_loss`."""
    _, _, dw, db, dc, _ = layer_backward(p, x, lam)
    return dw, db, dc


def init_params(d_in, d_out, rng, init_scale=DEFAULT_INIT_SCALE):
    w = rng.uniform(-init_scale, init_scale, size=(d_out, d_in))
    return CaeParams(w, np.zeros(d_out), np.zeros(d_in))


def check_unit_interval(x, what="input"):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)) or x.min(initial=0.0) < 0.0 or x.max(initial=0.0) > 1.0:
        raise ValueError(f"{what} entries must lie in [0, 1] for sigmoid reconstruction")
    return x


def train_cae(x, d_out, cfg, history=None):
    """Full-batch gradient descent on one CAE layer.

    If ``history`` is a list, the loss before each step and the final loss
    are appended to it.
    """
    x = check_unit_interval(x)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(cfg.seed)
    p = init_params(x.shape[0], d_out, rng, cfg.init_scale)
    w, b, c = p.w, p.b, p.c
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        loss, _, dw, db, dc, _ = layer_backward(p, x, cfg.lam)
        if history is not None:
            history.append(loss)
        w -= lr * dw
        b -= lr * db
        c -= lr * dc
    if history is not None:
        history.append(cae_loss(p, x, cfg.lam))
    return p
