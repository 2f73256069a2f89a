"""Explicit embedding of unseen samples.

Each neighbourhood gets a sigmoid layer mapping its top-level local features
to its (rescaled) global coordinates. Stacking that layer on the
neighbourhood's encoder gives a feed-forward network which is then fine-tuned
end to end. A new sample is embedded by the network of its nearest training
sample.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .neighborhoods import gather, nearest_order
from .numerics import sigmoid

DEFAULT_MARGIN = 0.1


@dataclass(frozen=True)
class EmbeddingScale:
    """Per-dimension affine map ``scaled = gain * h + offset``."""

    offset: np.ndarray
    gain: np.ndarray
    degenerate: np.ndarray  # bool per dimension

    def apply(self, h):
        return self.gain[:, None] * np.asarray(h, dtype=np.float64) + self.offset[:, None]

    def invert(self, s):
        return (np.asarray(s, dtype=np.float64) - self.offset[:, None]) / self.gain[:, None]


def fit_embedding_scale(h, margin=DEFAULT_MARGIN):
    """Map each row's [min, max] onto [margin, 1 - margin].

    Constant rows map to 0.5 with unit gain and are flagged degenerate.
    """
    if not 0.0 < margin < 0.5:
        raise ValueError(f"margin must lie in (0, 0.5), got {margin}")
    h = np.asarray(getattr(h, "h", h), dtype=np.float64)
    lo, hi = h.min(axis=1), h.max(axis=1)
    span = hi - lo
    degenerate = span <= 0
    gain = np.where(degenerate, 1.0, (1.0 - 2.0 * margin) / np.where(degenerate, 1.0, span))
    offset = np.where(degenerate, 0.5 - lo, margin - gain * lo)
    return EmbeddingScale(offset, gain, degenerate)


@dataclass(frozen=True)
class UniformNet:
    layers: tuple  # of (q, v) pairs; q is (width_out, width_in)

    def __post_init__(self):
        for (q0, _), (q1, _) in zip(self.layers, self.layers[1:]):
            if q0.shape[0] != q1.shape[1]:
                raise ValueError("layer widths do not chain")

    @property
    def dims(self):
        return [self.layers[0][0].shape[1]] + [q.shape[0] for q, _ in self.layers]

    def copy(self):
        return type(self)(tuple((q.copy(), v.copy()) for q, v in self.layers))

    def __call__(self, x):
        return forward(self, x)[-1]

    def __eq__(self, other):
        if not isinstance(other, UniformNet):
            return NotImplemented
        return len(self.layers) == len(other.layers) and all(
            np.array_equal(q0, q1) and np.array_equal(v0, v1)
            for (q0, v0), (q1, v1) in zip(self.layers, other.layers)
        )


class AlignNet(UniformNet):
    """Single layer ``sigmoid(theta @ f + u)`` from local features to scaled global coordinates."""

    @classmethod
    def from_params(cls, theta, u):
        return cls(((np.asarray(theta, dtype=np.float64), np.asarray(u, dtype=np.float64)),))

    @property
    def theta(self):
        return self.layers[0][0]

    @property
    def u(self):
        return self.layers[0][1]


def forward(net, x):
    acts = [np.asarray(x, dtype=np.float64)]
    if acts[0].ndim != 2 or acts[0].shape[0] != net.dims[0]:
        raise ValueError(f"expected input with {net.dims[0]} rows, got shape {acts[0].shape}")
    for q, v in net.layers:
        acts.append(sigmoid(q @ acts[-1] + v[:, None]))
    return acts


def net_loss_and_grad(net, x, targets):
    """Squared error against ``targets`` and per-layer (dq, dv)."""
    acts = forward(net, x)
    out = acts[-1]
    if out.shape != np.shape(targets):
        raise ValueError(f"targets have shape {np.shape(targets)}, network produces {out.shape}")
    diff = out - targets
    loss = float(np.sum(diff * diff))
    grads = [None] * len(net.layers)
    da = 2.0 * diff
    for l in range(len(net.layers) - 1, -1, -1):
        a = acts[l + 1]
        dz = da * a * (1.0 - a)
        q, _ = net.layers[l]
        grads[l] = (dz @ acts[l].T, dz.sum(axis=1))
        da = q.T @ dz
    return loss, grads


def net_loss(net, x, targets):
    acts = forward(net, x)
    return float(np.sum((acts[-1] - targets) ** 2))


def _descend(net, x, targets, cfg):
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        _, grads = net_loss_and_grad(net, x, targets)
        for (q, v), (dq, dv) in zip(net.layers, grads):
            q -= lr * dq
            v -= lr * dv
    return net


def _check_targets(targets):
    targets = np.asarray(targets, dtype=np.float64)
    if not np.all((targets > 0.0) & (targets < 1.0)):
        raise ValueError("targets must lie strictly inside (0, 1); rescale the embedding first")
    return targets


def train_align_net(block, targets, cfg):
    """Fit sigmoid(Theta H^L + u e^T) to the scaled global coordinates of one neighbourhood."""
    targets = _check_targets(targets)
    f = np.asarray(block.features, dtype=np.float64)
    if targets.shape[1] != f.shape[1]:
        raise ValueError("targets need one column per neighbourhood member")
    rng = np.random.default_rng(cfg.seed)
    theta = rng.uniform(-cfg.init_scale, cfg.init_scale, size=(targets.shape[0], f.shape[0]))
    return _descend(AlignNet.from_params(theta, np.zeros(targets.shape[0])), f, targets, cfg)


def build_uniform_net(model, align_net):
    """Encoder layers of ``model`` followed by the alignment layer, copied."""
    if model.dims[-1] != align_net.theta.shape[1]:
        raise ValueError(
            f"stack ends at width {model.dims[-1]} but the alignment layer expects {align_net.theta.shape[1]}"
        )
    layers = [(p.w.copy(), p.b.copy()) for p in model.layers]
    layers.append((align_net.theta.copy(), align_net.u.copy()))
    return UniformNet(tuple(layers))


def finetune_uniform_net(net, x_block, targets, cfg):
    """Back-propagate through all layers; keep the initial net if the loss does not drop."""
    targets = _check_targets(targets)
    x_block = np.asarray(x_block, dtype=np.float64)
    if cfg.epochs == 0:
        return net
    start = net_loss(net, x_block, targets)
    tuned = _descend(net.copy(), x_block, targets, cfg)
    end = net_loss(tuned, x_block, targets)
    if not np.isfinite(end) or end > start:
        return net
    return tuned


def _fit_one(args):
    model, block, x, scaled, align_cfg, tune_cfg = args
    idx = np.asarray(block.neighborhood.members)
    targets = scaled[:, idx]
    seed = (align_cfg.seed ^ block.neighborhood.center) & ((1 << 64) - 1)
    align_net = train_align_net(block, targets, align_cfg.with_seed(seed))
    net = build_uniform_net(model, align_net)
    return finetune_uniform_net(net, gather(x, block.neighborhood), targets, tune_cfg)


def train_uniform_nets(x, models, blocks, scaled, align_cfg, tune_cfg, centers=None, threads=1):
    """One fine-tuned uniform network per neighbourhood.

    ``scaled`` is the global embedding after :class:`EmbeddingScale`. When
    ``centers`` is given only those neighbourhoods get a network and the
    remaining entries are ``None``.
    """
    keep = set(range(len(blocks)) if centers is None else centers)
    jobs = [(models[i], blocks[i], x, scaled, align_cfg, tune_cfg) for i in range(len(blocks)) if i in keep]
    if threads <= 1:
        fitted = [_fit_one(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fitted = list(pool.map(_fit_one, jobs))
    it = iter(fitted)
    return [next(it) if i in keep else None for i in range(len(blocks))]


def embed_new(x_new, training, nets, scale):
    """Embed one sample with the network of its nearest training sample.

    Only training samples that own a network are candidates. Returns the
    d-vector in global embedding coordinates.
    """
    x_new = np.asarray(x_new, dtype=np.float64).ravel()
    training = np.asarray(training, dtype=np.float64)
    if x_new.shape[0] != training.shape[0]:
        raise ValueError(f"sample has dimension {x_new.shape[0]}, expected {training.shape[0]}")
    owners = np.array([i for i, n in enumerate(nets) if n is not None], dtype=np.int64)
    d2 = np.sum((training[:, owners] - x_new[:, None]) ** 2, axis=0)
    j = owners[nearest_order(d2)[0]]
    return scale.invert(nets[j](x_new[:, None]))[:, 0]


def embed_many(x_new, training, nets, scale):
    """Column-wise :func:`embed_new`; returns (d, n_new)."""
    x_new = np.asarray(x_new, dtype=np.float64)
    d = len(scale.gain)
    out = np.empty((d, x_new.shape[1]))
    for i in range(x_new.shape[1]):
        out[:, i] = embed_new(x_new[:, i], training, nets, scale)
    return out
