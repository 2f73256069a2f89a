"""Stacked contractive auto-encoders: greedy pretraining, fine-tuning, deep codes."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cae import check_unit_interval, encode, layer_backward, train_cae
from .neighborhoods import gather

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class ScaeModel:
    layers: tuple  # of CaeParams

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a stacked model needs at least one layer")
        for lower, upper in zip(self.layers, self.layers[1:]):
            if lower.d_out != upper.d_in:
                raise ValueError(f"layer widths do not chain: {lower.d_out} -> {upper.d_in}")

    @property
    def dims(self):
        return [self.layers[0].d_in] + [p.d_out for p in self.layers]

    def copy(self):
        return ScaeModel(tuple(p.copy() for p in self.layers))


@dataclass(frozen=True)
class LocalFeatureBlock:
    neighborhood: object  # NeighborhoodIndex
    features: np.ndarray  # (d_L, k+1)

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[1] != len(self.neighborhood.members):
            raise ValueError("feature block needs one column per neighbourhood member")


def layer_seeds(seed, n_layers):
    # layer 0 keeps the stack seed; higher layers flip bits above any neighbourhood index
    return [(seed ^ (l << 32)) & _SEED_MASK for l in range(n_layers)]


def pretrain(x, dims, cfg):
    """Greedy layer-wise training; layer l sees the codes of layers 1..l-1."""
    x = check_unit_interval(x)
    if len(dims) < 2 or dims[0] != x.shape[0]:
        raise ValueError(f"widths {dims} do not start at the input dimension {x.shape[0]}")
    layers = []
    inp = x
    for d_out, s in zip(dims[1:], layer_seeds(cfg.seed, len(dims) - 1)):
        p = train_cae(inp, d_out, cfg.with_seed(s))
        layers.append(p)
        inp = encode(p, inp)
    return ScaeModel(tuple(layers))


def encode_deep(m, x):
    h = np.asarray(x, dtype=np.float64)
    for p in m.layers:
        h = encode(p, h)
    return h


def stacked_loss_and_grad(m, x, lam):
    """Sum of per-layer objectives along the composed forward pass, with gradients.

    Returns ``(loss, grads)`` where ``grads[l] = (dW, db, dc)``.
    """
    inputs = [np.asarray(x, dtype=np.float64)]
    for p in m.layers[:-1]:
        inputs.append(encode(p, inputs[-1]))
    total = 0.0
    grads = [None] * len(m.layers)
    upstream = None
    for l in range(len(m.layers) - 1, -1, -1):
        loss, _, dw, db, dc, dx = layer_backward(m.layers[l], inputs[l], lam, upstream)
        total += loss
        grads[l] = (dw, db, dc)
        upstream = dx
    return total, grads


def stacked_loss(m, x, lam):
    return stacked_loss_and_grad(m, x, lam)[0]


def finetune(m, x, cfg):
    """Gradient descent on the stacked objective.

    The pretrained parameters are returned unchanged if fine-tuning does not
    lower the loss.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != m.dims[0]:
        raise ValueError(f"expected input with {m.dims[0]} rows, got shape {x.shape}")
    if cfg.epochs == 0:
        return m
    start = stacked_loss(m, x, cfg.lam)
    tuned = m.copy()
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        _, grads = stacked_loss_and_grad(tuned, x, cfg.lam)
        for p, (dw, db, dc) in zip(tuned.layers, grads):
            p.w[...] -= lr * dw
            p.b[...] -= lr * db
            p.c[...] -= lr * dc
    end = stacked_loss(tuned, x, cfg.lam)
    if not np.isfinite(end) or end > start:
        return m
    return tuned


def train_scae(x, dims, cfg, finetune_cfg=None):
    """Pretrain then fine-tune one stack. ``finetune_cfg`` defaults to ``cfg``."""
    m = pretrain(x, dims, cfg)
    return finetune(m, x, finetune_cfg or cfg)


def neighborhood_seed(seed, i):
    return (seed ^ i) & _SEED_MASK


def _train_one(args):
    x, nbr, dims, cfg, finetune_cfg = args
    xi = gather(x, nbr)
    ci = cfg.with_seed(neighborhood_seed(cfg.seed, nbr.center))
    fi = (finetune_cfg or cfg).with_seed(ci.seed)
    model = train_scae(xi, dims, ci, fi)
    return model, LocalFeatureBlock(nbr, encode_deep(model, xi))


def train_local_scaes(x, nbrs, dims, cfg, finetune_cfg=None, threads=1):
    """One independently seeded stack per neighbourhood, in neighbourhood order."""
    x = check_unit_interval(x)
    jobs = [(x, nbr, dims, cfg, finetune_cfg) for nbr in nbrs]
    if threads <= 1:
        return [_train_one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_train_one, jobs))
