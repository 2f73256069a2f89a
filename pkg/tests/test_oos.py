import numpy as np
import pytest

from ldfa.cae import CaeParams, TrainConfig
from ldfa.neighborhoods import NeighborhoodIndex, build_neighborhoods
from ldfa.oos import (
    AlignNet,
    UniformNet,
    build_uniform_net,
    embed_many,
    embed_new,
    finetune_uniform_net,
    fit_embedding_scale,
    net_loss,
    net_loss_and_grad,
    train_align_net,
    train_uniform_nets,
)
from ldfa.scae import LocalFeatureBlock, ScaeModel, encode_deep, train_local_scaes
from oracles import central_difference, max_relative_error, scalar_sigmoid


def random_net(rng, dims, scale=0.8):
    return UniformNet(tuple(
        (rng.normal(size=(o, i)) * scale, rng.normal(size=o) * 0.5) for i, o in zip(dims, dims[1:])
    ))


def scalar_forward(net, col):
    a = list(col)
    for q, v in net.layers:
        a = [scalar_sigmoid(sum(q[i, t] * a[t] for t in range(len(a))) + v[i]) for i in range(q.shape[0])]
    return np.array(a)


def test_scale_maps_rows_into_margin_and_back():
    h = np.random.default_rng(0).normal(size=(2, 30))
    sc = fit_embedding_scale(h, 0.1)
    s = sc.apply(h)
    np.testing.assert_allclose(s.min(axis=1), 0.1, atol=1e-12)
    np.testing.assert_allclose(s.max(axis=1), 0.9, atol=1e-12)
    np.testing.assert_allclose(sc.invert(s), h, atol=1e-12)


def test_scale_constant_row():
    sc = fit_embedding_scale(np.array([[2.0, 2.0, 2.0], [0.0, 1.0, 2.0]]))
    assert sc.degenerate.tolist() == [True, False]
    np.testing.assert_allclose(sc.apply(np.array([[2.0], [1.0]])), [[0.5], [0.5]])
    with pytest.raises(ValueError):
        fit_embedding_scale(np.zeros((1, 3)), 0.5)


def test_forward_matches_scalar_oracle():
    rng = np.random.default_rng(1)
    net = random_net(rng, [4, 3, 2])
    x = rng.uniform(size=(4, 5))
    out = net(x)
    for j in range(5):
        np.testing.assert_allclose(out[:, j], scalar_forward(net, x[:, j]), atol=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_align_net_gradient(seed):
    rng = np.random.default_rng(200 + seed)
    net = AlignNet.from_params(rng.normal(size=(2, 3)), rng.normal(size=2))
    f = rng.uniform(size=(3, 6))
    t = rng.uniform(0.1, 0.9, size=(2, 6))
    _, grads = net_loss_and_grad(net, f, t)
    numeric = central_difference(lambda: net_loss(net, f, t), [net.theta, net.u])
    assert max_relative_error(grads[0], numeric) < 1e-5


@pytest.mark.parametrize("seed", range(20))
def test_uniform_net_gradient(seed):
    rng = np.random.default_rng(300 + seed)
    net = random_net(rng, [5, 4, 3, 2])
    x = rng.uniform(size=(5, 6))
    t = rng.uniform(0.1, 0.9, size=(2, 6))
    _, grads = net_loss_and_grad(net, x, t)
    params = [a for layer in net.layers for a in layer]
    numeric = central_difference(lambda: net_loss(net, x, t), params)
    assert max_relative_error([g for layer in grads for g in layer], numeric) < 1e-5


def test_align_net_reaches_exact_targets():
    rng = np.random.default_rng(2)
    theta, u = rng.normal(size=(2, 3)), rng.normal(size=2) * 0.1
    f = rng.uniform(size=(3, 8))
    t = AlignNet.from_params(theta, u)(f)
    block = LocalFeatureBlock(NeighborhoodIndex(0, tuple(range(8))), f)
    fitted = train_align_net(block, t, TrainConfig(lam=0.0, learning_rate=0.5, epochs=20000, seed=3))
    assert net_loss(fitted, f, t) < 1e-6


def test_align_net_rejects_unscaled_targets():
    block = LocalFeatureBlock(NeighborhoodIndex(0, (0, 1)), np.ones((1, 2)))
    with pytest.raises(ValueError):
        train_align_net(block, np.array([[0.5, 1.2]]), TrainConfig(epochs=1))


def test_build_uniform_net_copies_and_composes():
    rng = np.random.default_rng(4)
    model = ScaeModel((
        CaeParams(rng.normal(size=(3, 4)), rng.normal(size=3), rng.normal(size=4)),
        CaeParams(rng.normal(size=(2, 3)), rng.normal(size=2), rng.normal(size=3)),
    ))
    align_net = AlignNet.from_params(rng.normal(size=(2, 2)), rng.normal(size=2))
    net = build_uniform_net(model, align_net)
    assert net.dims == [4, 3, 2, 2]
    np.testing.assert_array_equal(net.layers[0][0], model.layers[0].w)
    np.testing.assert_array_equal(net.layers[2][0], align_net.theta)
    x = rng.uniform(size=(4, 5))
    np.testing.assert_allclose(net(x), align_net(encode_deep(model, x)), atol=1e-15)
    net.layers[0][0][0, 0] += 1.0
    assert net.layers[0][0][0, 0] != model.layers[0].w[0, 0]
    with pytest.raises(ValueError):
        build_uniform_net(model, AlignNet.from_params(np.zeros((2, 3)), np.zeros(2)))


def test_finetune_is_guarded():
    rng = np.random.default_rng(5)
    net = random_net(rng, [4, 3, 2])
    x = rng.uniform(size=(4, 7))
    t = rng.uniform(0.2, 0.8, size=(2, 7))
    tuned = finetune_uniform_net(net, x, t, TrainConfig(learning_rate=0.1, epochs=100))
    assert net_loss(tuned, x, t) <= net_loss(net, x, t)
    wild = finetune_uniform_net(net, x, t, TrainConfig(learning_rate=1e4, epochs=50))
    assert net_loss(wild, x, t) <= net_loss(net, x, t)
    assert finetune_uniform_net(net, x, t, TrainConfig(epochs=0)) is net


def constant_net(value):
    # zero weights, bias chosen so the output is exactly sigmoid(logit(value))
    return UniformNet(((np.zeros((1, 2)), np.array([np.log(value / (1 - value))])),))


def test_embed_new_uses_nearest_and_breaks_ties_low():
    training = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
    nets = [constant_net(0.2), constant_net(0.4), constant_net(0.6)]
    scale = fit_embedding_scale(np.array([[0.0, 1.0]]), 0.1)
    # sample exactly at the duplicated point 0 == 2 takes net 0
    got = embed_new(np.array([0.0, 0.0]), training, nets, scale)
    np.testing.assert_allclose(got, scale.invert(np.array([[0.2]]))[:, 0])
    # midway between 0 and 1 ties as well
    got = embed_new(np.array([0.5, 0.0]), training, nets, scale)
    np.testing.assert_allclose(got, scale.invert(np.array([[0.2]]))[:, 0])
    got = embed_new(np.array([0.9, 0.0]), training, nets, scale)
    np.testing.assert_allclose(got, scale.invert(np.array([[0.4]]))[:, 0])
    # centres without a network are skipped
    got = embed_new(np.array([0.0, 0.0]), training, [None, nets[1], nets[2]], scale)
    np.testing.assert_allclose(got, scale.invert(np.array([[0.6]]))[:, 0])


def test_embed_new_output_is_bounded():
    rng = np.random.default_rng(6)
    training = rng.uniform(size=(3, 10))
    nets = [random_net(rng, [3, 2], scale=5.0) for _ in range(10)]
    h = rng.normal(size=(2, 10))
    scale = fit_embedding_scale(h, 0.1)
    lo, hi = scale.invert(np.zeros((2, 1)))[:, 0], scale.invert(np.ones((2, 1)))[:, 0]
    for _ in range(50):
        y = embed_new(rng.uniform(-3, 3, size=3), training, nets, scale)
        assert np.all((y >= lo) & (y <= hi))


def test_embed_new_matches_exhaustive_nearest():
    rng = np.random.default_rng(7)
    training = rng.uniform(size=(2, 15))
    nets = [random_net(rng, [2, 2]) for _ in range(15)]
    scale = fit_embedding_scale(rng.normal(size=(2, 15)))
    queries = rng.uniform(size=(2, 40))
    got = embed_many(queries, training, nets, scale)
    for j in range(40):
        best = min(range(15), key=lambda i: (float(np.sum((training[:, i] - queries[:, j]) ** 2)), i))
        np.testing.assert_array_equal(got[:, j], scale.invert(nets[best](queries[:, [j]]))[:, 0])


def test_embed_new_dimension_check():
    with pytest.raises(ValueError):
        embed_new(np.zeros(3), np.zeros((2, 4)), [constant_net(0.5)] * 4, fit_embedding_scale(np.array([[0.0, 1.0]])))


def test_train_uniform_nets_end_to_end():
    rng = np.random.default_rng(8)
    x = rng.uniform(size=(4, 12))
    nbrs = build_neighborhoods(x, 3)
    cfg = TrainConfig(epochs=30, seed=1)
    res = train_local_scaes(x, nbrs, [4, 3, 2], cfg)
    models, blocks = [m for m, _ in res], [b for _, b in res]
    h = rng.normal(size=(2, 12))
    scale = fit_embedding_scale(h)
    scaled = scale.apply(h)
    nets = train_uniform_nets(x, models, blocks, scaled, cfg, cfg)
    again = train_uniform_nets(x, models, blocks, scaled, cfg, cfg, threads=3)
    assert nets == again
    partial = train_uniform_nets(x, models, blocks, scaled, cfg, cfg, centers=[0, 5])
    assert [n is None for n in partial] == [i not in (0, 5) for i in range(12)]
    assert partial[5] == nets[5]
