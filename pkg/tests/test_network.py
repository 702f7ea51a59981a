import numpy as np
import pytest

from conftest import rel_err
from kdlab import losses as L
from kdlab import network
from kdlab.losses import DistillObjective, LossKind
from kdlab.network import Mlp


def hand_net():
    w1 = np.array([[1.0, -1.0], [0.5, 2.0]])
    b1 = np.array([0.0, -1.0])
    w2 = np.array([[1.0, 2.0], [-1.0, 1.0]])
    b2 = np.array([0.5, 0.0])
    return Mlp([w1, w2], [b1, b2])


def param_fd(net, loss_fn, h=1e-5):
    out = []
    for p in net.params():
        g = np.empty_like(p)
        for i in range(p.size):
            old = p.flat[i]
            p.flat[i] = old + h
            lp = loss_fn()
            p.flat[i] = old - h
            lm = loss_fn()
            p.flat[i] = old
            g.flat[i] = (lp - lm) / (2 * h)
        out.append(g)
    return out


def test_init_deterministic_and_bounded():
    a, b = network.init([5, 8, 6], seed=9), network.init([5, 8, 6], seed=9)
    for p, q in zip(a.params(), b.params()):
        assert p.tobytes() == q.tobytes()
    for w, bias in zip(a.weights, a.biases):
        assert np.all(np.abs(w) <= np.sqrt(6.0 / w.shape[1]))
        assert not bias.any()
    assert a.widths == [5, 8, 6]


@pytest.mark.parametrize("widths", [[], [3, 2], [3, 0, 2]])
def test_init_rejects_bad_widths(widths):
    with pytest.raises(ValueError):
        network.init(widths, 0)


def test_forward_hand_computed():
    # h = [1-2, 0.5+4-1] = [-1, 3.5] -> relu [0, 3.5]; z = [7 + 0.5, 3.5]
    z, cache = network.forward(hand_net(), np.array([[1.0, 2.0]]))
    np.testing.assert_allclose(z, [[7.5, 3.5]])
    np.testing.assert_allclose(cache.prelogits, [[0.0, 3.5]])


def test_zero_weights_give_bias_logits():
    net = network.init([3, 4, 2], 0)
    for w in net.weights:
        w[:] = 0
    net.biases[-1][:] = [1.5, -2.0]
    np.testing.assert_array_equal(net(np.ones((3, 3))), [[1.5, -2.0]] * 3)


def test_forward_shape_mismatch():
    with pytest.raises(ValueError):
        network.forward(hand_net(), np.ones((1, 3)))


def test_backward_zero_and_linearity(rng):
    net = network.init([3, 4, 3], 1)
    x = rng.normal(size=(5, 3))
    _, cache = network.forward(net, x)
    for g in network.backward(net, cache, np.zeros((5, 3))):
        assert not g.any()
    d = rng.normal(size=(5, 3))
    g1 = network.backward(net, cache, d)
    g2 = network.backward(net, cache, 2.5 * d)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(b, 2.5 * a, rtol=1e-14, atol=1e-15)
    with pytest.raises(ValueError):
        network.backward(net, cache, np.zeros((4, 3)))


def test_backward_ce_finite_differences(rng):
    net = network.init([3, 4, 3], 2)
    x = rng.normal(size=(6, 3))
    y = rng.integers(0, 3, size=6)
    z, cache = network.forward(net, x)
    grads = network.backward(net, cache, L.ce_grad(z, y))
    fd = param_fd(net, lambda: float(np.mean(L.ce_loss_from_logits(net(x), y))))
    assert max(rel_err(a, b) for a, b in zip(grads, fd)) < 1e-5


@pytest.mark.parametrize("obj", [
    DistillObjective(),
    DistillObjective(0.5, LossKind.KL, 4.0),
    DistillObjective(0.5, LossKind.RESCALED_KL, 0.5),
    DistillObjective(0.5, LossKind.KL_INF),
    DistillObjective(0.5, LossKind.LABEL_MATCH),
    DistillObjective(0.5, LossKind.MSE),
], ids=lambda o: o.label())
def test_backward_every_kind(rng, obj):
    net = network.init([5, 8, 6], 4)
    x = rng.normal(size=(8, 5))
    y = rng.integers(0, 6, size=8)
    zt = rng.uniform(-3, 3, size=(8, 6))
    z, cache = network.forward(net, x)
    grads = network.backward(net, cache, L.combined_grad(z, zt, y, obj))
    fd = param_fd(net, lambda: float(np.mean(L.combined_loss(net(x), zt, y, obj))))
    assert max(rel_err(a, b) for a, b in zip(grads, fd)) < 1e-5


def test_sgd_plain_step():
    net = hand_net()
    before = [p.copy() for p in net.params()]
    grads = [np.ones_like(p) for p in net.params()]
    network.sgd_step(net, grads, network.SgdState(0.1, momentum=0.0, weight_decay=0.0))
    for p, q in zip(net.params(), before):
        np.testing.assert_allclose(p, q - 0.1)


def test_sgd_zero_gradient_is_noop():
    net = hand_net()
    before = [p.copy() for p in net.params()]
    network.sgd_step(net, [np.zeros_like(p) for p in net.params()], network.SgdState(0.1, 0.9, 0.0))
    for p, q in zip(net.params(), before):
        np.testing.assert_array_equal(p, q)


def test_sgd_momentum_recurrence():
    # w=1, g=1, lr=0.1, m=0.9: v1=1, w1=0.9; v2=1.9, w2=0.71
    net = Mlp([np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
    state = network.SgdState(0.1, 0.9, 0.0)
    for _ in range(2):
        network.sgd_step(net, [np.ones((1, 1)), np.zeros(1), np.zeros((1, 1)), np.zeros(1)], state)
    assert net.weights[0][0, 0] == pytest.approx(0.71, abs=1e-15)


def test_sgd_weight_decay_folds_into_gradient():
    net = Mlp([np.array([[2.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
    zero = [np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)), np.zeros(1)]
    network.sgd_step(net, zero, network.SgdState(0.5, 0.0, 0.1))
    assert net.weights[0][0, 0] == pytest.approx(2.0 - 0.5 * 0.1 * 2.0)


def test_checkpoint_roundtrip(rng):
    net = network.init([4, 7, 3], 11)
    net.weights[0][0, 0] = 0.1 + 0.2  # awkward decimal
    blob = network.save_checkpoint(net)
    back = network.load_checkpoint(blob)
    for p, q in zip(net.params(), back.params()):
        assert p.tobytes() == q.tobytes()
    assert network.save_checkpoint(back) == blob


def test_checkpoint_errors():
    blob = network.save_checkpoint(network.init([2, 3, 2], 0))
    with pytest.raises(network.CheckpointFormatError) as exc:
        network.load_checkpoint(blob[: len(blob) // 2])
    assert exc.value.offset is not None
    bad = blob.replace(b'"format_version":1', b'"format_version":2')
    with pytest.raises(network.UnsupportedVersionError):
        network.load_checkpoint(bad)
    with pytest.raises(network.CheckpointFormatError):
        network.load_checkpoint(b'{"format_version":1,"widths":[2,3,2],"layers":[]}')


def test_accuracy():
    net = Mlp([np.eye(3), np.eye(3)], [np.zeros(3), np.zeros(3)])
    x = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [0, 1.0, 0]])
    assert network.accuracy(net, x, [0, 1, 2, 1]) == 1.0
    assert network.accuracy(net, x, [1, 2, 0, 0]) == 0.0
    assert network.accuracy(net, x, [0, 1, 2, 0]) == 0.75
    with pytest.raises(ValueError):
        network.accuracy(net, x[:0], [])


def test_prelogit_dilation_bound(rng):
    net = network.init([4, 6, 5], 3)
    assert network.prelogit_dilation_bound(net, np.zeros(6)) == 0.0
    with pytest.raises(ValueError):
        network.prelogit_dilation_bound(net, np.zeros(5))
    k = 5
    for _ in range(1000):
        net.weights[-1][:] = rng.normal(size=(5, 6))
        r = rng.normal(size=6) * rng.uniform(0, 10)
        logit_sum = np.sum(net.weights[-1] @ r)
        assert network.prelogit_dilation_bound(net, r) <= -(logit_sum**2) / (2 * k * k) + 1e-12


def test_prelogit_bound_rejects_single_class():
    net = Mlp([np.ones((2, 2)), np.ones((1, 2))], [np.zeros(2), np.zeros(1)])
    with pytest.raises(ValueError):
        network.prelogit_dilation_bound(net, np.ones(2))
