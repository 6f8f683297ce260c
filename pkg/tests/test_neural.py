import numpy as np
import pytest
from scipy.special import expit

from distdetect.neural import (
    PROB_CEIL,
    PROB_FLOOR,
    SIGMOID,
    SOFTMAX,
    AdamState,
    Mlp,
    TraceError,
    adam_from_dict,
    adam_step,
    adam_to_dict,
    backward,
    forward,
    init_params,
    load_net,
    save_net,
    zeros_like_net,
)
from distdetect.rng import stream


def test_zero_net_outputs():
    out, _ = forward(zeros_like_net((1, 3, 1), SIGMOID), [0.4, -2.0])
    np.testing.assert_array_equal(out, 0.5)
    out, _ = forward(zeros_like_net((1, 3, 2), SOFTMAX), [0.4, -2.0])
    np.testing.assert_array_equal(out, 0.5)


def test_single_layer_is_logistic():
    rng = stream(1, "test")
    for _ in range(20):
        w, b, x = rng.normal(0, 2, 3)
        net = Mlp((1, 1), [np.array([[w]])], [np.array([b])], SIGMOID)
        assert net(x)[0, 0] == pytest.approx(expit(w * x + b), rel=1e-14)


def test_layer_validation():
    with pytest.raises(ValueError):
        init_params((1, 4, 2), SIGMOID)
    with pytest.raises(ValueError):
        init_params((1, 4, 1), SOFTMAX)
    net = init_params((1, 4, 1))
    with pytest.raises(ValueError):
        forward(net, np.zeros((3, 2)))
    bad = init_params((1, 2, 1))
    bad.weights[0][0, 0] = np.nan
    with pytest.raises(ValueError):
        Mlp(bad.layer_sizes, bad.weights, bad.biases)


def test_depth_counts_hidden_layers():
    assert init_params((1, 20, 20, 20, 1)).depth == 3


def test_softmax_sums_to_one_and_sigmoid_clamped():
    rng = stream(2, "test")
    net = init_params((1, 30, 30, 30, 2), SOFTMAX, seed=4)
    out = net(rng.normal(0, 50, 200))
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
    big = Mlp((1, 1), [np.array([[1e3]])], [np.zeros(1)], SIGMOID)
    y = big(np.array([-5.0, 5.0]))
    assert y.min() == PROB_FLOOR and y.max() == PROB_CEIL


def _loss(net, x, c):
    return float(np.sum(c * net(x)))


@pytest.mark.parametrize("head, sizes", [(SIGMOID, (1, 4, 1)), (SOFTMAX, (1, 5, 5, 2))])
def test_backward_matches_central_differences(head, sizes):
    rng = stream(3, "fd", head)
    h = 1e-5
    worst = 0.0
    for probe in range(100):
        net = init_params(sizes, head, seed=probe)
        x = rng.normal(0, 1.5, (8, 1))
        c = rng.normal(0, 1, (8, sizes[-1]))
        _, tr = forward(net, x)
        grads = [g for pair in backward(net, tr, c) for g in pair]
        params = net.params()
        i = int(rng.integers(len(params)))
        j = tuple(int(rng.integers(s)) for s in params[i].shape)
        old = params[i][j]
        params[i][j] = old + h
        lp = _loss(net, x, c)
        params[i][j] = old - h
        lm = _loss(net, x, c)
        params[i][j] = old
        fd = (lp - lm) / (2 * h)
        worst = max(worst, abs(grads[i][j] - fd) / max(abs(fd), abs(grads[i][j]), 1e-6))
    assert worst <= 1e-5


def test_backward_zero_upstream():
    net = init_params((1, 6, 6, 2), SOFTMAX, seed=1)
    _, tr = forward(net, [0.1, 0.7])
    for dw, db in backward(net, tr, np.zeros((2, 2))):
        assert not dw.any() and not db.any()


def test_sigmoid_head_derivative():
    # single-layer net with unit weight: d out / d bias = y(1-y)
    for z in (-3.0, 0.0, 1.2):
        net = Mlp((1, 1), [np.zeros((1, 1))], [np.array([z])], SIGMOID)
        y, tr = forward(net, [0.0])
        (dw, db), = backward(net, tr, np.ones((1, 1)))
        assert db[0] == pytest.approx(y[0, 0] * (1 - y[0, 0]), rel=1e-14)


def test_stale_trace_rejected():
    net = init_params((1, 3, 1), seed=0)
    _, tr = forward(net, [0.2])
    grads = backward(net, tr, np.ones((1, 1)))
    adam_step(net, AdamState.for_net(net, lr=1e-3), grads)
    with pytest.raises(TraceError):
        backward(net, tr, np.ones((1, 1)))
    with pytest.raises(TraceError):
        backward(init_params((1, 3, 1), seed=0), tr, np.ones((1, 1)))


def test_adam_first_step():
    net = init_params((1, 3, 1), seed=2)
    before = [p.copy() for p in net.params()]
    rng = stream(4, "test")
    grads = [(rng.normal(size=w.shape), rng.normal(size=b.shape)) for w, b in zip(net.weights, net.biases)]
    state = AdamState.for_net(net, lr=1e-3)
    adam_step(net, state, grads)
    assert state.t == 1
    flat = [g for pair in grads for g in pair]
    for p0, p1, g in zip(before, net.params(), flat):
        np.testing.assert_allclose(p1 - p0, -1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-9, atol=1e-15)
    assert all(np.all(v >= 0) for v in state.v)


def test_adam_zero_gradient_keeps_params():
    net = init_params((1, 3, 1), seed=2)
    before = [p.copy() for p in net.params()]
    state = AdamState.for_net(net)
    adam_step(net, state, [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)])
    assert state.t == 1
    for a, b in zip(before, net.params()):
        np.testing.assert_array_equal(a, b)


def test_adam_rejects_non_finite():
    net = init_params((1, 3, 1), seed=2)
    grads = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
    grads[0][0][0, 0] = np.inf
    with pytest.raises(FloatingPointError):
        adam_step(net, AdamState.for_net(net), grads)


def _run(seed):
    net = init_params((1, 5, 1), seed=seed)
    state = AdamState.for_net(net, lr=1e-2)
    x = stream(seed, "x").normal(size=(16, 1))
    for _ in range(10):
        out, tr = forward(net, x)
        adam_step(net, state, backward(net, tr, out - 0.3))
    return net


def test_adam_deterministic():
    a, b = _run(7), _run(7)
    for p, q in zip(a.params(), b.params()):
        assert p.tobytes() == q.tobytes()


def test_init_rule():
    net = init_params((20, 20, 1), seed=3)
    assert not net.biases[0].any()
    assert np.abs(net.weights[0]).max() <= np.sqrt(6 / 40)
    again = init_params((20, 20, 1), seed=3)
    assert net.weights[0].tobytes() == again.weights[0].tobytes()
    assert not np.array_equal(net.weights[0], init_params((20, 20, 1), seed=4).weights[0])


def test_checkpoint_roundtrip(tmp_path):
    net = init_params((1, 4, 4, 2), SOFTMAX, seed=5)
    save_net(net, tmp_path / "n.json")
    back = load_net(tmp_path / "n.json")
    assert back.layer_sizes == net.layer_sizes and back.head == SOFTMAX and back.init_seed == 5
    for p, q in zip(net.params(), back.params()):
        assert p.tobytes() == q.tobytes()
    state = AdamState.for_net(net)
    state.t = 3
    again = adam_from_dict(adam_to_dict(state), net)
    assert again.t == 3 and again.lr == state.lr
