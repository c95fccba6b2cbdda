import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdrl import nn
from sdrl.errors import ConfigError, ShapeError, UpdateRejected

from fd import central_diff, max_rel_error


def test_init_biases_zero_and_deterministic():
    p = nn.init_params([3, 1], seed=4)
    assert np.all(p.biases[0] == 0.0)
    q = nn.init_params([3, 1], seed=4)
    assert np.array_equal(p.data, q.data)


def test_init_weight_bound_first_layer():
    p = nn.init_params([3, 64, 64, 1], seed=0)
    bound = 1 / np.sqrt(3)
    assert abs(bound - 0.5774) < 1e-4
    w = p.weights[0]
    assert w.shape == (64, 3)
    assert np.all(np.abs(w) <= bound)
    # 192 uniform draws should come close to the bound
    assert np.max(np.abs(w)) > 0.95 * bound
    assert np.all(np.abs(p.weights[1]) <= 1 / 8)


@pytest.mark.parametrize("sizes", [[], [3], [3, 0, 1], [3, -2]])
def test_init_rejects_bad_sizes(sizes):
    with pytest.raises(ConfigError):
        nn.init_params(sizes, seed=0)


def test_tanh_scaled_needs_bounds():
    with pytest.raises(ConfigError):
        nn.init_params([2, 1], "tanh_scaled", seed=0)


def test_shapes_follow_layer_sizes():
    p = nn.init_params([5, 7, 3, 2], seed=1)
    for l, (w, b) in enumerate(zip(p.weights, p.biases)):
        assert w.shape == (p.layer_sizes[l + 1], p.layer_sizes[l])
        assert b.shape == (p.layer_sizes[l + 1],)


def test_forward_zero_params_gives_zero():
    p = nn.NetworkParams([4, 8, 2])
    out, _ = nn.forward(p, np.ones((3, 4)))
    assert np.array_equal(out, np.zeros((3, 2)))


def test_forward_single_linear_layer():
    p = nn.NetworkParams([2, 2])
    p.weights[0][...] = [[2, 0], [0, 3]]
    p.biases[0][...] = [1, -1]
    out, _ = nn.forward(p, np.array([1.0, 1.0]))
    assert np.array_equal(out[0], [3.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(-1e3, 1e3))
def test_tanh_scaled_codomain(seed, scale):
    p = nn.init_params([3, 16, 1], "tanh_scaled", seed, low=[-2.0], high=[2.0])
    x = np.random.default_rng(seed).standard_normal((20, 3)) * scale
    out = nn.predict(p, x)
    assert np.all(out >= -2.0) and np.all(out <= 2.0)


def test_forward_width_mismatch():
    p = nn.init_params([3, 4, 1], seed=0)
    with pytest.raises(ShapeError):
        nn.forward(p, np.ones((2, 4)))
    with pytest.raises(ShapeError):
        nn.predict(p, np.ones(2))


def test_predict_matches_forward():
    p = nn.init_params([3, 8, 2], "tanh_scaled", 3, low=[-1, 0], high=[1, 2])
    x = np.random.default_rng(0).standard_normal((5, 3))
    assert np.array_equal(nn.predict(p, x), nn.forward(p, x)[0])


def test_backward_zero_upstream():
    p = nn.init_params([3, 4, 2], seed=0)
    _, cache = nn.forward(p, np.ones((2, 3)))
    g, dx = nn.backward(p, cache, np.zeros((2, 2)))
    assert np.all(g.data == 0.0) and np.all(dx == 0.0)


def test_backward_linear_input_gradient():
    p = nn.init_params([3, 2], seed=5)
    _, cache = nn.forward(p, np.ones((1, 3)))
    g = np.array([[0.7, -1.3]])
    _, dx = nn.backward(p, cache, g)
    assert np.allclose(dx, g @ p.weights[0])


def test_backward_mismatched_cache():
    p = nn.init_params([3, 4, 2], seed=0)
    q = nn.init_params([3, 2], seed=0)
    _, cache = nn.forward(q, np.ones((1, 3)))
    with pytest.raises(ShapeError):
        nn.backward(p, cache, np.ones((1, 2)))


def _fd_check(sizes, output, seed, batch=4):
    rng = np.random.default_rng(seed)
    kw = {}
    if output == "tanh_scaled":
        kw = dict(low=-np.ones(sizes[-1]) * 2, high=np.ones(sizes[-1]))
    p = nn.init_params(sizes, output, seed, **kw)
    p.data[...] = rng.uniform(-0.8, 0.8, p.size)
    x = rng.standard_normal((batch, sizes[0]))
    c = rng.standard_normal((batch, sizes[-1]))

    def loss():
        return float(np.sum(c * nn.predict(p, x)))

    out, cache = nn.forward(p, x)
    g, dx = nn.backward(p, cache, c)
    assert max_rel_error(g.data, central_diff(loss, p.data)) < 1e-4
    xf = x.ravel()
    x = xf.reshape(x.shape)
    assert max_rel_error(dx.ravel(), central_diff(loss, xf)) < 1e-4


def test_backward_finite_differences_3_4_2():
    _fd_check([3, 4, 2], "linear", 11)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(1, 16), min_size=0, max_size=3), st.integers(1, 4),
       st.integers(1, 3), st.sampled_from(["linear", "tanh_scaled"]), st.integers(0, 10**6))
def test_backward_finite_differences_random_nets(hidden, n_in, n_out, output, seed):
    _fd_check([n_in, *hidden, n_out], output, seed, batch=3)


def test_adam_zero_gradient_no_change():
    p = nn.init_params([2, 3, 1], seed=0)
    before = p.flat()
    st_ = nn.adam_init(p)
    nn.adam_step(p, nn.zero_grads(p), st_, 0.1)
    assert np.array_equal(p.data, before)
    assert st_.step == 1


def _scalar_adam(x0, lr, steps):
    p = nn.NetworkParams([1, 1])  # optimise the bias of a 1x1 layer as the scalar x
    p.biases[0][0] = x0
    st_ = nn.adam_init(p)
    losses = []
    for _ in range(steps):
        x = p.biases[0][0]
        losses.append(x * x)
        g = nn.zero_grads(p)
        g.biases[0][0] = 2 * x
        nn.adam_step(p, g, st_, lr)
    return p.biases[0][0], losses, st_


def test_adam_scalar_quadratic():
    x, _, st_ = _scalar_adam(1.0, 0.05, 200)
    assert abs(x) < 0.05
    assert st_.step == 200


def test_adam_descends_monotonically():
    x, losses, _ = _scalar_adam(1.0, 0.001, 100)
    assert all(b < a for a, b in zip(losses, losses[1:]))
    assert x * x < losses[0]


def test_adam_rejects_nan_and_leaves_state():
    p = nn.init_params([2, 3, 1], seed=0)
    st_ = nn.adam_init(p)
    g = nn.zero_grads(p)
    g.data[:] = 0.5
    nn.adam_step(p, g, st_, 0.01)
    snap = (p.flat(), st_.m.copy(), st_.v.copy(), st_.step)
    g.data[3] = np.nan
    with pytest.raises(UpdateRejected):
        nn.adam_step(p, g, st_, 0.01)
    assert np.array_equal(p.data, snap[0])
    assert np.array_equal(st_.m, snap[1]) and np.array_equal(st_.v, snap[2])
    assert st_.step == snap[3]


def test_soft_update_formula():
    src = nn.NetworkParams([1, 1], np.array([1.0, 1.0]))
    tgt = nn.NetworkParams([1, 1], np.array([0.0, 0.0]))
    nn.soft_update(tgt, src, 0.001)
    assert np.array_equal(tgt.data, [0.001, 0.001])
    nn.soft_update(tgt, src, 0.0)
    assert np.array_equal(tgt.data, [0.001, 0.001])
    nn.soft_update(tgt, src, 1.0)
    assert np.array_equal(tgt.data, src.data)


def test_soft_update_shape_and_range_errors():
    a = nn.init_params([2, 1], seed=0)
    b = nn.init_params([3, 1], seed=0)
    with pytest.raises(ShapeError):
        nn.soft_update(a, b, 0.5)
    with pytest.raises(ConfigError):
        nn.soft_update(a, a.copy(), 1.5)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.001, 0.5), st.integers(1, 60), st.integers(0, 1000))
def test_soft_update_geometric_tracking(tau, n, seed):
    src = nn.init_params([3, 4, 2], seed=seed)
    tgt = nn.init_params([3, 4, 2], seed=seed + 1)
    d0 = np.max(np.abs(tgt.data - src.data))
    for _ in range(n):
        nn.soft_update(tgt, src, tau)
    d = np.max(np.abs(tgt.data - src.data))
    assert d == pytest.approx((1 - tau) ** n * d0, rel=1e-9, abs=1e-15)


def test_copy_is_independent():
    p = nn.init_params([2, 3, 1], seed=0)
    q = p.copy()
    q.data[0] += 1.0
    assert p.data[0] != q.data[0]
    assert q.weights[0][0, 0] == q.data[0]
