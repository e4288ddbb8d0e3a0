import numpy as np
import pytest

from daggerlab import nncore


def finite_difference_grads(params, X, Y, loss, h=1e-5):
    """Central-difference gradient oracle, one parameter at a time."""
    gw = [np.zeros_like(w) for w in params.weights]
    gb = [np.zeros_like(b) for b in params.biases]
    for arrs, outs in ((params.weights, gw), (params.biases, gb)):
        for a, g in zip(arrs, outs):
            flat = a.ravel()
            gflat = g.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = nncore.net_loss(params, X, Y, loss)
                flat[i] = orig - h
                down = nncore.net_loss(params, X, Y, loss)
                flat[i] = orig
                gflat[i] = (up - down) / (2 * h)
    return gw, gb


def reference_forward(params, x):
    """Straight-line re-implementation of the affine+activation chain."""
    a = np.array(x, dtype=np.float64)
    n = len(params.weights)
    for l in range(n):
        z = np.zeros(params.layer_widths[l + 1])
        for j in range(len(z)):
            z[j] = params.biases[l][j]
            for i in range(len(a)):
                z[j] += a[i] * params.weights[l][i][j]
        if l < n - 1:
            if params.activation == "tanh":
                a = np.tanh(z)
            else:
                a = np.where(z > 0, z, 0.0)
        else:
            a = z
    return a


def test_init_deterministic():
    a = nncore.net_init([13, 8, 4], "tanh", seed=123)
    b = nncore.net_init([13, 8, 4], "tanh", seed=123)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    for ba, bb in zip(a.biases, b.biases):
        assert np.array_equal(ba, bb)
    c = nncore.net_init([13, 8, 4], "tanh", seed=124)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_init_zero_hidden_layers():
    p = nncore.net_init([13, 4], "tanh", seed=0)
    assert len(p.weights) == 1
    assert p.weights[0].shape == (13, 4)
    assert p.biases[0].shape == (4,)


def test_init_shape_bookkeeping():
    p = nncore.net_init([2, 32, 32, 4], "relu", seed=7)
    shapes = [(w.shape, b.shape) for w, b in zip(p.weights, p.biases)]
    assert shapes == [((2, 32), (32,)), ((32, 32), (32,)), ((32, 4), (4,))]


def test_init_rejects_bad_widths():
    with pytest.raises(ValueError):
        nncore.net_init([], "tanh", 0)
    with pytest.raises(ValueError):
        nncore.net_init([4, 0, 2], "tanh", 0)
    with pytest.raises(ValueError):
        nncore.net_init([4], "tanh", 0)


def test_forward_zero_params():
    p = nncore.net_init([5, 3, 2], "tanh", 0)
    p.weights = [np.zeros_like(w) for w in p.weights]
    assert np.array_equal(nncore.net_forward(p, np.ones(5)), np.zeros(2))


def test_forward_identity_affine():
    p = nncore.net_init([4, 4], "tanh", 0)
    p.weights[0] = np.eye(4)
    x = np.array([0.3, -1.2, 5.0, 0.0])
    assert np.allclose(nncore.net_forward(p, x), x)


def test_forward_matches_reference():
    for seed in range(5):
        p = nncore.net_init([6, 9, 7, 3], "tanh" if seed % 2 else "relu", seed)
        rng = np.random.default_rng(seed + 100)
        x = rng.normal(size=6)
        assert np.allclose(nncore.net_forward(p, x), reference_forward(p, x), atol=1e-12)


def test_forward_dim_mismatch():
    p = nncore.net_init([5, 2], "tanh", 0)
    with pytest.raises(ValueError):
        nncore.net_forward(p, np.ones(4))


def test_grad_zero_when_outputs_equal_targets():
    p = nncore.net_init([3, 4, 2], "tanh", 1)
    X = np.random.default_rng(0).normal(size=(6, 3))
    Y = nncore.net_forward_batch(p, X)
    g = nncore.net_grad(p, X, Y, "mse")
    for arr in g.weights + g.biases:
        assert np.allclose(arr, 0.0)


@pytest.mark.parametrize("seed,widths,activation,loss", [
    (0, [4, 6, 3], "tanh", "mse"),
    (1, [5, 8, 8, 2], "tanh", "mse"),
    (2, [3, 2], "tanh", "mse"),
    (3, [4, 10, 4], "relu", "mse"),
    (4, [6, 5, 3], "tanh", "softmax_cross_entropy"),
    (5, [4, 12, 5], "relu", "softmax_cross_entropy"),
    (6, [7, 7, 7, 4], "tanh", "softmax_cross_entropy"),
    (7, [2, 16, 2], "relu", "mse"),
    (8, [9, 4, 6], "tanh", "softmax_cross_entropy"),
    (9, [5, 5], "relu", "softmax_cross_entropy"),
    (10, [3, 6, 6, 1], "tanh", "mse"),
    (11, [8, 3, 3], "relu", "mse"),
])
def test_grad_matches_finite_differences(seed, widths, activation, loss):
    p = nncore.net_init(widths, activation, seed)
    rng = np.random.default_rng(seed + 500)
    X = rng.normal(size=(5, widths[0]))
    if loss == "mse":
        Y = rng.normal(size=(5, widths[-1]))
    else:
        Y = rng.integers(widths[-1], size=5)
    analytic = nncore.net_grad(p, X, Y, loss)
    gw, gb = finite_difference_grads(p, X, Y, loss)
    for a, f in zip(analytic.weights + analytic.biases, gw + gb):
        denom = np.maximum(np.abs(f), 1e-6)
        assert np.max(np.abs(a - f) / denom) < 1e-4


def test_softmax_grad_closed_form():
    # equal logits, K classes, target j: output-layer pre-activation gradient
    # is 1/K - 1{k=j}
    K, j = 4, 2
    p = nncore.net_init([3, K], "tanh", 0)
    p.weights[0][:] = 0.0  # logits all zero regardless of input
    x = np.array([[0.5, -0.3, 2.0]])
    g = nncore.net_grad(p, x, np.array([j]), "softmax_cross_entropy")
    expected = np.full(K, 1.0 / K)
    expected[j] -= 1.0
    assert np.allclose(g.biases[0], expected)


def test_grad_target_out_of_range():
    p = nncore.net_init([3, 4], "tanh", 0)
    with pytest.raises(ValueError):
        nncore.net_grad(p, np.ones((1, 3)), np.array([4]), "softmax_cross_entropy")


def test_sgd_zero_grad_no_change():
    p = nncore.net_init([3, 2], "tanh", 0)
    g = nncore.net_grad(p, np.ones((1, 3)), nncore.net_forward_batch(p, np.ones((1, 3))), "mse")
    state = nncore.init_opt_state(p, "sgd", 0.1)
    p2, _ = nncore.opt_step(p, g, state)
    for a, b in zip(p.weights, p2.weights):
        assert np.array_equal(a, b)


def test_sgd_two_steps_arithmetic():
    p = nncore.net_init([1, 1], "tanh", 0)
    p.weights[0][:] = 1.0
    g = p.copy()
    g.weights[0][:] = 1.0
    g.biases[0][:] = 0.0
    state = nncore.init_opt_state(p, "sgd", 0.1)
    p, state = nncore.opt_step(p, g, state)
    p, state = nncore.opt_step(p, g, state)
    assert np.isclose(p.weights[0][0, 0], 0.8)
    assert state.step == 2


def test_adam_first_step_sign_direction():
    p = nncore.net_init([2, 2], "tanh", 3)
    g = p.copy()
    rng = np.random.default_rng(9)
    g.weights = [rng.normal(size=w.shape) for w in p.weights]
    g.biases = [rng.normal(size=b.shape) for b in p.biases]
    lr = 1e-3
    state = nncore.init_opt_state(p, "adam", lr)
    p2, state2 = nncore.opt_step(p, g, state)
    # first bias-corrected step is -lr * g/(|g| + eps') which is -lr*sign(g) up to eps
    delta = p2.weights[0] - p.weights[0]
    assert np.allclose(delta, -lr * np.sign(g.weights[0]), atol=1e-6)
    assert state2.step == 1


def test_opt_step_pure():
    p = nncore.net_init([3, 3], "tanh", 5)
    before = [w.copy() for w in p.weights]
    g = nncore.net_grad(p, np.ones((2, 3)), np.zeros((2, 3)), "mse")
    state = nncore.init_opt_state(p, "adam")
    nncore.opt_step(p, g, state)
    for a, b in zip(p.weights, before):
        assert np.array_equal(a, b)
    assert all(np.allclose(m, 0.0) for m in state.m_weights)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    p = nncore.net_init([7, 5, 3], "relu", 42)
    path = tmp_path / "net.npz"
    nncore.save_params(path, p, meta={"note": "x"})
    q, meta = nncore.load_params(path)
    assert meta == {"note": "x"}
    assert q.layer_widths == p.layer_widths
    assert q.activation == p.activation
    for a, b in zip(p.weights + p.biases, q.weights + q.biases):
        assert a.tobytes() == b.tobytes()
