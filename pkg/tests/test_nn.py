import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vaevc.errors import NumericError, ShapeError
from vaevc.nn import (
    AdamState,
    Dense,
    MlpParams,
    adam_step,
    gradient_check,
    init_mlp,
    mlp_backward,
    mlp_forward,
)


def single(w, b, act):
    return MlpParams([Dense(np.array(w, dtype=float), np.array(b, dtype=float), act)])


def test_identity_linear_layer():
    p = single(np.eye(3), np.zeros(3), "linear")
    x = np.array([[1.5, -2.0, 0.25]])
    out, _ = mlp_forward(p, x)
    assert np.array_equal(out, x)


def test_identity_relu_layer():
    p = single(np.eye(2), np.zeros(2), "relu")
    out, _ = mlp_forward(p, np.array([[-1.0, 2.0]]))
    assert np.array_equal(out, [[0.0, 2.0]])


def test_two_layer_hand_evaluation():
    # h = relu([1,1] @ [[1,-2],[0.5,1]] + [0.1,0.2]) = relu([1.6, -0.8]) = [1.6, 0]
    # y = [1.6, 0] @ [[2,0],[1,-1]] + [0,1] = [3.2, 1.0]
    p = MlpParams(
        [
            Dense(np.array([[1.0, -2.0], [0.5, 1.0]]), np.array([0.1, 0.2]), "relu"),
            Dense(np.array([[2.0, 0.0], [1.0, -1.0]]), np.array([0.0, 1.0]), "linear"),
        ]
    )
    out, _ = mlp_forward(p, np.array([[1.0, 1.0]]))
    np.testing.assert_allclose(out, [[3.2, 1.0]], rtol=0, atol=1e-15)


def test_forward_rejects_shape_mismatch():
    p = single(np.eye(3), np.zeros(3), "linear")
    with pytest.raises(ShapeError):
        mlp_forward(p, np.ones((2, 4)))


def test_incompatible_layers_rejected():
    with pytest.raises(ShapeError):
        MlpParams([Dense(np.ones((2, 3)), np.zeros(3)), Dense(np.ones((4, 1)), np.zeros(1))])


def test_scalar_chain_rule():
    p = single([[0.7]], [0.0], "linear")
    _, tape = mlp_forward(p, np.array([[3.0]]))
    g = mlp_backward(p, tape, np.array([[1.0]]))
    assert g.weights[0][0, 0] == 3.0
    assert g.biases[0][0] == 1.0
    assert g.input[0, 0] == pytest.approx(0.7)


def test_zero_upstream_gradient():
    rng = np.random.default_rng(1)
    p = init_mlp([4, 5, 3], rng)
    out, tape = mlp_forward(p, rng.standard_normal((6, 4)))
    g = mlp_backward(p, tape, np.zeros_like(out))
    assert all(not np.any(t) for t in g.tensors())


def test_relu_gradient_at_zero_is_zero():
    p = single(np.eye(2), np.zeros(2), "relu")
    _, tape = mlp_forward(p, np.array([[0.0, 1.0]]))
    g = mlp_backward(p, tape, np.ones((1, 2)))
    assert g.biases[0][0] == 0.0
    assert g.biases[0][1] == 1.0


def test_backward_rejects_foreign_tape():
    rng = np.random.default_rng(0)
    p = init_mlp([3, 4, 2], rng)
    q = init_mlp([3, 2], rng)
    out, tape = mlp_forward(q, np.ones((1, 3)))
    with pytest.raises(ShapeError):
        mlp_backward(p, tape, out)


def _central_differences(p, x, upstream, h=1e-5):
    """Independent finite-difference gradient of sum(upstream * f(x))."""
    grads = []
    for t in p.tensors():
        g = np.zeros_like(t)
        for idx in np.ndindex(t.shape):
            orig = t[idx]
            t[idx] = orig + h
            lp = np.sum(upstream * mlp_forward(p, x)[0])
            t[idx] = orig - h
            lm = np.sum(upstream * mlp_forward(p, x)[0])
            t[idx] = orig
            g[idx] = (lp - lm) / (2 * h)
        grads.append(g)
    return grads


def test_backprop_matches_finite_differences():
    rng = np.random.default_rng(7)
    p = init_mlp([5, 7, 6, 3], rng)
    for layer in p.layers:
        layer.bias[:] = rng.uniform(-0.5, 0.5, layer.bias.shape)
    x = rng.standard_normal((4, 5))
    out, tape = mlp_forward(p, x)
    upstream = rng.standard_normal(out.shape)
    analytic = mlp_backward(p, tape, upstream).tensors()
    numeric = _central_differences(p, x, upstream)
    for a, n in zip(analytic, numeric):
        err = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        assert err.max() < 1e-4


def test_forward_is_deterministic():
    rng = np.random.default_rng(3)
    p = init_mlp([8, 16, 4], rng)
    x = rng.standard_normal((10, 8))
    a, _ = mlp_forward(p, x)
    b, _ = mlp_forward(p, x)
    assert np.array_equal(a, b)


def test_glorot_init_bounds():
    p = init_mlp([100, 50], np.random.default_rng(0))
    limit = math.sqrt(6 / 150)
    assert np.abs(p.layers[0].weight).max() <= limit
    assert not np.any(p.layers[0].bias)
    assert p.layers[0].activation == "linear"


# ---------------------------------------------------------------- ADAM


def scalar_adam(w, grad_fn, steps, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Reference ADAM on a Python float."""
    m = v = 0.0
    traj = []
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        w = w - lr * mhat / (math.sqrt(vhat) + eps)
        traj.append(w)
    return traj


def test_adam_zero_gradient_fixed_point():
    w = [np.array([1.0, -2.0]), np.array([[0.5]])]
    before = [t.copy() for t in w]
    state = AdamState.for_params(w, lr=0.1)
    adam_step(w, [np.zeros(2), np.zeros((1, 1))], state)
    assert all(np.array_equal(a, b) for a, b in zip(w, before))
    assert state.step == 1


@pytest.mark.parametrize("g", [3.0, -0.02, 250.0])
def test_adam_first_step_size(g):
    w = [np.array([0.0])]
    state = AdamState.for_params(w, lr=0.01)
    adam_step(w, [np.array([g])], state)
    # bias-corrected moments are g and g^2 after one step
    assert w[0][0] == pytest.approx(-0.01 * g / (abs(g) + 1e-8), rel=1e-12)


def test_adam_matches_scalar_reference_on_quadratic():
    w = [np.array([1.0])]
    state = AdamState.for_params(w, lr=0.1)
    traj = []
    for _ in range(10):
        adam_step(w, [2.0 * w[0]], state)
        traj.append(w[0][0])
    ref = scalar_adam(1.0, lambda x: 2.0 * x, 10, 0.1)
    np.testing.assert_allclose(traj, ref, rtol=0, atol=1e-12)
    assert abs(traj[-1]) < 1.0


def test_adam_rejects_nonfinite_gradient_by_name():
    p = init_mlp([2, 2], np.random.default_rng(0))
    state = AdamState.for_params(p.tensors())
    grads = [np.zeros_like(t) for t in p.tensors()]
    grads[1][0] = np.nan
    with pytest.raises(NumericError, match="layer0.bias"):
        adam_step(p, grads, state)
    assert state.step == 0


def test_adam_rejects_shape_mismatch():
    w = [np.zeros(3)]
    state = AdamState.for_params(w)
    with pytest.raises(ShapeError):
        adam_step(w, [np.zeros(4)], state)


def test_adam_state_validation():
    with pytest.raises(ValueError):
        AdamState(beta1=1.0)
    with pytest.raises(ValueError):
        AdamState(step=-1)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-3), min_size=1, max_size=8),
    st.floats(1e-3, 1e3),
)
def test_adam_first_update_sign_invariant_to_gradient_scale(gs, scale):
    g = np.array(gs)
    a = [np.zeros_like(g)]
    b = [np.zeros_like(g)]
    adam_step(a, [g], AdamState.for_params(a, lr=0.1))
    adam_step(b, [g * scale], AdamState.for_params(b, lr=0.1))
    assert np.array_equal(np.sign(a[0]), np.sign(b[0]))


# ---------------------------------------------------------------- gradient check


def test_gradient_check_quadratic_linear_layer():
    rng = np.random.default_rng(5)
    p = init_mlp([4, 3], rng)
    x = rng.standard_normal((6, 4))
    target = rng.standard_normal((6, 3))

    def loss_and_grad():
        out, tape = mlp_forward(p, x)
        r = out - target
        return 0.5 * float(np.sum(r * r)), mlp_backward(p, tape, r).tensors()

    report = gradient_check(p.tensors(), loss_and_grad, tolerance=1e-6)
    assert report.checked == sum(t.size for t in p.tensors())
    assert report.max_rel_error < 1e-6
    assert report.passed


def test_gradient_check_empty_model():
    report = gradient_check([], lambda: (0.0, []))
    assert report.checked == 0
    assert report.max_rel_error == 0.0
    assert report.worst_tensor is None


def test_gradient_check_reports_wrong_gradient():
    w = [np.array([1.0, 2.0])]

    def loss_and_grad():
        return float(np.sum(w[0] ** 2)), [3.0 * w[0]]  # should be 2w

    report = gradient_check(w, loss_and_grad, names=["w"])
    assert not report.passed
    assert report.worst_tensor == "w"
    assert report.max_rel_error == pytest.approx(1 / 3, rel=1e-6)


def test_gradient_check_skips_kinks():
    w = [np.array([0.0])]

    def loss_and_grad():
        return float(abs(w[0][0])), [np.sign(w[0])]

    report = gradient_check(w, loss_and_grad, samples=3)
    assert report.kinks > 0
    assert report.checked == 0
