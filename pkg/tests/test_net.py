import math

import numpy as np
import pytest

from gwcl.errors import DataFormatError, TrainingDivergedError
from gwcl.services.net import (
    MlpParams,
    OptimizerState,
    adam_step,
    backward,
    forward,
    init_params,
    load_params,
    predict_proba,
    save_params,
    softmax,
)
from gwcl.services.objective import PairSet, ce_loss, gwcl_loss, one_hot, total_loss


def _zero_params(d, hidden, c):
    return MlpParams(W1=np.zeros((d, hidden)), b1=np.zeros(hidden), W2=np.zeros((hidden, c)), b2=np.zeros(c))


def test_init_shapes_and_determinism():
    params = init_params(22, 180, 16, seed=5)
    assert params.W1.shape == (22, 180)
    assert params.W2.shape == (180, 16)
    again = init_params(22, 180, 16, seed=5)
    for name, array in params.arrays().items():
        np.testing.assert_array_equal(array, again.arrays()[name])
    limit = np.sqrt(6.0 / (22 + 180))
    assert np.abs(params.W1).max() <= limit


def test_minimal_init_has_zero_biases():
    params = init_params(1, 1, 2, seed=0)
    assert params.W1.shape == (1, 1) and params.W2.shape == (1, 2)
    assert not params.b1.any() and not params.b2.any()


def test_zero_params_give_uniform_output():
    z = forward(_zero_params(4, 3, 5), np.random.default_rng(0).normal(size=(7, 4))).z
    np.testing.assert_allclose(z, np.full((7, 5), 0.2))


def test_softmax_is_shift_invariant():
    np.testing.assert_allclose(softmax(np.full((2, 4), 731.5)), np.full((2, 4), 0.25))
    z = softmax(np.random.default_rng(1).normal(size=(10, 6)) * 50)
    np.testing.assert_allclose(z.sum(axis=1), 1.0)
    assert np.all(z >= 0)


def test_forward_matches_scalar_evaluation():
    rng = np.random.default_rng(2)
    params = init_params(4, 5, 3, seed=3)
    params.b1[:] = rng.normal(size=5)
    params.b2[:] = rng.normal(size=3)
    x = rng.normal(size=(6, 4))
    z = forward(params, x).z
    for r in range(6):
        hidden = [max(0.0, sum(x[r, i] * params.W1[i, j] for i in range(4)) + params.b1[j]) for j in range(5)]
        logits = [sum(hidden[j] * params.W2[j, k] for j in range(5)) + params.b2[k] for k in range(3)]
        top = max(logits)
        e = [math.exp(v - top) for v in logits]
        total = math.fsum(e)
        np.testing.assert_allclose(z[r], [v / total for v in e], rtol=0, atol=1e-12)


def test_forward_checks_input_width():
    with pytest.raises(DataFormatError):
        forward(init_params(4, 3, 2), np.zeros((2, 5)))


def test_zero_upstream_gradient():
    params = init_params(4, 5, 3, seed=1)
    trace = forward(params, np.random.default_rng(0).normal(size=(3, 4)))
    grads = backward(trace, np.zeros_like(trace.z))
    assert all(not g.any() for g in grads.values())


def _combined_loss(params, x, pairs, labeled_rows, targets, lam):
    trace = forward(params, x)
    gw = gwcl_loss(trace.z, pairs)
    ce = ce_loss(trace.z[labeled_rows], targets)
    report, grad = total_loss(gw, ce, lam, labeled_rows, len(pairs))
    return report.total, trace, grad


@pytest.mark.parametrize("activation", ["relu", "tanh", "sigmoid"])
def test_gradients_match_finite_differences(activation):
    rng = np.random.default_rng(4)
    params = init_params(4, 5, 3, seed=9, activation=activation)
    params.b1[:] = rng.normal(scale=0.1, size=5)
    x = rng.normal(size=(6, 4))
    pairs = PairSet(p=np.array([0, 1, 2, 3]), q=np.array([4, 5, 5, 4]), weights=rng.random(4))
    labeled_rows = np.array([0, 1])
    targets = one_hot(np.array([1, 3]), 3)

    _, trace, grad = _combined_loss(params, x, pairs, labeled_rows, targets, lam=8.0)
    analytic = backward(trace, grad)

    step = 1e-5
    for name, array in params.arrays().items():
        numeric = np.zeros_like(array)
        for i in np.ndindex(array.shape):
            original = array[i]
            array[i] = original + step
            up = _combined_loss(params, x, pairs, labeled_rows, targets, 8.0)[0]
            array[i] = original - step
            down = _combined_loss(params, x, pairs, labeled_rows, targets, 8.0)[0]
            array[i] = original
            numeric[i] = (up - down) / (2 * step)
        np.testing.assert_allclose(analytic[name], numeric, rtol=1e-4, atol=1e-7)


def test_sharded_backward_agrees_with_single_pass():
    rng = np.random.default_rng(5)
    params = init_params(6, 8, 4, seed=2)
    x = rng.normal(size=(37, 6))
    single = forward(params, x)
    sharded = forward(params, x, workers=3)
    np.testing.assert_allclose(sharded.z, single.z, rtol=0, atol=1e-12)
    upstream = rng.normal(size=single.z.shape)
    g1 = backward(single, upstream)
    g3 = backward(sharded, upstream, workers=3)
    for name in g1:
        np.testing.assert_allclose(g3[name], g1[name], rtol=1e-12, atol=1e-14)


def test_adam_zero_gradient_leaves_parameters():
    params = init_params(3, 4, 2, seed=0)
    before = params.copy()
    grads = {name: np.zeros_like(a) for name, a in params.arrays().items()}
    adam_step(params, grads, OptimizerState(lr=0.01))
    for name, array in params.arrays().items():
        np.testing.assert_array_equal(array, before.arrays()[name])


def test_adam_first_step_moves_by_the_learning_rate():
    params = init_params(3, 4, 2, seed=0)
    before = params.copy()
    rng = np.random.default_rng(6)
    grads = {name: rng.normal(size=a.shape) for name, a in params.arrays().items()}
    adam_step(params, grads, OptimizerState(lr=0.001))
    for name, array in params.arrays().items():
        delta = array - before.arrays()[name]
        np.testing.assert_allclose(delta, -0.001 * np.sign(grads[name]), rtol=1e-4)


def test_adam_converges_on_a_convex_quadratic():
    optimum = np.array([[1.0, -2.0]])
    curvature = np.array([[1.0, 3.0]])
    params = _zero_params(1, 2, 1)
    state = OptimizerState(lr=0.05)
    losses = []
    for _ in range(300):
        offset = params.W1 - optimum
        losses.append(float(0.5 * np.sum(curvature * offset * offset)))
        grads = {name: np.zeros_like(a) for name, a in params.arrays().items()}
        grads["W1"] = curvature * offset
        adam_step(params, grads, state)
    assert np.max(np.abs(params.W1 - optimum)) < 1e-3
    assert np.mean(losses[-50:]) < np.mean(losses[:50])
    assert state.step == 300


def test_sgd_is_plain_gradient_descent():
    params = init_params(2, 2, 2, seed=0)
    before = params.copy()
    grads = {name: np.ones_like(a) for name, a in params.arrays().items()}
    adam_step(params, grads, OptimizerState(lr=0.1, method="sgd"))
    np.testing.assert_allclose(params.W2, before.W2 - 0.1)


def test_non_finite_gradient_aborts():
    params = init_params(2, 2, 2, seed=0)
    grads = {name: np.zeros_like(a) for name, a in params.arrays().items()}
    grads["b2"][0] = np.inf
    with pytest.raises(TrainingDivergedError, match="non-finite gradient in b2"):
        adam_step(params, grads, OptimizerState(lr=0.1))


def test_batched_prediction_is_batch_independent():
    params = init_params(5, 7, 3, seed=4)
    x = np.random.default_rng(7).normal(size=(50, 5))
    one = predict_proba(params, x, 1)
    many = predict_proba(params, x, 4096)
    np.testing.assert_allclose(one, many, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(one.argmax(axis=1), many.argmax(axis=1))


def test_parameters_survive_a_file(tmp_path):
    params = init_params(3, 4, 2, seed=8, activation="tanh")
    save_params(tmp_path / "params", params)
    loaded = load_params(tmp_path / "params")
    assert loaded.activation == "tanh"
    for name, array in params.arrays().items():
        np.testing.assert_array_equal(loaded.arrays()[name], array)
