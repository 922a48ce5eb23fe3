import numpy as np
import pytest

import glrec.engine as eg
from glrec.engine import ShapeError, Tape, Tensor, backward
from glrec.optim import AdamState, NanGradientError, adam_step, gaussian_init, l2_penalty

from fdcheck import gradcheck


def test_matmul_identity():
    x = Tensor([[3.0, 4.0], [5.0, 6.0]])
    out = eg.matmul(Tensor(np.eye(2)), x)
    np.testing.assert_array_equal(out.data, x.data)


def test_relu_definition():
    out = eg.relu(Tensor([-1.0, 2.0]))
    np.testing.assert_array_equal(out.data, [0.0, 2.0])


def test_gather_rows_index_arithmetic():
    x = Tensor([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    out = eg.gather_rows(x, [2, 0])
    np.testing.assert_array_equal(out.data, [[5.0, 6.0], [1.0, 2.0]])


def test_shape_error_names_both_shapes():
    with pytest.raises(ShapeError) as exc:
        eg.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))
    assert "(2, 3)" in str(exc.value) and "(3, 2)" in str(exc.value)
    with pytest.raises(ShapeError) as exc:
        eg.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    assert "(2, 3)" in str(exc.value)


def test_backward_sum_of_squares():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    with Tape() as tape:
        loss = eg.sum_(eg.square(x))
    backward(tape, loss)
    np.testing.assert_allclose(x.grad, [2.0, 4.0, 6.0])


def test_backward_linear_map():
    a = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    x = Tensor([1.0, 1.0], requires_grad=True)
    with Tape() as tape:
        loss = eg.sum_(eg.matvec(Tensor(a), x))
    backward(tape, loss)
    np.testing.assert_allclose(x.grad, a.T @ np.ones(3))


def test_backward_rejects_nonscalar_loss():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = eg.square(x)
    with pytest.raises(ValueError):
        backward(tape, y)


def test_backward_accumulates_shared_use():
    # y = x*x + x: dy/dx = 2x + 1, the x-path is consumed twice
    x = Tensor([1.5, -2.0], requires_grad=True)
    with Tape() as tape:
        loss = eg.sum_(eg.add(eg.mul(x, x), x))
    backward(tape, loss)
    np.testing.assert_allclose(x.grad, 2.0 * x.data + 1.0)


def test_two_layer_mlp_matches_finite_differences():
    rng = np.random.default_rng(7)
    w1 = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    b1 = Tensor(rng.normal(size=4), requires_grad=True)
    w2 = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
    b2 = Tensor(rng.normal(size=2), requires_grad=True)
    x = Tensor(rng.normal(size=(5, 3)))

    def build():
        h = eg.relu(eg.add_rowvec(eg.matmul(x, eg.transpose(w1)), b1))
        out = eg.add_rowvec(eg.matmul(h, eg.transpose(w2)), b2)
        return eg.sum_(eg.square(out))

    gradcheck(build, [w1, b1, w2, b2])


def test_primitive_grads_match_finite_differences():
    rng = np.random.default_rng(3)
    a = Tensor(rng.normal(size=(3, 4)) * 0.5 + 2.0, requires_grad=True)
    b = Tensor(rng.normal(size=(3, 4)) * 0.5 + 3.0, requires_grad=True)
    u = Tensor(rng.normal(size=3), requires_grad=True)
    v = Tensor(rng.normal(size=4), requires_grad=True)

    cases = [
        lambda: eg.sum_(eg.divide(a, b)),
        lambda: eg.sum_(eg.sqrt(a)),
        lambda: eg.sum_(eg.log(a)),
        lambda: eg.sum_(eg.square(eg.sub(a, b))),
        lambda: eg.sum_(eg.scale_rows(a, u)),
        lambda: eg.sum_(eg.square(eg.scale_cols(a, v))),
        lambda: eg.sum_(eg.square(eg.outer_add(u, v))),
        lambda: eg.sum_(eg.square(eg.concat([a, b], axis=1))),
        lambda: eg.sum_(eg.square(eg.segment_sum(a, [0, 1, 0], 2))),
        lambda: eg.sum_(eg.square(eg.mean(a, axis=0))),
        lambda: eg.square(eg.mean(eg.mul(a, b))),
        lambda: eg.sum_(eg.clamp(a, 0.0, 3.5)),
        lambda: eg.l2_norm(eg.gather_rows(a, [1, 2, 1])),
    ]
    for build in cases:
        gradcheck(build, [a, b, u, v])


def test_adam_zero_gradient_keeps_parameter():
    p = Tensor([1.0, -2.0], requires_grad=True)
    p.grad = np.zeros(2)
    adam_step([("p", p)], AdamState(), lr=0.01)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_magnitude():
    # hand-evaluating the update at t=1 with g=1: m_hat = 1, v_hat = 1,
    # delta = -lr / (1 + eps) ~ -lr
    p = Tensor(0.5, requires_grad=True)
    p.grad = np.asarray(1.0)
    adam_step([("p", p)], AdamState(), lr=0.001)
    assert abs((float(p.data) - 0.5) + 0.001) < 1e-6


def test_adam_identical_params_identical_updates():
    p1 = Tensor([0.3, 0.7], requires_grad=True)
    p2 = Tensor([0.3, 0.7], requires_grad=True)
    p1.grad = np.array([0.1, -0.2])
    p2.grad = np.array([0.1, -0.2])
    adam_step([("a", p1), ("b", p2)], AdamState(), lr=0.01)
    np.testing.assert_array_equal(p1.data, p2.data)


def test_adam_aborts_on_nan():
    p = Tensor([1.0], requires_grad=True)
    p.grad = np.array([np.nan])
    with pytest.raises(NanGradientError):
        adam_step([("p", p)], AdamState(), lr=0.01)


def test_dropout_identity_cases():
    x = Tensor(np.ones((4, 4)))
    rng = np.random.default_rng(0)
    assert eg.dropout(x, 0.0, rng, training=True) is x
    assert eg.dropout(x, 0.6, rng, training=False) is x


def test_dropout_preserves_mean():
    rng = np.random.default_rng(42)
    x = Tensor(np.ones(1_000_000))
    out = eg.dropout(x, 0.4, rng, training=True)
    assert abs(out.data.mean() - 1.0) < 0.01


def test_dropout_gradient_uses_same_mask():
    x = Tensor(np.ones(1000), requires_grad=True)
    rng = np.random.default_rng(5)
    with Tape() as tape:
        out = eg.dropout(x, 0.5, rng, training=True)
        loss = eg.sum_(out)
    backward(tape, loss)
    np.testing.assert_array_equal(x.grad, out.data)


def test_gaussian_init_reproducible_and_calibrated():
    a = gaussian_init((1000,), np.random.default_rng(9))
    b = gaussian_init((1000,), np.random.default_rng(9))
    c = gaussian_init((1000,), np.random.default_rng(10))
    np.testing.assert_array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)
    big = gaussian_init((1_000_000,), np.random.default_rng(1))
    assert abs(big.data.mean()) < 1e-4
    assert abs(big.data.std() - 0.01) < 0.0002
    assert big.requires_grad


def test_l2_penalty_values():
    zero = Tensor(np.zeros((3, 3)), requires_grad=True)
    assert l2_penalty([("z", zero)]).item() == 0.0
    p = Tensor([3.0, 4.0], requires_grad=True)
    assert l2_penalty([("p", p)]).item() == pytest.approx(25.0)
    doubled = Tensor([6.0, 8.0], requires_grad=True)
    assert l2_penalty([("d", doubled)]).item() == pytest.approx(100.0)


def test_no_recording_without_tape():
    x = Tensor([1.0], requires_grad=True)
    y = eg.square(x)
    assert not y.requires_grad


def test_tape_len_counts_recorded_ops():
    x = Tensor([1.0], requires_grad=True)
    c = Tensor([2.0])
    with Tape() as tape:
        eg.square(x)
        eg.square(c)  # no grad input: not recorded
    assert len(tape) == 1
