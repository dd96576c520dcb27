import math

import numpy as np
import pytest

from milc.diffcore import Adam, AdamState, Tape, Tensor, adam_step, check_gradients, ops
from milc.diffcore.suite import op_cases

TOL = 1e-4


def naive_conv1d(x, w, b):
    B, C, L = x.shape
    O, _, k = w.shape
    out = np.zeros((B, O, L - k + 1))
    for n in range(B):
        for o in range(O):
            for t in range(L - k + 1):
                acc = b[o]
                for c in range(C):
                    for j in range(k):
                        acc += w[o, c, j] * x[n, c, t + j]
                out[n, o, t] = acc
    return out


def test_conv1d_identity_kernel(rng):
    x = rng.standard_normal((1, 1, 9))
    out = ops.conv1d(Tensor(x), Tensor(np.ones((1, 1, 1))), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, x)


def test_conv1d_output_length():
    out = ops.conv1d(Tensor(np.zeros((1, 3, 20))), Tensor(np.zeros((5, 3, 4))), Tensor(np.zeros(5)))
    assert out.shape == (1, 5, 17)


def test_conv1d_matches_loop_oracle(rng):
    x = rng.standard_normal((1, 2, 6))
    w = rng.standard_normal((3, 2, 3))
    b = rng.standard_normal(3)
    out = ops.conv1d(Tensor(x), Tensor(w), Tensor(b))
    np.testing.assert_allclose(out.data, naive_conv1d(x, w, b), rtol=0, atol=1e-12)


def test_conv1d_rejects_short_input():
    with pytest.raises(ValueError, match="shorter than kernel"):
        ops.conv1d(Tensor(np.zeros((1, 1, 3))), Tensor(np.zeros((1, 1, 4))))


def test_conv_transpose_is_adjoint_of_conv(rng):
    # <conv(x), y> == <x, conv_transpose(y)> with the same weights
    x = rng.standard_normal((2, 3, 9))
    w = rng.standard_normal((4, 3, 3))
    y = rng.standard_normal((2, 4, 7))
    lhs = np.sum(ops.conv1d(Tensor(x), Tensor(w)).data * y)
    rhs = np.sum(x * ops.conv_transpose1d(Tensor(y), Tensor(w)).data)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_relu_backward_masks(leaf):
    x = Tensor(np.array([-2.0, -0.5, 0.5, 3.0]), requires_grad=True)
    with Tape() as tape:
        y = ops.sum(ops.relu(x))
    tape.backward(y)
    np.testing.assert_array_equal(x.grad, [0, 0, 1, 1])


@pytest.mark.parametrize("n", [1, 2, 7])
def test_softmax_uniform(n):
    np.testing.assert_allclose(ops.softmax(Tensor(np.full(n, 3.3))).data, 1.0 / n)


def test_logsumexp_shift_invariance(rng):
    x = rng.uniform(-50, 50, size=(6, 11))
    direct = np.log(np.exp(x).sum(axis=1))
    shifted = ops.logsumexp(Tensor(x), axis=1).data
    np.testing.assert_allclose(shifted, direct, rtol=0, atol=1e-12)


def test_logsumexp_no_overflow():
    out = ops.logsumexp(Tensor(np.array([[1000.0, 1000.0]])), axis=1).data
    assert out[0] == pytest.approx(1000 + math.log(2))


def test_shape_errors_name_the_op():
    with pytest.raises(ValueError, match="matmul"):
        ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    with pytest.raises(ValueError, match="linear"):
        ops.linear(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))
    with pytest.raises(ValueError, match="add"):
        ops.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4,))))
    with pytest.raises(ValueError, match="lstm_cell"):
        ops.lstm_cell(*(Tensor(np.zeros(s)) for s in [(2, 3), (2, 4), (2, 4), (16, 5), (16, 4), (16,)]))


@pytest.mark.parametrize("name", sorted(op_cases(np.random.default_rng(0))))
def test_finite_difference(name):
    fn, inputs = op_cases(np.random.default_rng(1234))[name]
    errors = check_gradients(fn, inputs)
    assert max(errors.values()) < TOL, errors


def test_backward_is_linear(rng, leaf):
    x = leaf(4, 5)
    W = Tensor(rng.standard_normal((5, 5)))

    def f():
        return ops.sum(ops.tanh(ops.matmul(x, W)))

    def g():
        return ops.sum(ops.mul(ops.sigmoid(x), x))

    def grad_of(fn):
        x.grad = None
        with Tape() as tape:
            out = fn()
        tape.backward(out)
        return x.grad.copy()

    a, b = 1.7, -0.4
    combo = grad_of(lambda: ops.add(ops.scale(f(), a), ops.scale(g(), b)))
    np.testing.assert_allclose(combo, a * grad_of(f) + b * grad_of(g), rtol=1e-12, atol=1e-12)


def test_untaped_ops_record_nothing(leaf):
    x = leaf(2, 2)
    y = ops.tanh(x)
    assert not y.requires_grad
    with Tape() as tape:
        ops.tanh(Tensor(np.ones(3)))
    assert len(tape) == 0


def test_adam_zero_gradient_keeps_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.zeros(2)
    adam_step([p], AdamState(lr=0.1))
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def hand_adam_quadratic(w, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = 2 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        out.append(w)
    return out


def test_adam_matches_hand_recurrence_on_quadratic():
    expected = hand_adam_quadratic(1.0, 0.1, 10)
    w = Tensor(np.array(1.0), requires_grad=True)
    opt = Adam([w], lr=0.1)
    got = []
    for _ in range(10):
        with Tape() as tape:
            loss = ops.mul(w, w)
        tape.backward(loss)
        opt.step()
        opt.zero_grad()
        got.append(float(w.data))
    np.testing.assert_allclose(got, expected, rtol=1e-12)
    assert all(b < a for a, b in zip([1.0] + got, got))


def test_adam_deterministic():
    def run():
        r = np.random.default_rng(5)
        p = Tensor(r.standard_normal((3, 3)), requires_grad=True)
        opt = Adam([p], lr=0.01)
        traj = []
        for _ in range(5):
            with Tape() as tape:
                loss = ops.sum(ops.mul(ops.tanh(p), p))
            tape.backward(loss)
            opt.step()
            opt.zero_grad()
            traj.append(p.data.copy())
        return np.stack(traj)

    np.testing.assert_array_equal(run(), run())
