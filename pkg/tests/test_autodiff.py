import numpy as np
import pytest

from skinret import autodiff as ad


def test_identity_gradient():
    tape = ad.Tape()
    x = ad.variable(tape, 3.0)
    grads = tape.backward(x * 1.0)
    assert grads.get(x) == 1.0


def test_square_gradient():
    tape = ad.Tape()
    x = ad.variable(tape, 3.0)
    grads = tape.backward(x * x)
    assert grads.get(x) == pytest.approx(6.0, rel=1e-12)


def test_addition_gradients_are_one():
    tape = ad.Tape()
    a = ad.variable(tape, np.array([1.0, 2.0]))
    b = ad.variable(tape, np.array([3.0, 4.0]))
    grads = tape.backward(ad.sum(a + b))
    assert np.array_equal(grads.get(a), np.ones(2))
    assert np.array_equal(grads.get(b), np.ones(2))


def test_reuse_accumulates():
    tape = ad.Tape()
    x = ad.variable(tape, 2.0)
    grads = tape.backward(x * x + x * x)
    assert grads.get(x) == pytest.approx(8.0)


def test_unreachable_variable_gets_zero():
    tape = ad.Tape()
    x = ad.variable(tape, np.arange(3.0))
    y = ad.variable(tape, 5.0)
    grads = tape.backward(ad.sum(x * 2.0))
    assert np.array_equal(grads.get(y), np.zeros(()))


def test_cross_tape_mixing_rejected():
    a = ad.variable(ad.Tape(), 1.0)
    b = ad.variable(ad.Tape(), 2.0)
    with pytest.raises(ad.TapeError):
        a + b


def test_non_scalar_loss_rejected():
    tape = ad.Tape()
    x = ad.variable(tape, np.arange(4.0))
    with pytest.raises(ad.ShapeError):
        tape.backward(x * 2.0)


def test_broadcasting_unbroadcasts_gradients():
    tape = ad.Tape()
    a = ad.variable(tape, np.ones((3, 4)))
    b = ad.variable(tape, np.ones(4))
    grads = tape.backward(ad.sum(a * b))
    assert grads.get(b).shape == (4,)
    assert np.array_equal(grads.get(b), np.full(4, 3.0))


def test_clamp_gradient_active_at_boundary():
    tape = ad.Tape()
    x = ad.variable(tape, np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    grads = tape.backward(ad.sum(ad.clamp(x, 0.0, 1.0)))
    assert np.array_equal(grads.get(x), np.array([0.0, 1.0, 1.0, 1.0, 0.0]))


def test_maximum_takes_first_argument_at_tie():
    tape = ad.Tape()
    a = ad.variable(tape, np.array([1.0]))
    b = ad.variable(tape, np.array([1.0]))
    grads = tape.backward(ad.sum(ad.maximum(a, b)))
    assert grads.get(a)[0] == 1.0
    assert grads.get(b)[0] == 0.0


def test_deterministic_replay():
    def build():
        tape = ad.Tape()
        x = ad.variable(tape, np.linspace(-1, 1, 7))
        y = ad.sum(ad.tanh(x * 2.0) + ad.softmax(x))
        return tape.backward(y).get(x)

    g1, g2 = build(), build()
    assert np.array_equal(g1, g2)


def test_softmax_rows_sum_to_one():
    x = ad.constant(np.random.default_rng(0).normal(size=(5, 7)))
    s = ad.softmax(x, axis=-1)
    assert np.allclose(s.value.sum(axis=-1), 1.0, atol=1e-12)


def test_getitem_scatter_gradient():
    tape = ad.Tape()
    x = ad.variable(tape, np.arange(6.0).reshape(2, 3))
    grads = tape.backward(ad.sum(x[0] * np.array([1.0, 2.0, 3.0])))
    expected = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    assert np.array_equal(grads.get(x), expected)


def test_gradcheck_linear_is_exact():
    err = ad.gradcheck(lambda tape, x: ad.sum(x * np.array([2.0, -3.0, 0.5])), [np.array([1.0, 2.0, 3.0])])
    assert err < 1e-10


@pytest.mark.parametrize(
    "fn",
    [
        lambda tape, x: ad.sum(ad.tanh(x)),
        lambda tape, x: ad.sum(ad.sigmoid(x)),
        lambda tape, x: ad.sum(ad.exp(x * 0.3)),
        lambda tape, x: ad.sum(ad.sqrt(ad.absolute(x) + 1.0)),
        lambda tape, x: ad.sum(ad.softmax(x) * np.arange(5.0)),
        lambda tape, x: ad.sum(ad.relu(x) * x),
        lambda tape, x: ad.mean(x * x, axis=None),
    ],
)
def test_gradcheck_elementwise_ops(fn):
    rng = np.random.default_rng(42)
    assert ad.gradcheck(fn, [rng.normal(size=5) + 0.1]) < 1e-6


def test_gradcheck_matmul_and_concat():
    rng = np.random.default_rng(7)

    def f(tape, a, b):
        c = ad.matmul(a, b)
        d = ad.concat([c, c * 2.0], axis=1)
        return ad.sum(d * d)

    assert ad.gradcheck(f, [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))], eps=1e-6) < 1e-6


def test_gradcheck_atan2():
    rng = np.random.default_rng(3)
    f = lambda tape, y, x: ad.sum(ad.atan2(y, x))
    assert ad.gradcheck(f, [rng.normal(size=4) + 2.0, rng.normal(size=4) + 2.0]) < 1e-7
