import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vdt import autodiff as ad
from vdt.autodiff import ContractError, DomainError, Node, ShapeError

from gradcheck import CASES, check


def test_matmul_examples():
    a = Node([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(ad.matmul(Node(np.eye(2)), a).value, a.value)
    assert ad.matmul(Node([[1.0, 2.0]]), Node([[3.0], [4.0]])).value.tolist() == [[11.0]]


def test_matmul_shape_errors():
    with pytest.raises(ShapeError):
        ad.matmul(Node(np.ones((2, 3))), Node(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        ad.matmul(Node(np.ones(3)), Node(np.ones((3, 1))))


def test_elementwise_examples():
    assert ad.add(Node([1.0, 2.0]), Node([0.0, 0.0])).value.tolist() == [1.0, 2.0]
    assert ad.mul(Node([2.0, 3.0]), Node([4.0, 5.0])).value.tolist() == [8.0, 15.0]
    with pytest.raises(ShapeError):
        ad.add(Node([1.0, 2.0]), Node([1.0, 2.0, 3.0]))


def test_bias_broadcast_adds_same_row():
    x = Node(np.zeros((3, 2)))
    out = ad.add_bias(x, Node([1.0, -2.0])).value
    assert np.array_equal(out, np.tile([1.0, -2.0], (3, 1)))
    with pytest.raises(ShapeError):
        ad.add_bias(x, Node([1.0, 2.0, 3.0]))


def test_sigmoid_values():
    assert ad.sigmoid(Node([0.0])).value[0] == 0.5
    v = ad.sigmoid(Node([-800.0, 800.0])).value
    assert v[0] < 1e-300 and v[1] == 1.0
    assert np.all(np.isfinite(v))


def test_sigmoid_gradient_at_point():
    x = Node([0.3])
    ad.backward(ad.sum(ad.sigmoid(x)))
    h = 1e-6
    s = lambda z: 1 / (1 + np.exp(-z))
    fd = (s(0.3 + h) - s(0.3 - h)) / (2 * h)
    assert abs(x.grad[0] - fd) / abs(fd) < 1e-6


def test_relu_value_and_mask():
    x = Node([-1.0, 2.0, 0.0])
    y = ad.relu(x)
    assert y.value.tolist() == [0.0, 2.0, 0.0]
    ad.backward(ad.sum(y))
    assert x.grad.tolist() == [0.0, 1.0, 0.0]


def test_rowwise_examples():
    assert np.allclose(ad.softmax_rowwise(Node([[0.0, 0.0]])).value, [[0.5, 0.5]])
    assert np.allclose(ad.l2_normalize_rowwise(Node([[3.0, 4.0]])).value, [[0.6, 0.8]])
    x = Node(np.arange(6.0).reshape(2, 3))
    ad.backward(ad.sum(x))
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_logsumexp_exclusion():
    x = Node([[0.0, 100.0, 0.0]])
    out = ad.logsumexp_rowwise(x, exclude=np.array([[False, True, False]])).value
    assert out[0] == pytest.approx(np.log(2.0))
    with pytest.raises(ContractError):
        ad.logsumexp_rowwise(x, exclude=np.ones((1, 3), bool))


def test_backward_examples():
    x = Node([1.0, -2.0, 3.0])
    ad.backward(ad.sum(ad.mul(x, x)))
    assert np.array_equal(x.grad, 2 * x.value)

    # diamond: y = x + x
    x = Node([1.5, 2.0])
    ad.backward(ad.sum(ad.add(x, x)))
    assert x.grad.tolist() == [2.0, 2.0]


def test_backward_accumulates_and_zero_grad_resets():
    x = Node([1.0, 2.0])
    ad.backward(ad.sum(ad.scalar_mul(x, 3.0)))
    ad.backward(ad.sum(ad.scalar_mul(x, 3.0)))
    assert x.grad.tolist() == [6.0, 6.0]
    ad.zero_grad([x])
    assert x.grad.tolist() == [0.0, 0.0]


def test_backward_needs_scalar_root():
    with pytest.raises(ContractError):
        ad.backward(Node([1.0, 2.0]))


def test_log_domain():
    with pytest.raises(DomainError):
        ad.log(Node([1.0, 0.0]))


def test_deep_chain_does_not_recurse():
    x = Node([1.0])
    y = x
    for _ in range(5000):
        y = ad.scalar_mul(y, 1.0)
    ad.backward(ad.sum(y))
    assert x.grad[0] == 1.0


def test_operator_sugar():
    x = Node([[1.0, 2.0]])
    assert ((x + 1) * 2 - x / 2).value.tolist() == [[3.5, 5.0]]
    assert (x @ x.T).value.tolist() == [[5.0]]
    assert (-x).value.tolist() == [[-1.0, -2.0]]


@pytest.mark.parametrize("name", sorted(CASES))
@pytest.mark.parametrize("seed", range(3))
def test_gradients_match_finite_differences(name, seed):
    assert check(CASES[name], seed) <= 1e-4


finite = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite))
def test_softmax_rows_are_distributions(x):
    s = ad.softmax_rowwise(Node(x)).value
    assert np.allclose(s.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(s >= 0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite), st.floats(-10, 10))
def test_softmax_shift_invariance(x, c):
    a = ad.softmax_rowwise(Node(x)).value
    b = ad.softmax_rowwise(Node(x + c)).value
    assert np.allclose(a, b, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (2, 3), elements=finite), arrays(np.float64, (2, 3), elements=finite))
def test_linear_gradients_are_exact(a, b):
    # for sum(a*b) the gradient is the other operand, exactly
    na, nb = Node(a), Node(b)
    ad.backward(ad.sum(ad.mul(na, nb)))
    assert np.array_equal(na.grad, b) and np.array_equal(nb.grad, a)
