"""Tape primitives against hand arithmetic and finite differences."""

import numpy as np
import pytest

from dfcn.errors import ContractError, DeterminismError, ShapeError
from dfcn.graph import SparseAdjacency
from dfcn.numcore import Tape, finite_diff_check


def test_matmul_identity():
    t = Tape()
    m = t.leaf([[1.0, 2.0], [3.0, 4.0]])
    eye = t.constant(np.eye(2))
    assert np.array_equal(t.matmul(eye, m).value, m.value)


def test_matmul_hand_case():
    t = Tape()
    a = t.leaf([[1.0, 2.0], [3.0, 4.0]])
    b = t.leaf([[1.0], [1.0]])
    assert np.array_equal(t.matmul(a, b).value, [[3.0], [7.0]])


def test_matmul_zero_annihilates():
    t = Tape()
    z = t.constant(np.zeros((2, 2)))
    m = t.leaf([[5.0, -1.0], [2.0, 7.0]])
    assert np.array_equal(t.matmul(z, m).value, np.zeros((2, 2)))


def test_matmul_shape_error_names_both_operands():
    t = Tape()
    a = t.leaf(np.ones((2, 3)))
    b = t.leaf(np.ones((2, 3)))
    with pytest.raises(ShapeError, match="2x3"):
        t.matmul(a, b)


def test_row_softmax_symmetry():
    t = Tape()
    out = t.row_softmax(t.leaf([[0.0, 0.0]])).value
    assert np.allclose(out, [[0.5, 0.5]], atol=1e-15)


def test_row_softmax_hand_case():
    t = Tape()
    out = t.row_softmax(t.leaf([[np.log(2.0), 0.0]])).value
    assert np.allclose(out, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-12)


def test_row_softmax_large_entries_do_not_overflow():
    t = Tape()
    out = t.row_softmax(t.leaf([[1000.0, 0.0]])).value
    assert np.isfinite(out).all()
    assert out[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert out[0, 1] == pytest.approx(0.0, abs=1e-12)


def test_row_softmax_rows_sum_to_one():
    rng = np.random.default_rng(7)
    for _ in range(50):
        t = Tape()
        out = t.row_softmax(t.leaf(rng.normal(size=(5, 6)) * 10)).value
        assert np.abs(out.sum(axis=1) - 1.0).max() < 1e-12
        assert ((out > 0.0) & (out < 1.0)).all()


def test_frobenius_sq_cases():
    t = Tape()
    assert t.frobenius_sq(t.leaf(np.zeros((3, 2)))).value[0, 0] == 0.0
    assert t.frobenius_sq(t.leaf([[3.0, 4.0]])).value[0, 0] == 25.0
    assert t.frobenius_sq(t.leaf(np.eye(2))).value[0, 0] == 2.0


def test_backward_frobenius_gradient_is_2w():
    t = Tape()
    w = t.leaf([[1.0, 2.0]])
    t.backward(t.frobenius_sq(w))
    assert np.array_equal(t.grad(w), [[2.0, 4.0]])


def test_backward_constant_root_gives_zero_gradients():
    t = Tape()
    w = t.leaf([[1.0, 2.0]])
    root = t.constant([[5.0]])
    t.backward(root)
    assert np.array_equal(t.grad(w), np.zeros((1, 2)))


def test_backward_requires_scalar_root():
    t = Tape()
    w = t.leaf(np.ones((2, 2)))
    out = t.scale(w, 2.0)
    with pytest.raises(ContractError, match="2x2"):
        t.backward(out)


def test_backward_is_deterministic_bitwise():
    rng = np.random.default_rng(3)
    a_val = rng.normal(size=(3, 4))
    b_val = rng.normal(size=(4, 2))

    def run():
        t = Tape()
        a, b = t.leaf(a_val), t.leaf(b_val)
        t.backward(t.frobenius_sq(t.matmul(a, b)))
        return t.grad(a), t.grad(b)

    ga1, gb1 = run()
    ga2, gb2 = run()
    assert np.array_equal(ga1, ga2)
    assert np.array_equal(gb1, gb2)


def test_chain_matmul_frobenius_matches_finite_differences():
    rng = np.random.default_rng(11)
    a = rng.uniform(-1, 1, size=(3, 4))
    b = rng.uniform(-1, 1, size=(4, 2))

    def build(t, leaves):
        return t.frobenius_sq(t.matmul(leaves[0], leaves[1]))

    assert finite_diff_check(build, [a, b]) < 1e-6


def test_finite_diff_quadratic_scalar():
    def build(t, leaves):
        return t.frobenius_sq(leaves[0])

    assert finite_diff_check(build, [np.array([[3.0]])]) < 1e-8


def test_finite_diff_constant_function():
    def build(t, leaves):
        return t.constant([[4.0]])

    assert finite_diff_check(build, [np.array([[1.0, 2.0]])]) == 0.0


def test_finite_diff_rejects_nondeterministic_function():
    state = {"calls": 0}

    def build(t, leaves):
        state["calls"] += 1
        return t.scale(t.frobenius_sq(leaves[0]), float(state["calls"]))

    with pytest.raises(DeterminismError):
        finite_diff_check(build, [np.array([[1.0]])])


def _path_adjacency():
    # normalized two-node path: all entries 1/2
    return SparseAdjacency.from_coo(
        [0, 0, 1, 1], [0, 1, 0, 1], [0.5, 0.5, 0.5, 0.5], (2, 2)
    )


def _asymmetric_sparse():
    # deliberately asymmetric so a missing transpose in the backward rule
    # cannot hide
    return SparseAdjacency.from_coo(
        [0, 0, 1], [0, 1, 1], [2.0, -1.0, 3.0], (2, 2)
    )


PRIMITIVE_CASES = {
    "matmul": lambda t, ls: t.matmul(ls[0], ls[1]),
    "spmm": lambda t, ls: t.spmm(_path_adjacency(), ls[2]),
    "spmm_asymmetric": lambda t, ls: t.spmm(_asymmetric_sparse(), ls[2]),
    "transpose": lambda t, ls: t.transpose(ls[0]),
    "add": lambda t, ls: t.add(ls[0], t.transpose(ls[1])),
    "sub": lambda t, ls: t.sub(ls[0], t.transpose(ls[1])),
    "mul": lambda t, ls: t.mul(ls[0], t.transpose(ls[1])),
    "scale": lambda t, ls: t.scale(ls[0], -1.7),
    "scale_var": lambda t, ls: t.scale_var(ls[3], ls[0]),
    "lerp": lambda t, ls: t.lerp(ls[3], ls[0], t.transpose(ls[1])),
    "add_bias": lambda t, ls: t.add_bias(ls[0], ls[4]),
    "leaky_relu": lambda t, ls: t.leaky_relu(ls[0]),
    "tanh": lambda t, ls: t.tanh(ls[0]),
    "sigmoid": lambda t, ls: t.sigmoid(ls[0]),
    "row_softmax": lambda t, ls: t.row_softmax(ls[0]),
    "student_t": lambda t, ls: t.student_t_weights(ls[0], ls[5], 1.0),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
def test_primitive_gradients_match_finite_differences(name):
    rng = np.random.default_rng(hash(name) % 2**32)
    a = rng.uniform(-1, 1, size=(3, 4))
    # keep leaky_relu inputs away from the kink at zero
    a = np.where(np.abs(a) < 1e-3, 0.25, a)
    b = rng.uniform(-1, 1, size=(4, 3))
    h = rng.uniform(-1, 1, size=(2, 3))
    s = rng.uniform(0.2, 0.8, size=(1, 1))
    bias = rng.uniform(-1, 1, size=(1, 4))
    centers = rng.uniform(-1, 1, size=(2, 4))
    op = PRIMITIVE_CASES[name]

    def build(t, leaves):
        return t.total_sum(op(t, leaves))

    err = finite_diff_check(build, [a, b, h, s, bias, centers])
    assert err < 1e-6, f"{name}: max relative error {err}"


def test_log_and_row_normalize_gradients():
    rng = np.random.default_rng(23)
    pos = rng.uniform(0.5, 1.5, size=(3, 4))
    weights = rng.uniform(-1, 1, size=(3, 4))

    def build_log(t, leaves):
        return t.total_sum(t.log(leaves[0]))

    def build_norm_weighted(t, leaves):
        # weighted sum makes the row_normalize gradient non-trivial
        return t.total_sum(t.mul(t.row_normalize(leaves[0]), t.constant(weights)))

    assert finite_diff_check(build_log, [pos]) < 1e-6
    assert finite_diff_check(build_norm_weighted, [pos]) < 1e-6


def test_leaf_rejects_non_finite():
    t = Tape()
    with pytest.raises(ContractError):
        t.leaf([[np.nan]])


def test_unused_leaf_gets_zero_gradient():
    t = Tape()
    used = t.leaf([[2.0]])
    unused = t.leaf(np.ones((3, 3)))
    t.backward(t.frobenius_sq(used))
    assert np.array_equal(t.grad(unused), np.zeros((3, 3)))
