"""Soft assignments, target sharpening, and the KL objectives."""

import logging

import numpy as np
import pytest

from dfcn import selfsup
from dfcn.errors import ValidationError
from dfcn.numcore import Tape, finite_diff_check
from dfcn.selfsup import Centers, single_kl, soft_assign, target_distribution, triplet_kl


def assign_value(z, centers, dof=1.0):
    t = Tape()
    q = soft_assign(t, t.constant(z), t.constant(centers), dof)
    return q.value


# -- soft_assign ---------------------------------------------------------------


def test_soft_assign_equidistant_is_uniform():
    z = np.array([[0.0, 0.0]])
    centers = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert np.allclose(assign_value(z, centers), [[0.5, 0.5]], atol=1e-15)


def test_soft_assign_hand_case():
    # z at the first center, second center at distance 1, dof 1:
    # weights (1, 1/2) normalize to (2/3, 1/3)
    z = np.array([[0.0]])
    centers = np.array([[0.0], [1.0]])
    assert np.allclose(assign_value(z, centers), [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-15)


def test_soft_assign_translation_invariance():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(5, 3))
    centers = rng.normal(size=(2, 3))
    shift = rng.normal(size=(1, 3))
    assert np.allclose(
        assign_value(z, centers), assign_value(z + shift, centers + shift), atol=1e-12
    )


def test_soft_assign_rows_sum_to_one():
    rng = np.random.default_rng(5)
    q = assign_value(rng.normal(size=(20, 4)), rng.normal(size=(3, 4)))
    assert np.abs(q.sum(axis=1) - 1.0).max() < 1e-9
    assert ((q >= 0.0) & (q <= 1.0)).all()


# -- target_distribution ----------------------------------------------------------


def test_target_uniform_stays_uniform():
    q = np.full((4, 2), 0.5)
    assert np.allclose(target_distribution(q), q, atol=1e-15)


def test_target_single_row_is_identity():
    q = np.array([[0.8, 0.2]])
    assert np.allclose(target_distribution(q), q, atol=1e-15)


def test_target_worked_example():
    q = np.array([[0.9, 0.1], [0.6, 0.4]])
    p = target_distribution(q)
    expected = np.array([[0.9643, 0.0357], [0.4286, 0.5714]])
    assert np.abs(p - expected).max() < 1e-4
    # exact values via the column sums f = (1.5, 0.5)
    exact0 = np.array([0.81 / 1.5, 0.01 / 0.5])
    exact0 /= exact0.sum()
    assert np.allclose(p[0], exact0, atol=1e-15)


def test_target_idempotent_on_one_hot():
    q = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert np.array_equal(target_distribution(q), q)


def test_target_degenerate_column_warns(caplog):
    q = np.array([[1.0, 0.0], [1.0, 0.0]])
    with caplog.at_level(logging.WARNING, logger="dfcn.selfsup"):
        p = target_distribution(q)
    assert "degenerate" in caplog.text
    assert np.array_equal(p, q)


def test_target_rows_sum_to_one():
    rng = np.random.default_rng(11)
    raw = rng.uniform(0.01, 1.0, size=(30, 5))
    q = raw / raw.sum(axis=1, keepdims=True)
    p = target_distribution(q)
    assert np.abs(p.sum(axis=1) - 1.0).max() < 1e-9


# -- KL losses -----------------------------------------------------------------------


def kl_value(p, tables, mode="triplet"):
    t = Tape()
    nodes = [t.constant(tb) for tb in tables]
    if mode == "triplet":
        return triplet_kl(t, p, *nodes).value[0, 0]
    return single_kl(t, p, nodes[0]).value[0, 0]


def test_triplet_kl_zero_when_all_tables_equal_target():
    p = np.array([[0.7, 0.3], [0.2, 0.8]])
    assert kl_value(p, [p, p, p]) == pytest.approx(0.0, abs=1e-12)


def test_triplet_kl_hand_case_ln2():
    p = np.array([[1.0, 0.0]])
    q = np.array([[0.5, 0.5]])
    assert kl_value(p, [q, q, q]) == pytest.approx(np.log(2.0), abs=1e-12)


def test_triplet_kl_nonnegative_on_random_tables():
    rng = np.random.default_rng(13)
    for _ in range(100):
        def random_table():
            raw = rng.uniform(0.01, 1.0, size=(4, 3))
            return raw / raw.sum(axis=1, keepdims=True)

        p = random_table()
        assert kl_value(p, [random_table() for _ in range(3)]) >= -1e-12


def test_triplet_kl_zero_iff_mixture_matches():
    rng = np.random.default_rng(17)
    raw = rng.uniform(0.1, 1.0, size=(3, 3))
    q = raw / raw.sum(axis=1, keepdims=True)
    # three different tables whose mean equals p
    delta = rng.uniform(-0.05, 0.05, size=(3, 3))
    delta -= delta.mean(axis=1, keepdims=True)
    tables = [q + delta, q - delta, q.copy()]
    assert kl_value(q, tables) == pytest.approx(0.0, abs=1e-12)
    assert kl_value(q, [q + delta, q + delta, q + delta]) > 1e-6


def test_single_kl_cases():
    p = np.array([[1.0, 0.0]])
    q = np.array([[0.5, 0.5]])
    assert kl_value(p, [p], mode="single") == pytest.approx(0.0, abs=1e-12)
    assert kl_value(p, [q], mode="single") == pytest.approx(np.log(2.0), abs=1e-12)
    rng = np.random.default_rng(19)
    raw = rng.uniform(0.01, 1.0, size=(5, 2))
    table = raw / raw.sum(axis=1, keepdims=True)
    assert kl_value(table, [np.roll(table, 1, axis=0)], mode="single") >= -1e-12


def test_kl_shape_mismatch():
    t = Tape()
    with pytest.raises(ValidationError):
        single_kl(t, np.ones((2, 2)) / 2, t.constant(np.ones((3, 2)) / 2))


def test_kl_clamp_warns_when_mixture_underflows(caplog):
    t = Tape()
    p = np.array([[1.0, 0.0]])
    q = t.constant(np.array([[0.0, 1.0]]))
    with caplog.at_level(logging.WARNING, logger="dfcn.selfsup"):
        single_kl(t, p, q)
    assert "clamped" in caplog.text


# -- centers -----------------------------------------------------------------------


def test_centers_validation():
    with pytest.raises(ValidationError):
        Centers(u=np.zeros((1, 3)))
    with pytest.raises(ValidationError):
        Centers(u=np.zeros((3, 2)), dof=-1.0)


# -- gradients ----------------------------------------------------------------------


def test_triplet_kl_gradients_match_finite_differences():
    rng = np.random.default_rng(23)
    z_tilde = rng.uniform(-1, 1, size=(6, 3))
    z_igae = rng.uniform(-1, 1, size=(6, 3))
    z_ae = rng.uniform(-1, 1, size=(6, 3))
    centers = rng.uniform(-1, 1, size=(2, 3))

    # target computed once and held constant, as during training
    t0 = Tape()
    q0 = soft_assign(t0, t0.constant(z_tilde), t0.constant(centers))
    p_const = target_distribution(q0.value)

    def build(t, leaves):
        zt, zi, za, u = leaves
        q = soft_assign(t, zt, u)
        q_igae = soft_assign(t, zi, u)
        q_ae = soft_assign(t, za, u)
        return triplet_kl(t, p_const, q, q_igae, q_ae)

    err = finite_diff_check(build, [z_tilde, z_igae, z_ae, centers])
    assert err < 1e-4
