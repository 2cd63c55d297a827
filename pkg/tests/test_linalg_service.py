import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from errors import NonConvergenceError, ParameterError
from helpers import gaussian
from services.linalg_service import (
    EnsembleKind, Field, Matrix, gen_ensemble, is_in_p, op_norm, row_stats,
)


# ------------------ Matrix ------------------

def test_matrix_rejects_non_square():
    with pytest.raises(ParameterError):
        Matrix(Field.REAL, np.ones((2, 3)))


def test_matrix_rejects_empty():
    with pytest.raises(ParameterError):
        Matrix(Field.REAL, np.zeros((0, 0)))


def test_matrix_rejects_non_finite():
    with pytest.raises(ParameterError):
        Matrix(Field.REAL, [[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(ParameterError):
        Matrix(Field.COMPLEX, [[np.inf, 0], [0, 1]])


def test_real_field_rejects_imaginary_parts():
    with pytest.raises(ParameterError):
        Matrix(Field.REAL, [[1 + 1j, 0], [0, 1]])
    A = Matrix(Field.REAL, np.array([[1 + 0j, 2], [3, 4]]))
    assert A.entries.dtype == np.float64


def test_entries_are_read_only():
    A = Matrix(Field.REAL, np.eye(3))
    with pytest.raises(ValueError):
        A.entries[0, 0] = 5.0


def test_from_array_infers_field():
    assert Matrix.from_array(np.eye(2)).field is Field.REAL
    assert Matrix.from_array(np.eye(2) * 1j).field is Field.COMPLEX


def test_scaled_by_complex_switches_field():
    A = Matrix(Field.REAL, np.eye(2)).scaled(1j)
    assert A.field is Field.COMPLEX
    assert A.entries[0, 0] == 1j


# ------------------ row_stats ------------------

def test_row_stats_identity():
    s = row_stats(Matrix(Field.REAL, np.eye(5)))
    assert s.h2 == 1.0 and s.hinf == 1.0


def test_row_stats_rotation():
    s = row_stats(Matrix(Field.REAL, [[0.6, 0.8], [0.8, -0.6]]))
    assert s.h2 == pytest.approx(1.0, abs=1e-15)
    assert s.hinf == pytest.approx(0.8, abs=1e-15)


def test_row_stats_averaging_matrix():
    s = row_stats(Matrix(Field.REAL, np.full((4, 4), 0.25)))
    assert s.h2 == pytest.approx(0.5, abs=1e-15)
    assert s.hinf == pytest.approx(0.25, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 10), seed=st.integers(0, 2 ** 32 - 1), complex_field=st.booleans())
def test_row_parameters_ordered(n, seed, complex_field):
    A = gaussian(n, "complex" if complex_field else "real", seed)
    s = row_stats(A)
    norm = op_norm(A).op_norm
    assert 0 <= s.hinf <= s.h2 * (1 + 1e-12)
    assert s.h2 <= norm * (1 + 1e-7)
    assert norm >= s.row_l2.max() / 1.0000001


# ------------------ op_norm ------------------

def test_op_norm_diagonal():
    assert op_norm(Matrix(Field.REAL, np.diag([3.0, 1.0]))).op_norm == pytest.approx(3.0, rel=1e-10)


def test_op_norm_separated_gap_meets_tolerance():
    assert op_norm(Matrix(Field.REAL, np.diag([1.0, 0.9]))).op_norm == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("n", [2, 8])
def test_op_norm_slow_decay_is_not_reported_as_converged(n):
    # the second singular value is 1 - 1e-6, so increments shrink by ~4e-6 per step
    A = Matrix(Field.REAL, np.diag([1.0] + [1 - 1e-6] * (n - 1)))
    with pytest.raises(NonConvergenceError) as info:
        op_norm(A, max_iter=10000)
    assert info.value.iterations == 10000
    assert info.value.residual > 1e-10
    assert 1 - 1e-6 - 1e-12 <= info.value.best_estimate <= 1 + 1e-15


def test_op_norm_all_ones():
    assert op_norm(Matrix(Field.REAL, np.ones((3, 3)))).op_norm == pytest.approx(3.0, rel=1e-12)


def test_op_norm_zero_matrix():
    info = op_norm(Matrix(Field.REAL, np.zeros((4, 4))))
    assert info.op_norm == 0.0 and info.iterations == 0


def test_op_norm_orthogonal_from_qr():
    rng = np.random.default_rng(8)
    q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    assert np.allclose(q.T @ q, np.eye(8), atol=1e-12)
    assert op_norm(Matrix(Field.REAL, q)).op_norm == pytest.approx(1.0, abs=1e-8)


def test_op_norm_finds_top_singular_value_orthogonal_to_ones():
    # the all-ones start is orthogonal to the top singular vector here
    a = np.diag([1.0, 2.0])
    a = np.array([[1.0, -1.0], [1.0, 1.0]]) / np.sqrt(2) @ a @ np.array([[1.0, 1.0], [-1.0, 1.0]]) / np.sqrt(2)
    assert op_norm(Matrix(Field.REAL, a)).op_norm == pytest.approx(2.0, rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 8), seed=st.integers(0, 2 ** 32 - 1), complex_field=st.booleans())
def test_op_norm_matches_svd(n, seed, complex_field):
    A = gaussian(n, "complex" if complex_field else "real", seed)
    assert op_norm(A).op_norm == pytest.approx(np.linalg.norm(A.entries, 2), rel=1e-6)


def test_op_norm_is_homogeneous():
    A = gaussian(6, "complex", 3)
    base = op_norm(A).op_norm
    assert op_norm(A.scaled(-2.5)).op_norm == pytest.approx(2.5 * base, rel=1e-8)


def test_op_norm_non_convergence_carries_estimate():
    A = gaussian(6, "real", 1)
    with pytest.raises(NonConvergenceError) as info:
        op_norm(A, tol=1e-300, max_iter=3)
    assert info.value.iterations == 3
    assert info.value.best_estimate > 0
    assert info.value.exit_code == 1


def test_op_norm_rejects_bad_arguments():
    A = Matrix(Field.REAL, np.eye(2))
    with pytest.raises(ParameterError):
        op_norm(A, tol=0)
    with pytest.raises(ParameterError):
        op_norm(A, max_iter=0)


# ------------------ is_in_p ------------------

def test_identity_is_extremal():
    assert is_in_p(Matrix(Field.REAL, np.eye(4)), tol=1e-9)


def test_phased_permutation_is_extremal():
    rng = np.random.default_rng(11)
    p = np.eye(5)[rng.permutation(5)]
    a = p @ np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, 5)))
    assert is_in_p(Matrix(Field.COMPLEX, a))


def test_half_identity_is_not_extremal():
    assert not is_in_p(Matrix(Field.REAL, 0.5 * np.eye(3)), tol=1e-9)


def test_extra_entry_is_not_extremal():
    a = np.eye(3)
    a[0, 1] = 1e-3
    assert not is_in_p(Matrix(Field.REAL, a))


# ------------------ gen_ensemble ------------------

def test_scaled_identity():
    A = gen_ensemble("scaled_identity", 3, {"delta": 0.5}, seed=123)
    assert np.array_equal(A.entries, np.diag([0.5, 0.5, 0.5]))


def test_extremal_real_is_signed_permutation():
    A = gen_ensemble(EnsembleKind.EXTREMAL_P, 4, {"field": "real"}, seed=7)
    assert A.field is Field.REAL
    assert is_in_p(A)
    assert set(np.unique(A.entries)) <= {-1.0, 0.0, 1.0}


def test_haar_unitary():
    A = gen_ensemble(EnsembleKind.HAAR_UNITARY, 6, seed=1)
    u = A.entries
    assert A.field is Field.COMPLEX
    assert np.allclose(u.conj().T @ u, np.eye(6), atol=1e-12)
    assert op_norm(A).op_norm == pytest.approx(1.0, abs=1e-8)
    assert row_stats(A).h2 == pytest.approx(1.0, abs=1e-8)


def test_haar_orthogonal_is_orthogonal():
    q = gen_ensemble(EnsembleKind.HAAR_ORTHOGONAL, 8, seed=4).entries
    assert np.allclose(q.T @ q, np.eye(8), atol=1e-12)


def test_haar_field_is_fixed():
    with pytest.raises(ParameterError):
        gen_ensemble(EnsembleKind.HAAR_ORTHOGONAL, 4, {"field": "complex"}, seed=0)


def test_same_seed_same_matrix():
    a = gen_ensemble("circulant", 7, {"field": "complex"}, seed=42)
    b = gen_ensemble("circulant", 7, {"field": "complex"}, seed=42)
    c = gen_ensemble("circulant", 7, {"field": "complex"}, seed=43)
    assert a == b
    assert a != c


def test_circulant_structure():
    a = gen_ensemble("circulant", 5, seed=2).entries
    assert np.allclose(np.roll(a[:, 0], 1), a[:, 1])


def test_normalize_gives_unit_norm():
    for kind in EnsembleKind:
        A = gen_ensemble(kind, 6, {"normalize": True}, seed=5)
        assert op_norm(A).op_norm == pytest.approx(1.0, abs=1e-6), kind


def test_row_normalized_rows():
    A = gen_ensemble("row_normalized_random", 9, {"field": "complex"}, seed=9)
    assert np.allclose(row_stats(A).row_l2, 1.0, atol=1e-12)


def test_perturbed_permutation_limits():
    A = gen_ensemble("perturbed_permutation", 6, {"weight": 0.0}, seed=3)
    assert is_in_p(A)
    B = gen_ensemble("perturbed_permutation", 6, {"weight": 0.0, "permute": False}, seed=3)
    assert np.array_equal(B.entries, np.eye(6))


def test_scale_param():
    A = gen_ensemble("scaled_identity", 2, {"delta": 0.5, "scale": 2.0}, seed=0)
    assert np.array_equal(A.entries, np.eye(2))


@pytest.mark.parametrize("kind, n, params", [
    ("scaled_identity", 3, {"delta": 0.0}),
    ("scaled_identity", 3, {"delta": 1.5}),
    ("perturbed_permutation", 3, {"weight": 2.0}),
    ("circulant", 3, {"delta": 0.5}),
    ("circulant", 0, {}),
    ("no_such_kind", 3, {}),
    ("extremal_p", 3, {"field": "quaternion"}),
    ("scaled_identity", 3, {"delta": "abc"}),
    ("scaled_identity", 3, {"delta": True}),
    ("perturbed_permutation", 3, {"weight": [0.1]}),
    ("circulant", 3, {"scale": "x"}),
    ("circulant", 3, {"scale": None}),
])
def test_invalid_params(kind, n, params):
    with pytest.raises(ParameterError):
        gen_ensemble(kind, n, params, seed=0)


def test_negative_seed_rejected():
    with pytest.raises(ParameterError):
        gen_ensemble("circulant", 3, seed=-1)


def test_op_norm_of_extremal_is_one():
    for seed in range(20):
        A = gen_ensemble("extremal_p", 2 + seed % 9, {"field": "complex"}, seed=seed)
        assert math.isclose(op_norm(A).op_norm, 1.0, abs_tol=1e-8)


# ------------------ invariances ------------------

@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2 ** 32 - 1), complex_field=st.booleans())
def test_op_norm_unchanged_by_extremal_factor(n, seed, complex_field):
    field = "complex" if complex_field else "real"
    A = gaussian(n, field, seed)
    P = gen_ensemble("extremal_p", n, {"field": field}, seed=seed)
    norm = op_norm(A).op_norm
    assert op_norm(Matrix(A.field, A.entries @ P.entries)).op_norm == pytest.approx(norm, rel=1e-8)
    assert op_norm(Matrix(A.field, P.entries @ A.entries)).op_norm == pytest.approx(norm, rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2 ** 32 - 1), complex_field=st.booleans())
def test_extremal_rows_have_unit_hinf(n, seed, complex_field):
    P = gen_ensemble("extremal_p", n, {"field": "complex" if complex_field else "real"}, seed=seed)
    s = row_stats(P)
    assert s.hinf == pytest.approx(1.0, abs=1e-12)
    assert s.h2 == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 10), seed=st.integers(0, 2 ** 32 - 1),
       alpha=st.one_of(st.floats(-4, 4), st.complex_numbers(max_magnitude=4)).filter(lambda a: abs(a) > 1e-3))
def test_row_parameters_are_homogeneous(n, seed, alpha):
    A = gaussian(n, "real", seed)
    base, scaled = row_stats(A), row_stats(A.scaled(alpha))
    assert scaled.h2 == pytest.approx(abs(alpha) * base.h2, rel=1e-12)
    assert scaled.hinf == pytest.approx(abs(alpha) * base.hinf, rel=1e-12)
