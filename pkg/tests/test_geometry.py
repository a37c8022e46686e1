import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from soundranging.exceptions import InvalidInstance, NotOnSphere, PivotTooSmall
from soundranging.geometry import (
    SrpInstance,
    build_frame,
    forward_substitute,
    gram_schmidt,
    is_normalized,
    normalize,
)


def test_normalize_subtracts_anchor():
    inst = SrpInstance([[1.0, 0.0], [0.0, 1.0]], [2.0, 3.0])
    normed, rec = normalize(inst)
    np.testing.assert_array_equal(normed.sensors, [[0.0, 0.0], [-1.0, 1.0]])
    np.testing.assert_array_equal(normed.times, [0.0, 1.0])
    s, t = rec.to_original(np.zeros(2), 0.0)
    np.testing.assert_array_equal(s, [1.0, 0.0])
    assert t == 2.0


def test_normalize_identity_on_normalized_instance():
    inst = SrpInstance([[0.0, 0.0], [1.0, 2.0]], [0.0, 1.5])
    normed, rec = normalize(inst)
    assert rec.is_identity
    np.testing.assert_array_equal(normed.sensors, inst.sensors)


def test_normalize_ellipsoid_offsets():
    r = np.sqrt(2.0)
    inst = SrpInstance([[-r, 0, 0], [r, 0, 0], [0, 1, 0]], [-1.0, 1.0, 0.0])
    normed, _ = normalize(inst)
    np.testing.assert_allclose(normed.sensor(1), [2 * r, 0, 0])


def test_normalize_other_anchor_reorders():
    inst = SrpInstance([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]], [1.0, 2.0, 3.0])
    normed, rec = normalize(inst, anchor=2)
    assert is_normalized(normed)
    np.testing.assert_array_equal(rec.order, [2, 0, 1])
    np.testing.assert_array_equal(normed.sensor(1), [-1.0, -2.0])


def test_normalize_bad_anchor():
    inst = SrpInstance([[1.0, 0.0]], [0.0])
    with pytest.raises(InvalidInstance):
        normalize(inst, anchor=3)


def test_instance_rejects_nan_and_length_mismatch():
    with pytest.raises(InvalidInstance):
        SrpInstance([[np.nan, 0.0]], [0.0])
    with pytest.raises(InvalidInstance):
        SrpInstance([[1.0, 0.0], [0.0, 1.0]], [0.0])
    with pytest.raises(InvalidInstance):
        SrpInstance([[1.0]], [0.0], geometry="torus")


def test_sphere_instance_needs_unit_sensors():
    with pytest.raises(NotOnSphere):
        SrpInstance([[1.0, 1.0]], [0.0], geometry="sphere")


def test_instance_is_immutable():
    inst = SrpInstance([[1.0, 0.0]], [0.0])
    with pytest.raises(ValueError):
        inst.sensors[0, 0] = 5.0


def test_orthonormal_rows_give_identity_frame():
    f = gram_schmidt(np.eye(4))
    np.testing.assert_array_equal(f.dense_a(), np.eye(4))
    np.testing.assert_array_equal(f.basis_matrix(), np.eye(4))


def test_two_by_two_hand_frame():
    for method in ("householder", "mgs"):
        f = gram_schmidt([[1.0, 0.0], [1.0, 1.0]], method=method)
        np.testing.assert_allclose(f.dense_a(), [[1.0, 0.0], [1.0, 1.0]], atol=1e-15)
        np.testing.assert_allclose(f.pivots, [1.0, 1.0])


def test_two_solutions_sensors_give_diagonal_frame():
    k = np.arange(1, 9)
    X = sp.diags(1.0 / k).tocsr()
    f = gram_schmidt(X)
    assert f.is_standard
    np.testing.assert_allclose(f.dense_a(), np.diag(1.0 / k))


def test_dependent_sensors_rejected():
    with pytest.raises(PivotTooSmall) as err:
        gram_schmidt([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]], method="householder")
    assert err.value.index == 1


def test_frame_invariants_random():
    rng = np.random.default_rng(3)
    for dim in (2, 5, 16):
        X = rng.normal(size=(dim, dim))
        f = gram_schmidt(X)
        a = f.dense_a()
        assert np.max(np.abs(np.triu(a, 1))) == 0.0
        assert f.pivots.min() > 0
        B = f.basis_matrix()
        assert np.abs(B @ B.T - np.eye(dim)).max() <= 1e-12
        np.testing.assert_allclose(f.reconstruct(), X, atol=1e-12)
        np.testing.assert_allclose(np.array([f.coordinates(x) for x in X]), a, atol=1e-12)


def test_mgs_matches_householder():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(6, 9))
    a1 = gram_schmidt(X, method="householder").dense_a()
    a2 = gram_schmidt(X, method="mgs").dense_a()
    np.testing.assert_allclose(a1, a2, atol=1e-12)


def test_surplus_rows_are_expressed_in_frame():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(5, 3))
    f = gram_schmidt(X)
    assert f.size == 3
    np.testing.assert_array_equal(f.surplus_rows, [3, 4])
    np.testing.assert_allclose(f.surplus @ f.basis_matrix(), X[3:], atol=1e-12)


def test_structured_sparse_frame_roundtrip():
    X = sp.csr_matrix(np.array([[0.0, 2.0, 0.0], [1.0, 3.0, 0.0], [0.0, -1.0, -4.0]]))
    f = gram_schmidt(X)
    assert f.is_standard
    np.testing.assert_allclose(f.reconstruct().toarray(), X.toarray())
    assert (f.pivots > 0).all()


def test_build_frame_requires_normalized():
    inst = SrpInstance([[1.0, 0.0], [0.0, 1.0]], [0.0, 1.0])
    with pytest.raises(InvalidInstance):
        build_frame(inst)


def test_forward_substitute_examples():
    f = gram_schmidt(np.eye(3))
    np.testing.assert_array_equal(forward_substitute(f, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])
    f = gram_schmidt([[2.0, 0.0], [1.0, 1.0]], method="householder")
    np.testing.assert_allclose(forward_substitute(f, [2.0, 2.0]), [1.0, 1.0])
    f = gram_schmidt(sp.diags([1.0, 0.5, 1.0 / 3.0]).tocsr())
    b = np.array([0.3, -0.7, 1.1])
    np.testing.assert_allclose(forward_substitute(f, b), [b[0], 2 * b[1], 3 * b[2]], rtol=2e-16)


def test_forward_substitute_length_mismatch():
    f = gram_schmidt(np.eye(2))
    with pytest.raises(InvalidInstance):
        forward_substitute(f, [1.0, 2.0, 3.0])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_forward_substitute_residual(dim, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(dim, dim)) + 3 * np.eye(dim)
    f = gram_schmidt(X, method="householder")
    rhs = rng.normal(size=dim)
    x = forward_substitute(f, rhs)
    a = f.dense_a()
    bound = 1e-11 * (1 + np.abs(rhs).max() + (np.abs(a) @ np.abs(x)).max())
    assert np.abs(a @ x - rhs).max() <= bound
