import numpy as np
import pytest

from jova.linalg import ShapeError, elementwise, make_rng, matmul, sample_standard_normal, spawn


def test_identity_product(rng):
    m = rng.normal(size=(2, 2))
    np.testing.assert_array_equal(matmul(np.eye(2), m), m)


def test_hand_product():
    np.testing.assert_array_equal(matmul(np.array([[1.0, 2], [3, 4]]), np.ones((2, 1))), [[3], [7]])


def test_dimension_mismatch_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        matmul(np.ones((2, 3)), np.ones((2, 2)))


def test_elementwise_identities(rng):
    m = rng.normal(size=(3, 4))
    np.testing.assert_array_equal(elementwise(m, np.zeros_like(m), "add"), m)
    np.testing.assert_array_equal(elementwise(m, np.ones_like(m), "mul"), m)
    np.testing.assert_array_equal(elementwise(np.array([[2.0, 3]]), np.array([[1.0, 1]]), "sub"), [[1, 2]])
    with pytest.raises(ShapeError):
        elementwise(m, np.ones((4, 3)), "add")


def test_associativity_and_distributivity(rng):
    for _ in range(20):
        a, b, c = (rng.normal(size=(5, 5)) for _ in range(3))
        np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), atol=1e-9)
        np.testing.assert_allclose(matmul(a + b, c), matmul(a, c) + matmul(b, c), atol=1e-9)


def test_standard_normal_moments():
    x = sample_standard_normal(make_rng(7), 1000, 1000)
    assert -0.01 <= x.mean() <= 0.01
    assert 0.99 <= x.var() <= 1.01


def test_same_seed_same_stream():
    a = sample_standard_normal(make_rng(3), 4, 5)
    b = sample_standard_normal(make_rng(3), 4, 5)
    assert a.tobytes() == b.tobytes()


def test_spawned_streams_are_stable_and_distinct():
    s1 = spawn(5, ["a", "b"])
    s2 = spawn(5, ["a", "b", "c"])
    assert s1["a"].random() == s2["a"].random()
    assert spawn(5, ["a", "b"])["a"].random() != spawn(5, ["a", "b"])["b"].random()


def test_rejects_empty_shape():
    with pytest.raises(ValueError):
        sample_standard_normal(make_rng(0), 0, 3)
