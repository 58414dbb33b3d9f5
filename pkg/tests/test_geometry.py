import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symlayer.errors import DegenerateInput, InvalidClassCount, PlaneMissesSum
from symlayer.geometry import (
    PlaneBasis,
    angle_between,
    build_symmetric_layout,
    gram_schmidt,
    layout_angles,
    project_onto_plane,
    random_basis,
    random_unit,
    rotate_in_plane,
    rotation_matrix,
    verify_lemma3,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.sampled_from([2, 3, 5, 8, 32])


def test_gram_schmidt_axes():
    b = gram_schmidt([2.0, 0.0, 0.0], [1.0, 3.0, 0.0])
    np.testing.assert_allclose(b.n1, [1, 0, 0])
    np.testing.assert_allclose(b.n2, [0, 1, 0])


def test_gram_schmidt_parallel_is_degenerate():
    with pytest.raises(DegenerateInput):
        gram_schmidt([1.0, 2.0, 3.0], [2.0, 4.0, 6.0])


@pytest.mark.parametrize("bad", [[0.0, 0.0], [1e-12, 0.0], [1e-9, 0.0]])
def test_gram_schmidt_rejects_short_first_vector(bad):
    with pytest.raises(DegenerateInput):
        gram_schmidt(bad, [0.0, 1.0])


def test_gram_schmidt_rejects_non_finite():
    with pytest.raises(ValueError):
        gram_schmidt([np.nan, 1.0], [0.0, 1.0])


@pytest.mark.parametrize(
    "v1, v2, n1, n2",
    [
        ([3, 0, 0, 0], [1, 2, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0]),
        ([1, 0], [1, 1], [1, 0], [0, 1]),
    ],
)
def test_gram_schmidt_examples(v1, v2, n1, n2):
    b = gram_schmidt(np.array(v1, float), np.array(v2, float))
    np.testing.assert_allclose(b.n1, n1, atol=1e-15)
    np.testing.assert_allclose(b.n2, n2, atol=1e-15)


def test_gram_schmidt_collinear_example():
    with pytest.raises(DegenerateInput):
        gram_schmidt([1.0, 1.0, 0.0], [2.0, 2.0, 0.0])


def test_gram_schmidt_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        gram_schmidt([1.0, 0.0], [0.0, 1.0, 0.0])


@settings(max_examples=200, deadline=None)
@given(seeds, dims)
def test_gram_schmidt_orthonormal(seed, d):
    rng = np.random.default_rng(seed)
    v1, v2 = rng.standard_normal((2, d))
    b = gram_schmidt(v1, v2)
    np.testing.assert_allclose(b.matrix @ b.matrix.T, np.eye(2), atol=1e-13)
    # n1 points along v1 and the span is preserved
    np.testing.assert_allclose(b.n1, v1 / np.linalg.norm(v1), atol=1e-14)
    np.testing.assert_allclose(project_onto_plane(v2, b), v2, atol=1e-12 * np.linalg.norm(v2))


def test_plane_basis_validates():
    with pytest.raises(ValueError):
        PlaneBasis(np.array([1.0, 0.0]), np.array([1.0, 0.0]))


@pytest.mark.parametrize(
    "d, theta, expected",
    [
        (3, np.pi / 2, [0, 1, 0]),
        (3, np.pi, [-1, 0, 0]),
        (4, np.pi / 3, [0.5, np.sqrt(3) / 2, 0, 0]),
    ],
)
def test_rotate_in_plane_examples(d, theta, expected):
    np.testing.assert_allclose(rotate_in_plane(PlaneBasis.axes(d), theta), expected, atol=1e-15)


def test_rotate_by_zero_is_n1():
    b = random_basis(np.random.default_rng(3), 6)
    np.testing.assert_allclose(rotate_in_plane(b, 0.0), b.n1, atol=1e-15, rtol=0)


@settings(max_examples=100, deadline=None)
@given(seeds, dims, st.floats(-7, 7), st.floats(-7, 7))
def test_rotation_composition(seed, d, t1, t2):
    b = random_basis(np.random.default_rng(seed), d)
    np.testing.assert_allclose(rotate_in_plane(b.rotated(t1), t2), rotate_in_plane(b, t1 + t2), atol=1e-12)


def test_projection_examples():
    b = PlaneBasis.axes(3)
    np.testing.assert_allclose(project_onto_plane([1.0, 2.0, 3.0], b), [1, 2, 0])
    np.testing.assert_allclose(project_onto_plane([0.0, 0.0, 5.0], b), [0, 0, 0])
    np.testing.assert_allclose(project_onto_plane([0.3, -0.2, 0.0], b), [0.3, -0.2, 0], atol=1e-15, rtol=0)


@settings(max_examples=200, deadline=None)
@given(seeds, dims)
def test_projection_contraction_and_idempotence(seed, d):
    rng = np.random.default_rng(seed)
    b = random_basis(rng, d)
    v = rng.standard_normal(d)
    p = project_onto_plane(v, b)
    assert np.linalg.norm(p) <= np.linalg.norm(v) * (1 + 1e-15)
    np.testing.assert_allclose(project_onto_plane(p, b), p, atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(seeds, dims, st.floats(-10, 10))
def test_rotation_matrix_agrees_with_direct_rotation(seed, d, theta):
    rng = np.random.default_rng(seed)
    b = random_basis(rng, d)
    R = rotation_matrix(b, theta)
    np.testing.assert_allclose(R @ b.n1, rotate_in_plane(b, theta), atol=1e-13)
    # orthogonal and the identity off the plane
    np.testing.assert_allclose(R @ R.T, np.eye(d), atol=1e-13)
    v = rng.standard_normal(d)
    off = v - project_onto_plane(v, b)
    np.testing.assert_allclose(R @ off, off, atol=1e-12)


def test_layout_angles():
    np.testing.assert_allclose(layout_angles(4), [0, np.pi / 2, np.pi, 3 * np.pi / 2])


def test_square_layout_in_the_plane():
    lay = build_symmetric_layout(PlaneBasis.axes(2), 4)
    np.testing.assert_allclose(lay.weights, [[1, 0], [0, 1], [-1, 0], [0, -1]], atol=1e-15)


@pytest.mark.parametrize("n", [-1, 0, 1, 2])
def test_layout_needs_three_classes(n):
    with pytest.raises(InvalidClassCount):
        build_symmetric_layout(PlaneBasis.axes(2), n)


@settings(max_examples=150, deadline=None)
@given(seeds, dims, st.integers(3, 64))
def test_layout_invariants(seed, d, n):
    rng = np.random.default_rng(seed)
    lay = build_symmetric_layout(random_basis(rng, d), n)
    assert lay.check_invariants(), lay.invariant_residuals()
    assert np.linalg.norm(lay.weights.sum(axis=0)) <= 1e-10
    assert not lay.weights.flags.writeable


def test_heptagon_adjacent_angles_arccos_oracle():
    lay = build_symmetric_layout(PlaneBasis.axes(5), 7)
    w = lay.weights
    dots = np.sum(w * np.roll(w, -1, axis=0), axis=1)
    np.testing.assert_allclose(np.arccos(np.clip(dots, -1, 1)), 2 * np.pi / 7, atol=1e-10)


def test_sum_cancels_over_many_bases():
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for d in (2, 3, 8, 128):
        for _ in range(100):
            b = random_basis(rng, d)
            for n in range(3, 65):
                worst = max(worst, np.linalg.norm(build_symmetric_layout(b, n).weights.sum(axis=0)))
    assert worst <= 1e-10


def test_layout_detects_broken_spacing():
    lay = build_symmetric_layout(PlaneBasis.axes(2), 5)
    w = lay.weights.copy()
    w[1] = rotate_in_plane(lay.basis, 1.3)
    bad = type(lay)(w, lay.basis)
    assert not bad.check_invariants()


def test_angle_between_small_angles():
    # arccos loses all digits here; atan2 keeps them
    a = np.array([1.0, 0.0])
    b = np.array([1.0, 1e-9])
    assert angle_between(a, b) == pytest.approx(1e-9, rel=1e-12)


def test_lemma3_plane_through_sum_and_normal():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, 1.0, 0.0])
    rep = verify_lemma3(a, b, gram_schmidt(a + b, [0.0, 0.0, 1.0]))
    assert rep.passes
    # both project to (0.5, 0.5, 0), parallel to the sum
    assert rep.norm_a_par == pytest.approx(np.sqrt(0.5), abs=1e-15)
    assert rep.norm_b_par == pytest.approx(np.sqrt(0.5), abs=1e-15)
    assert rep.angle_a_s == pytest.approx(0.0, abs=1e-15)
    assert rep.angle_b_s == pytest.approx(0.0, abs=1e-15)


def test_lemma3_vectors_already_in_plane():
    a = np.array([np.cos(0.2), np.sin(0.2), 0.0])
    b = np.array([np.cos(1.4), np.sin(1.4), 0.0])
    rep = verify_lemma3(a, b, PlaneBasis.axes(3))
    # rhombus with unit sides: each side makes half the opening angle with the diagonal
    assert rep.norm_a_par == pytest.approx(1.0, abs=1e-15)
    assert rep.angle_a_s == pytest.approx(0.6, abs=1e-14)
    assert rep.angle_b_s == pytest.approx(0.6, abs=1e-14)
    assert rep.passes


def test_lemma3_coincident_vectors():
    a = random_unit(np.random.default_rng(5), 4)
    rep = verify_lemma3(a, a, gram_schmidt(a, np.ones(4)))
    assert rep.residual == 0.0 and rep.passes


def test_lemma3_thousand_pairs_orthogonal_completion():
    rng = np.random.default_rng(77)
    for d in (3, 8, 32):
        for _ in range(1000):
            a, b = random_unit(rng, d), random_unit(rng, d)
            s = a + b
            r = rng.standard_normal(d)
            r -= (r @ s) / (s @ s) * s
            basis = PlaneBasis(s / np.linalg.norm(s), r / np.linalg.norm(r))
            assert verify_lemma3(a, b, basis).passes


@settings(max_examples=200, deadline=None)
@given(seeds, dims)
def test_lemma3_random_planes_through_sum(seed, d):
    rng = np.random.default_rng(seed)
    a, b = random_unit(rng, d), random_unit(rng, d)
    rep = verify_lemma3(a, b, gram_schmidt(a + b, rng.standard_normal(d)))
    assert rep.passes
    assert rep.residual <= 1e-9


def test_lemma3_plane_missing_sum():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, 1.0, 0.0])
    with pytest.raises(PlaneMissesSum):
        verify_lemma3(a, b, PlaneBasis.axes(3, 0, 2))


def test_lemma3_opposite_vectors():
    a = np.array([1.0, 0.0])
    with pytest.raises(DegenerateInput):
        verify_lemma3(a, -a, PlaneBasis.axes(2))
