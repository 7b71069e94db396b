"""Tests for sparse forms, kernels and isotropy classification."""

from itertools import combinations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fieldtriple_core.errors import DimensionMismatch, RankDeficiency
from fieldtriple_core.exterior import (
    KForm,
    Subspace,
    classify,
    derivation,
    distance,
    evaluate,
    flat_kernel,
    interior,
    l_orthogonal,
    numerical_rank,
    pullback,
    quotient,
    wedge,
    wedge_all,
)


def symplectic4() -> KForm:
    """dq0 ^ dp0 + dq1 ^ dp1 with coordinates (q0, q1, p0, p1)."""
    return KForm.basis(4, 0, 2) + KForm.basis(4, 1, 3)


class TestKForm:
    def test_keys_must_be_increasing(self):
        with pytest.raises(DimensionMismatch):
            KForm(3, 2, {(1, 0): 1.0})

    def test_key_out_of_range(self):
        with pytest.raises(DimensionMismatch):
            KForm(2, 1, {(2,): 1.0})

    def test_zero_coefficients_dropped(self):
        form = KForm(3, 1, {(0,): 0.0, (1,): 2.0})
        assert dict(form.coeffs) == {(1,): 2.0}

    def test_basis_sorts_with_sign(self):
        assert KForm.basis(3, 1, 0).coefficient(0, 1) == -1.0
        assert KForm.basis(3, 0, 0).coeffs == {}

    def test_scalar_multiplication_both_sides(self):
        form = KForm.basis(3, 0, 2)
        assert distance(2.0 * form, form * 2.0) == 0.0
        assert (np.float64(3.0) * form).coefficient(0, 2) == 3.0


class TestWedge:
    def test_one_forms_anticommute(self):
        a, b = KForm.basis(3, 0), KForm.basis(3, 1)
        assert distance(wedge(a, b), -wedge(b, a)) == 0.0

    def test_symplectic_square(self):
        omega = KForm.basis(4, 0, 1) + KForm.basis(4, 2, 3)
        assert wedge(omega, omega).coefficient(0, 1, 2, 3) == 2.0

    def test_degree_overflow_is_zero(self):
        assert wedge(KForm.basis(2, 0, 1), KForm.basis(2, 0)).coeffs == {}

    def test_wedge_all_matches_basis(self):
        forms = [KForm.basis(4, i) for i in (2, 0, 3)]
        assert distance(wedge_all(forms), KForm.basis(4, 2, 0, 3)) == 0.0

    def test_ambient_mismatch(self):
        with pytest.raises(DimensionMismatch):
            wedge(KForm.basis(2, 0), KForm.basis(3, 0))


class TestEvaluation:
    def test_evaluate_on_frame(self):
        eye = np.eye(3)
        form = KForm.basis(3, 0, 1)
        assert evaluate(form, [eye[0], eye[1]]) == 1.0
        assert evaluate(form, [eye[1], eye[0]]) == -1.0

    def test_interior_first_slot(self):
        form = KForm.basis(3, 0, 1)
        assert distance(interior(np.eye(3)[0], form), KForm.basis(3, 1)) == 0.0
        assert distance(interior(np.eye(3)[1], form), -KForm.basis(3, 0)) == 0.0

    def test_interior_matches_evaluate(self, rng):
        form = KForm(4, 3, {(0, 1, 2): 1.5, (1, 2, 3): -0.5, (0, 2, 3): 2.0})
        v, w1, w2 = rng.normal(size=(3, 4))
        assert evaluate(interior(v, form), [w1, w2]) == pytest.approx(
            evaluate(form, [v, w1, w2])
        )

    def test_wrong_vector_count(self):
        with pytest.raises(DimensionMismatch):
            evaluate(KForm.basis(3, 0, 1), [np.eye(3)[0]])


class TestPullback:
    def test_area_form_scales_by_determinant(self, rng):
        jac = rng.normal(size=(2, 2))
        pulled = pullback(jac, KForm.basis(2, 0, 1))
        assert pulled.coefficient(0, 1) == pytest.approx(np.linalg.det(jac))

    def test_pullback_evaluates_on_pushed_vectors(self, rng):
        jac = rng.normal(size=(4, 3))
        form = KForm(4, 2, {(0, 1): 1.0, (1, 3): -2.0, (2, 3): 0.5})
        v, w = rng.normal(size=(2, 3))
        assert evaluate(pullback(jac, form), [v, w]) == pytest.approx(
            evaluate(form, [jac @ v, jac @ w])
        )

    def test_derivation_by_identity_multiplies_by_degree(self):
        form = KForm.basis(4, 0, 1, 3)
        assert distance(derivation(np.eye(4), form), 3 * form) == 0.0

    def test_derivation_shape_check(self):
        with pytest.raises(DimensionMismatch):
            derivation(np.eye(3), KForm.basis(4, 0))


class TestSubspaces:
    def test_numerical_rank(self):
        mat = np.array([[1.0, 0.0], [0.0, 1e-12]])
        assert numerical_rank(mat) == 1
        assert numerical_rank(np.zeros((2, 2))) == 0

    def test_dependent_generators_rejected(self):
        with pytest.raises(RankDeficiency):
            Subspace.from_generators([[1.0, 0.0], [2.0, 0.0]], 2)

    def test_span_drops_dependent_vectors(self):
        assert Subspace.span([[1.0, 1.0], [2.0, 2.0]], 2).dim == 1

    def test_containment(self):
        plane = Subspace.span(np.eye(3)[:2], 3)
        line = Subspace.span([[1.0, -1.0, 0.0]], 3)
        assert plane.contains(line)
        assert not line.contains(plane)
        assert plane.intersection_dim(Subspace.span([[0.0, 1.0, 1.0]], 3)) == 0

    def test_flat_kernel(self):
        assert flat_kernel(symplectic4()).dim == 0
        kernel = flat_kernel(KForm.basis(3, 0, 1))
        assert kernel.same_as(Subspace.span([[0.0, 0.0, 1.0]], 3))


class TestClassification:
    def test_lagrangian_plane(self):
        W = Subspace.span(np.eye(4)[:2], 4)
        flags = classify(W, symplectic4(), l=1)
        assert flags.l_lagrangian

    def test_isotropic_line_is_not_lagrangian(self):
        W = Subspace.span(np.eye(4)[:1], 4)
        flags = classify(W, symplectic4(), l=1)
        assert flags.l_isotropic
        assert not flags.l_coisotropic

    def test_symplectic_plane_not_isotropic(self):
        W = Subspace.span(np.eye(4)[[0, 2]], 4)
        flags = classify(W, symplectic4(), l=1)
        assert not flags.l_isotropic
        assert flags.multisymplectic

    def test_l_orthogonal_of_lagrangian_is_itself(self):
        W = Subspace.span(np.eye(4)[:2], 4)
        assert l_orthogonal(W, symplectic4(), 1).same_as(W)

    def test_l_out_of_range(self):
        with pytest.raises(DimensionMismatch):
            l_orthogonal(Subspace.span(np.eye(4)[:1], 4), symplectic4(), 2)

    def test_premultisymplectic_quotient(self):
        # symplectic on the first four coordinates, degenerate along e4
        omega = KForm.basis(5, 0, 2) + KForm.basis(5, 1, 3)
        kernel = flat_kernel(omega)
        assert kernel.dim == 1
        q = quotient(omega, kernel)
        assert len(q.complement) == 4
        assert flat_kernel(q.form).dim == 0
        W = Subspace.span(np.eye(5)[[0, 1, 4]], 5)
        assert classify(W, omega, l=1, premultisymplectic=True).l_lagrangian
        short = Subspace.span(np.eye(5)[[0, 4]], 5)
        flags = classify(short, omega, l=1, premultisymplectic=True)
        assert flags.l_isotropic and not flags.l_lagrangian

    def test_quotient_projection_kills_kernel(self):
        omega = KForm.basis(5, 0, 2) + KForm.basis(5, 1, 3)
        q = quotient(omega, flat_kernel(omega))
        assert_allclose(q.projection @ np.eye(5)[4], 0.0, atol=1e-12)


def random_form(
    rng: np.random.Generator, ambient_dim: int, degree: int, density: float = 0.6
) -> KForm:
    coeffs = {
        key: float(rng.normal())
        for key in combinations(range(ambient_dim), degree)
        if rng.uniform() < density
    }
    return KForm(ambient_dim, degree, coeffs)


class TestRandomForms:
    def test_evaluate_is_alternating(self, rng):
        for _ in range(50):
            n = int(rng.integers(3, 7))
            k = int(rng.integers(2, min(n, 4) + 1))
            form = random_form(rng, n, k)
            vectors = list(rng.normal(size=(k, n)))
            i, j = rng.choice(k, size=2, replace=False)
            swapped = list(vectors)
            swapped[i], swapped[j] = vectors[j], vectors[i]
            value = evaluate(form, vectors)
            assert evaluate(form, swapped) == pytest.approx(-value, abs=1e-12)
            repeated = list(vectors)
            repeated[i] = vectors[j]
            assert evaluate(form, repeated) == pytest.approx(0.0, abs=1e-10)

    def test_pullback_is_functorial(self, rng):
        for _ in range(50):
            n, m, p = (int(d) for d in rng.integers(2, 6, size=3))
            k = int(rng.integers(1, min(n, m, p) + 1))
            form = random_form(rng, n, k)
            outer = rng.normal(size=(n, m))
            inner = rng.normal(size=(m, p))
            composed = pullback(outer @ inner, form)
            stepwise = pullback(inner, pullback(outer, form))
            assert distance(composed, stepwise) <= 1e-9 * (1.0 + composed.max_abs())

    def test_l_orthogonal_grows_with_l(self, rng):
        for _ in range(30):
            n = int(rng.integers(4, 7))
            form = random_form(rng, n, 3)
            W = Subspace.span(rng.normal(size=(int(rng.integers(2, n)), n)), n)
            first = l_orthogonal(W, form, 1)
            second = l_orthogonal(W, form, 2)
            assert second.contains(first)

    def test_l_orthogonal_shrinks_as_subspace_grows(self, rng):
        for _ in range(30):
            n = int(rng.integers(3, 7))
            form = random_form(rng, n, 2)
            vectors = rng.normal(size=(n, n))
            small = Subspace.span(vectors[:1], n)
            large = Subspace.span(vectors[:2], n)
            assert l_orthogonal(small, form, 1).contains(l_orthogonal(large, form, 1))

    def test_quotient_of_degenerate_forms(self, rng):
        for _ in range(100):
            n = int(rng.integers(3, 9))
            q = int(rng.integers(2, n))
            k = int(rng.integers(2, min(q, 3) + 1))
            reduced = random_form(rng, q, k, density=1.0)
            omega = pullback(rng.normal(size=(q, n)), reduced)
            kernel = flat_kernel(omega)
            assert kernel.dim >= n - q
            down = quotient(omega, kernel)
            assert len(down.complement) == n - kernel.dim
            assert flat_kernel(down.form).dim == 0
            lifted = pullback(down.projection, down.form)
            assert distance(lifted, omega) <= 1e-8 * (1.0 + omega.max_abs())
            # a subspace containing the kernel classifies the same on both sides
            l = int(rng.integers(1, k))
            extra = rng.normal(size=(int(rng.integers(l, n - kernel.dim + 1)), n))
            W = Subspace.span(np.vstack([kernel.basis, extra]), n)
            upstairs = classify(W, omega, l)
            downstairs = classify(W, omega, l, premultisymplectic=True)
            assert down.push(W).dim == W.dim - kernel.dim
            assert upstairs.l_isotropic == downstairs.l_isotropic
            assert upstairs.l_coisotropic == downstairs.l_coisotropic
            assert upstairs.l_lagrangian == downstairs.l_lagrangian
