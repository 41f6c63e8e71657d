import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from slag_glue.exterior_algebra import (
    KForm,
    as_vec6,
    basis_vector,
    calibration_identity_check,
    evaluate,
    holomorphic_three_form,
    one_form,
    standard_complex_structure,
    standard_symplectic_form,
    wedge,
)

finite = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)
vec6 = arrays(np.float64, 6, elements=finite)


def e(i):
    return basis_vector(i)


def xi_oracle(frame):
    """xi = dw1 ^ dw2 ^ dw3 evaluated as a complex determinant of dw_j(v_i)."""
    m = np.array([[v[0] + 1j * v[4], v[1] + 1j * v[5], v[2] + 1j * v[3]] for v in frame])
    return np.linalg.det(m)


# ---------------------------------------------------------------- forms


def test_symplectic_form_coefficients():
    w = standard_symplectic_form()
    assert w.degree == 2
    assert dict(w.coeffs) == {(1, 5): 1.0, (2, 6): 1.0, (3, 4): 1.0}


def test_holomorphic_form_coefficients():
    re, im = holomorphic_three_form()
    assert dict(re.coeffs) == {(1, 2, 3): 1.0, (1, 4, 6): 1.0, (2, 4, 5): -1.0, (3, 5, 6): -1.0}
    assert dict(im.coeffs) == {(1, 2, 4): 1.0, (1, 3, 6): -1.0, (2, 3, 5): 1.0, (4, 5, 6): -1.0}


def test_symplectic_on_basis_pairs():
    w = standard_symplectic_form()
    assert evaluate(w, [e(1), e(5)]) == 1.0
    assert evaluate(w, [e(5), e(1)]) == -1.0
    assert evaluate(w, [e(3), e(4)]) == 1.0
    assert evaluate(w, [e(1), e(2)]) == 0.0


def test_holomorphic_on_basis_triples():
    re, im = holomorphic_three_form()
    assert evaluate(re, [e(1), e(2), e(3)]) == 1.0
    assert evaluate(im, [e(1), e(2), e(3)]) == 0.0
    assert evaluate(im, [e(1), e(2), e(4)]) == 1.0


def test_holomorphic_matches_complex_determinant():
    re, im = holomorphic_three_form()
    rng = np.random.default_rng(1)
    for _ in range(200):
        frame = list(rng.standard_normal((3, 6)))
        z = xi_oracle(frame)
        assert abs(evaluate(re, frame) - z.real) <= 1e-12 * max(1.0, abs(z))
        assert abs(evaluate(im, frame) - z.imag) <= 1e-12 * max(1.0, abs(z))


def test_brute_force_expansion_over_real_and_imaginary_parts():
    """Sum over the eight choices of real or imaginary part in each factor."""
    factors = [(one_form(1), one_form(5)), (one_form(2), one_form(6)), (one_form(3), one_form(4))]
    re_sum, im_sum = KForm(3, {}), KForm(3, {})
    for choice in itertools.product((0, 1), repeat=3):
        term = wedge(wedge(factors[0][choice[0]], factors[1][choice[1]]), factors[2][choice[2]])
        phase = 1j ** sum(choice)
        if phase.imag == 0:
            re_sum = re_sum + term.scale(phase.real)
        else:
            im_sum = im_sum + term.scale(phase.imag)
    re, im = holomorphic_three_form()
    assert dict(re_sum.coeffs) == dict(re.coeffs)
    assert dict(im_sum.coeffs) == dict(im.coeffs)


def test_wedge_is_graded_commutative():
    a, b = one_form(1), one_form(4)
    assert dict(wedge(a, b).coeffs) == {(1, 4): 1.0}
    assert dict(wedge(b, a).coeffs) == {(1, 4): -1.0}
    assert wedge(a, a).coeffs == {}


def test_omega_cubed_is_six_times_signed_volume():
    w = standard_symplectic_form()
    # e15 ^ e26 ^ e34 reorders to e123456 with five transpositions
    assert wedge(wedge(w, w), w).top_coefficient() == -6.0


# ---------------------------------------------------------------- errors


def test_arity_mismatch_raises():
    with pytest.raises(ValueError):
        evaluate(standard_symplectic_form(), [e(1), e(2), e(3)])


def test_non_finite_vector_raises():
    with pytest.raises(ValueError):
        as_vec6([0, 0, np.nan, 0, 0, 0])
    with pytest.raises(ValueError):
        as_vec6([1.0, 2.0])


def test_bad_index_tuple_raises():
    with pytest.raises(ValueError):
        KForm(2, {(2, 1): 1.0})
    with pytest.raises(ValueError):
        KForm(2, {(1, 7): 1.0})


# ---------------------------------------------------------------- calibration


def test_calibration_identity_holds_for_standard_forms():
    w = standard_symplectic_form()
    re, im = holomorphic_three_form()
    assert calibration_identity_check(w, re, im) <= 1e-12


def test_calibration_identity_detects_scaled_omega():
    re, im = holomorphic_three_form()
    assert calibration_identity_check(standard_symplectic_form().scale(2.0), re, im) > 1.0


def test_calibration_identity_detects_swapped_coordinates():
    w = standard_symplectic_form()
    re, im = holomorphic_three_form(swap_56=True)
    assert calibration_identity_check(w, re, im) > 1.0


# ---------------------------------------------------------------- properties


@settings(max_examples=100, deadline=None)
@given(vec6, vec6, vec6, vec6, finite, finite)
def test_multilinear_in_each_slot(a, b, c, d, s, t):
    re, _ = holomorphic_three_form()
    lhs = evaluate(re, [s * a + t * b, c, d])
    rhs = s * evaluate(re, [a, c, d]) + t * evaluate(re, [b, c, d])
    scale = 1.0 + (abs(s) * np.linalg.norm(a) + abs(t) * np.linalg.norm(b)) * np.linalg.norm(c) * np.linalg.norm(d)
    assert abs(lhs - rhs) <= 1e-12 * scale


@settings(max_examples=100, deadline=None)
@given(vec6, vec6)
def test_repeated_vector_gives_exact_zero(a, b):
    w = standard_symplectic_form()
    re, im = holomorphic_three_form()
    assert evaluate(w, [a, a]) == 0.0
    assert evaluate(re, [a, b, a]) == 0.0
    assert evaluate(im, [a, a, b]) == 0.0
    assert evaluate(im, [b, a, a]) == 0.0


@settings(max_examples=100, deadline=None)
@given(vec6, vec6, vec6)
def test_alternating_under_transposition(a, b, c):
    re, _ = holomorphic_three_form()
    scale = 1.0 + np.linalg.norm(a) * np.linalg.norm(b) * np.linalg.norm(c)
    assert abs(evaluate(re, [a, b, c]) + evaluate(re, [b, a, c])) <= 1e-12 * scale


def test_complex_structure_squares_to_minus_identity():
    J = standard_complex_structure()
    assert np.array_equal(J.matrix @ J.matrix, -np.eye(6))
    assert np.array_equal(J.apply(e(1)), e(5))
    assert np.array_equal(J.apply(e(3)), e(4))


@settings(max_examples=100, deadline=None)
@given(vec6, vec6)
def test_omega_is_compatible_with_J(a, b):
    J = standard_complex_structure()
    w = standard_symplectic_form()
    scale = 1.0 + np.linalg.norm(a) * np.linalg.norm(b)
    assert abs(evaluate(w, [J.apply(a), J.apply(b)]) - evaluate(w, [a, b])) <= 1e-12 * scale
    # omega(v, J v) = |v|^2 > 0 for v != 0
    assert abs(evaluate(w, [a, J.apply(a)]) - a @ a) <= 1e-12 * (1.0 + a @ a)
