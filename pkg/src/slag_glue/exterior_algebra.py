"""Constant-coefficient alternating forms on R^6 = C^3.

Coordinates are ordered x1..x6 = (x, y, kappa, zeta, u, v); the complex
coordinates are w1 = x + i u, w2 = y + i v, w3 = kappa + i zeta.  Forms are
stored on strictly increasing index tuples (1-based) and evaluated on frames
through determinants of minors, so antisymmetry never has to be imposed by
hand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

DIM = 6


def basis_vector(i: int) -> np.ndarray:
    """Unit vector e_i (1-based)."""
    if not 1 <= i <= DIM:
        raise ValueError(f"basis index must be in 1..{DIM}, got {i}")
    e = np.zeros(DIM)
    e[i - 1] = 1.0
    return e


def as_vec6(v: Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate a vector (or a stack of vectors) of length 6 with finite entries."""
    a = np.asarray(v, dtype=float)
    if a.shape[-1:] != (DIM,):
        raise ValueError(f"expected trailing dimension {DIM}, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("vector has non-finite entries")
    return a


def _permutation_sign(seq: Sequence[int]) -> int:
    inversions = sum(1 for a, b in combinations(seq, 2) if a > b)
    return -1 if inversions % 2 else 1


@dataclass(frozen=True)
class KForm:
    """Alternating k-form with real coefficients on increasing index tuples."""

    degree: int
    coeffs: Mapping[tuple[int, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.degree <= DIM:
            raise ValueError(f"degree must be in 0..{DIM}, got {self.degree}")
        clean = {}
        for idx, c in self.coeffs.items():
            idx = tuple(int(i) for i in idx)
            if len(idx) != self.degree:
                raise ValueError(f"index tuple {idx} does not match degree {self.degree}")
            if any(i < 1 or i > DIM for i in idx):
                raise ValueError(f"index tuple {idx} out of range 1..{DIM}")
            if any(a >= b for a, b in zip(idx, idx[1:])):
                raise ValueError(f"index tuple {idx} is not strictly increasing")
            if not math.isfinite(c):
                raise ValueError(f"non-finite coefficient on {idx}")
            if c != 0.0:
                clean[idx] = float(c)
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    def __add__(self, other: "KForm") -> "KForm":
        if other.degree != self.degree:
            raise ValueError("cannot add forms of different degree")
        out = dict(self.coeffs)
        for idx, c in other.coeffs.items():
            out[idx] = out.get(idx, 0.0) + c
        return KForm(self.degree, out)

    def __sub__(self, other: "KForm") -> "KForm":
        return self + other.scale(-1.0)

    def scale(self, a: float) -> "KForm":
        return KForm(self.degree, {idx: a * c for idx, c in self.coeffs.items()})

    def top_coefficient(self) -> float:
        """Coefficient of e^1 ^ ... ^ e^6 for a top-degree form."""
        if self.degree != DIM:
            raise ValueError("top_coefficient needs a form of degree 6")
        return self.coeffs.get(tuple(range(1, DIM + 1)), 0.0)


def one_form(i: int) -> KForm:
    """Dual basis covector omega_i."""
    basis_vector(i)
    return KForm(1, {(i,): 1.0})


def wedge(a: KForm, b: KForm) -> KForm:
    """Exterior product of two real forms."""
    out: dict[tuple[int, ...], float] = {}
    for ia, ca in a.coeffs.items():
        for ib, cb in b.coeffs.items():
            if set(ia) & set(ib):
                continue
            joined = ia + ib
            key = tuple(sorted(joined))
            out[key] = out.get(key, 0.0) + _permutation_sign(joined) * ca * cb
    return KForm(a.degree + b.degree, out)


def complex_wedge(a: tuple[KForm, KForm], b: tuple[KForm, KForm]) -> tuple[KForm, KForm]:
    """Exterior product of complex forms given as (real part, imaginary part)."""
    ar, ai = a
    br, bi = b
    return wedge(ar, br) - wedge(ai, bi), wedge(ar, bi) + wedge(ai, br)


def evaluate(form: KForm, frame: Sequence[np.ndarray]) -> np.ndarray | float:
    """Evaluate ``form`` on ``frame``, a list of ``degree`` vectors.

    Each vector may carry leading batch dimensions (shape ``(..., 6)``); the
    result then has the batch shape.
    """
    if len(frame) != form.degree:
        raise ValueError(f"frame has {len(frame)} vectors, form has degree {form.degree}")
    vecs = [as_vec6(v) for v in frame]
    mat = np.stack(np.broadcast_arrays(*vecs), axis=-1)  # (..., 6, k)
    total = np.zeros(mat.shape[:-2])
    for idx, c in form.coeffs.items():
        rows = [i - 1 for i in idx]
        total = total + c * _det(mat[..., rows, :])
    return float(total) if total.ndim == 0 else total


def _det(m: np.ndarray) -> np.ndarray:
    """Cofactor determinant for k <= 3; repeated columns give exactly 0."""
    k = m.shape[-1]
    if k == 0:
        return np.ones(m.shape[:-2])
    if k == 1:
        return m[..., 0, 0]
    if k == 2:
        return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    if k == 3:
        a, b, c = m[..., 0, 0], m[..., 0, 1], m[..., 0, 2]
        d, e, f = m[..., 1, 0], m[..., 1, 1], m[..., 1, 2]
        g, h, i = m[..., 2, 0], m[..., 2, 1], m[..., 2, 2]
        return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
    return np.linalg.det(m)


def standard_symplectic_form() -> KForm:
    """omega = w1^w5 + w2^w6 + w3^w4 in the adapted basis."""
    return KForm(2, {(1, 5): 1.0, (2, 6): 1.0, (3, 4): 1.0})


def _holomorphic_factors(swap_56: bool = False) -> list[tuple[KForm, KForm]]:
    u, v = (6, 5) if swap_56 else (5, 6)
    return [(one_form(1), one_form(u)), (one_form(2), one_form(v)), (one_form(3), one_form(4))]


def holomorphic_three_form(swap_56: bool = False) -> tuple[KForm, KForm]:
    """(Re xi, Im xi) for xi = (w1 + i w5)^(w2 + i w6)^(w3 + i w4).

    ``swap_56`` exchanges e5 and e6 in the construction; it exists only to
    produce a deliberately wrong form for negative tests.
    """
    f1, f2, f3 = _holomorphic_factors(swap_56)
    return complex_wedge(complex_wedge(f1, f2), f3)


def calibration_identity_check(omega: KForm, xi_re: KForm, xi_im: KForm) -> float:
    """Largest deviation in (-1)^{n(n-1)/2} (i/2)^n xi^conj(xi) = omega^n / n!.

    Both sides are top-degree forms; the returned value compares their real
    parts and also includes the imaginary part of the left side, which must
    vanish.
    """
    n = xi_re.degree
    if xi_im.degree != n or omega.degree != 2 or 2 * n != DIM:
        raise ValueError("expected a 2-form and a pair of n-forms with 2n = 6")
    w_re, w_im = complex_wedge((xi_re, xi_im), (xi_re, xi_im.scale(-1.0)))
    c = (-1) ** (n * (n - 1) // 2) * (0.5j) ** n
    top_re, top_im = w_re.top_coefficient(), w_im.top_coefficient()
    lhs = c * complex(top_re, top_im)
    power = omega
    for _ in range(n - 1):
        power = wedge(power, omega)
    rhs = power.top_coefficient() / math.factorial(n)
    return float(max(abs(lhs.real - rhs), abs(lhs.imag)))


@dataclass(frozen=True)
class ComplexStructure:
    """Linear complex structure J acting on column vectors."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (DIM, DIM):
            raise ValueError("complex structure must be a 6x6 matrix")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return as_vec6(v) @ self.matrix.T


def standard_complex_structure() -> ComplexStructure:
    """J e1 = e5, J e2 = e6, J e3 = e4 (and J^2 = -1)."""
    m = np.zeros((DIM, DIM))
    for a, b in ((1, 5), (2, 6), (3, 4)):
        m[b - 1, a - 1] = 1.0
        m[a - 1, b - 1] = -1.0
    return ComplexStructure(m)
