"""Discrete Laplace-Beltrami operator on the neck and the estimates built on it.

The model metric on the neck is mu (dx^2 + dy^2) + A dkappa^2 with
mu = 1 + delta^4 / (4 r^4).  In log-polar coordinates (s, theta, kappa) its
Dirichlet energy is

    sqrt(A) * integral of [f_s^2 + f_theta^2 + (mu r^2 / A) f_kappa^2] ds dtheta dkappa,

and the volume density is sqrt(A) mu r^2.  The operator is assembled as a
vertex-centred finite-volume (7-point) stiffness matrix K and a diagonal mass
M, so Delta = M^{-1} K = d*d is symmetric and positive semidefinite in the
weighted inner product.

K separates: Fourier modes in theta and kappa leave a tridiagonal system in
s for each mode pair, which is what the direct solver and the mode spectrum
use.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import IterativeFailure
from .gluing_model import GluingConfig, normalized_log_radius
from .neck_grid import NeckGrid, ScalarField, build_grid, norm_lp_k


class OperatorKind(enum.Enum):
    LAPLACE_BELTRAMI = "laplace_beltrami"
    FLAT_LAPLACIAN = "flat_laplacian"


class Boundary(enum.Enum):
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"


class ProjectedMeanWarning(UserWarning):
    """A right-hand side with non-zero weighted mean was projected."""


def _periodic_symbol(n: int, h: float) -> np.ndarray:
    """Eigenvalues of the periodic second-difference Laplacian, in FFT order."""
    return (4.0 / h**2) * np.sin(np.pi * np.arange(n) / n) ** 2


@dataclass(eq=False)
class NeckOperator:
    """Assembled operator Delta = M^{-1} K with its separable pieces.

    ``grid`` carries the operator's own metric and trapezoid weights, which
    coincide with the mass matrix.  With Dirichlet conditions the unknowns
    are the nodes off the two radial boundary rings; full-size vectors are
    still accepted and returned, with zeros on the rings.
    """

    grid: NeckGrid
    cfg: GluingConfig
    kind: OperatorKind
    bc: Boundary
    mu: np.ndarray
    s_edge: float  # weight of every s-edge (1 / h_s)
    coef_theta: np.ndarray  # per radial node
    coef_kappa: np.ndarray
    mass_s: np.ndarray
    scale: float  # sqrt(A) h_theta h_kappa

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.grid.shape

    @cached_property
    def active(self) -> np.ndarray:
        """Radial indices of the unknowns."""
        n = self.grid.n_r
        return np.arange(n) if self.bc is Boundary.NEUMANN else np.arange(1, n - 1)

    @cached_property
    def active_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.active] = True
        return mask

    @cached_property
    def _s_laplacian(self) -> sp.csr_matrix:
        n = self.grid.n_r
        main = np.full(n, 2.0)
        main[0] = main[-1] = 1.0
        a = sp.diags([-np.ones(n - 1), main, -np.ones(n - 1)], [-1, 0, 1], format="csr") * self.s_edge
        return a

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Full Neumann stiffness matrix K on all nodes (flattened C order)."""
        g = self.grid
        lt = _periodic_laplacian_matrix(g.n_theta, g.h_theta)
        lk = _periodic_laplacian_matrix(g.n_kappa, g.h_kappa)
        it, ik = sp.identity(g.n_theta), sp.identity(g.n_kappa)
        k = (
            sp.kron(sp.kron(self._s_laplacian, it), ik)
            + sp.kron(sp.kron(sp.diags(self.coef_theta), lt), ik)
            + sp.kron(sp.kron(sp.diags(self.coef_kappa), it), lk)
        )
        return (self.scale * k).tocsr()

    def stiffness_apply(self, x: np.ndarray) -> np.ndarray:
        """K x in flux form (edge differences first), on arrays of the grid shape.

        Same result as ``stiffness @ x`` up to rounding, but the differences
        are formed before weighting, which keeps the cancellation error near
        the size of the result on the smallest cells.
        """
        x = np.asarray(x, dtype=float).reshape(self.shape)
        g = self.grid
        out = np.zeros_like(x)
        flux = self.s_edge * np.diff(x, axis=0)
        out[:-1] -= flux
        out[1:] += flux
        for axis, h, coef in ((1, g.h_theta, self.coef_theta), (2, g.h_kappa, self.coef_kappa)):
            d = (x - np.roll(x, 1, axis=axis)) / h**2
            out += coef[:, None, None] * (d - np.roll(d, -1, axis=axis))
        return self.scale * out

    def abs_stiffness_apply(self, x: np.ndarray) -> np.ndarray:
        """|K| |x| (entrywise absolute values), for rounding-error bounds."""
        x = np.abs(np.asarray(x, dtype=float).reshape(self.shape))
        g = self.grid
        out = np.zeros_like(x)
        flux = self.s_edge * (x[:-1] + x[1:])
        out[:-1] += flux
        out[1:] += flux
        for axis, h, coef in ((1, g.h_theta, self.coef_theta), (2, g.h_kappa, self.coef_kappa)):
            out += coef[:, None, None] * (2.0 * x + np.roll(x, 1, axis=axis) + np.roll(x, -1, axis=axis)) / h**2
        return self.scale * out

    @cached_property
    def mass(self) -> np.ndarray:
        """Diagonal of M over all nodes (equals the grid weights)."""
        g = self.grid
        return np.repeat(self.scale * self.mass_s, g.n_theta * g.n_kappa)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Delta = M^{-1} K restricted to the unknowns (other rows and columns zero)."""
        keep = self.active_mask.ravel().astype(float)
        d = sp.diags(keep / self.mass) @ self.stiffness @ sp.diags(keep)
        return d.tocsr()

    def with_boundary(self, bc: Boundary) -> "NeckOperator":
        return replace(self, bc=bc)

    # ------------------------------------------------------------ actions

    def _values(self, f) -> np.ndarray:
        v = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float).reshape(self.shape)
        if self.bc is Boundary.DIRICHLET:
            v = np.where(self.active_mask, v, 0.0)
        return v

    def apply(self, f) -> ScalarField:
        """Delta f (positive convention); zero on the rings under Dirichlet conditions."""
        v = self._values(f)
        out = (self.stiffness_apply(v) / self.mass.reshape(self.shape)).ravel()
        if self.bc is Boundary.DIRICHLET:
            out = np.where(self.active_mask.ravel(), out, 0.0)
        return ScalarField(self.grid, out)

    def energy(self, f) -> float:
        """Discrete Dirichlet integral of |grad f|^2 dvol."""
        v = self._values(f)
        return float(np.sum(v * self.stiffness_apply(v)))

    def l2(self, f) -> float:
        v = self._values(f).ravel()
        return float(math.sqrt(np.sum(self.mass * v * v)))

    def weighted_mean(self, f) -> float:
        v = self._values(f)
        m = self.mass.reshape(self.shape)
        return float(np.sum(m * v) / np.sum(m))

    # ------------------------------------------------------------ solver

    def solve_shifted(self, rhs: np.ndarray, shift: float = 0.0) -> np.ndarray:
        """Solve (K - shift M) x = rhs on the unknowns by FFT in theta, kappa and banded solves in s.

        ``rhs`` has the grid shape; entries on inactive rings are ignored and
        the result is zero there.  For the singular Neumann case (shift 0) the
        constant mode is pinned and the caller fixes the additive constant.
        """
        g = self.grid
        idx = self.active
        n = len(idx)
        b = np.asarray(rhs, dtype=float).reshape(self.shape)[idx] / self.scale
        bh = np.fft.fft2(b, axes=(1, 2))
        lt = _periodic_symbol(g.n_theta, g.h_theta)
        lk = _periodic_symbol(g.n_kappa, g.h_kappa)
        a_diag = np.asarray(self._s_laplacian.diagonal())[idx]
        ct, ck, ms = self.coef_theta[idx], self.coef_kappa[idx], self.mass_s[idx]
        off = -self.s_edge
        ab = np.zeros((3, n))
        ab[0, 1:] = off
        ab[2, :-1] = off
        out = np.empty_like(bh)
        singular = self.bc is Boundary.NEUMANN and shift == 0.0
        for m in range(g.n_theta):
            for k in range(g.n_kappa):
                ab[1] = a_diag + ct * lt[m] + ck * lk[k] - shift * ms
                rhs_mk = bh[:, m, k]
                if singular and m == 0 and k == 0:
                    out[:, m, k] = _pinned_solve(ab, rhs_mk)
                else:
                    out[:, m, k] = sla.solve_banded((1, 1), ab, rhs_mk, check_finite=False)
        x = np.zeros(self.shape)
        x[idx] = np.fft.ifft2(out, axes=(1, 2)).real
        return x

    def mode_spectrum(self, per_mode: int = 2) -> np.ndarray:
        """Lowest ``per_mode`` eigenvalues of every Fourier-mode pencil, sorted.

        The eigenvalue 0 of the Neumann constant mode is dropped.
        """
        g = self.grid
        idx = self.active
        lt = _periodic_symbol(g.n_theta, g.h_theta)
        lk = _periodic_symbol(g.n_kappa, g.h_kappa)
        a_diag = np.asarray(self._s_laplacian.diagonal())[idx]
        ct, ck, ms = self.coef_theta[idx], self.coef_kappa[idx], self.mass_s[idx]
        inv_sqrt = 1.0 / np.sqrt(ms)
        off = -self.s_edge * inv_sqrt[:-1] * inv_sqrt[1:]
        top = min(per_mode + 1, len(idx)) - 1
        vals = []
        for m in range(g.n_theta // 2 + 1):
            for k in range(g.n_kappa // 2 + 1):
                d = (a_diag + ct * lt[m] + ck * lk[k]) / ms
                ev = sla.eigh_tridiagonal(d, off, eigvals_only=True, select="i", select_range=(0, top))
                mult = (1 if m in (0, g.n_theta / 2) else 2) * (1 if k in (0, g.n_kappa / 2) else 2)
                if self.bc is Boundary.NEUMANN and m == 0 and k == 0:
                    ev = ev[1:]
                vals.extend(np.repeat(ev, mult))
        return np.sort(np.asarray(vals))


def _periodic_laplacian_matrix(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 2.0)
    m = sp.diags([-np.ones(n - 1), main, -np.ones(n - 1)], [-1, 0, 1], format="lil")
    m[0, n - 1] = -1.0
    m[n - 1, 0] = -1.0
    return (m / h**2).tocsr()


def _pinned_solve(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a singular symmetric tridiagonal system with the first unknown set to 0."""
    n = ab.shape[1]
    sub = ab[:, 1:].copy()
    sub[0, 0] = 0.0
    x = np.zeros(n, dtype=complex)
    x[1:] = sla.solve_banded((1, 1), sub, rhs[1:], check_finite=False)
    return x


def assemble(
    grid: NeckGrid,
    cfg: GluingConfig,
    kind: OperatorKind = OperatorKind.LAPLACE_BELTRAMI,
    bc: Boundary = Boundary.NEUMANN,
) -> NeckOperator:
    """Assemble Delta on the nodes of ``grid``.

    The operator builds its own trapezoid-weighted grid with the conformal
    (or flat) measure on the same nodes, so its mass matrix and the grid
    weights agree exactly.
    """
    measure = "conformal" if kind is OperatorKind.LAPLACE_BELTRAMI else "flat"
    og = build_grid(
        cfg, grid.n_r, grid.n_theta, grid.n_kappa, measure=measure, quadrature="trapezoid", kappa_length=grid.kappa_length
    )
    r = og.r_nodes
    mu = og.g11[:, 0, 0]
    A = cfg.area_factor_A
    w = og.s_weights / og.h_s
    h_s = og.h_s
    return NeckOperator(
        grid=og,
        cfg=cfg,
        kind=kind,
        bc=bc,
        mu=og.g11.copy(),
        s_edge=1.0 / h_s,
        coef_theta=w * h_s,
        coef_kappa=mu * r**2 * w * h_s / A,
        mass_s=mu * r**2 * w * h_s,
        scale=math.sqrt(A) * og.h_theta * og.h_kappa,
    )


# ---------------------------------------------------------------- eigenvalue


@dataclass(eq=False)
class SpectralResult:
    lambda1: float
    eigenfield: ScalarField
    iterations: int
    residual: float
    shift: float = 0.0
    bc: Boundary = Boundary.NEUMANN


def first_eigenvalue(
    op: NeckOperator,
    *,
    tol: float = 1e-10,
    stall_tol: float = 1e-8,
    max_iter: int = 10_000,
    seed: int = 0,
    shift: float | None = None,
) -> SpectralResult:
    """Smallest non-zero eigenvalue by shifted inverse iteration.

    Constants are deflated under Neumann conditions.  Unless given, the
    shift is placed below the lowest mode-pencil eigenvalue by half the gap
    to the next distinct one, which keeps the convergence factor near 1/3
    even when the eigenvalue is large compared with the gap (Dirichlet
    problems on thin necks).  Stops when ||Delta phi - lambda phi|| <=
    tol * max(1, lambda) with ||phi|| = 1 in the weighted norm, or when the
    residual has stopped decreasing while below stall_tol * max(1, lambda).
    """
    if shift is None:
        modes = op.mode_spectrum(per_mode=2)
        lam0 = modes[0]
        above = modes[modes > lam0 * (1.0 + 1e-9) + 1e-300]
        gap = (above[0] - lam0) if above.size else max(lam0, 1.0)
        shift = lam0 - 0.5 * gap
    mass = op.mass.reshape(op.shape)
    mask = op.active_mask
    deflate = op.bc is Boundary.NEUMANN

    def project(x):
        x = np.where(mask, x, 0.0)
        if deflate:
            x = x - np.sum(mass * x) / np.sum(mass)
        return x / math.sqrt(np.sum(mass * x * x))

    rng = np.random.default_rng(seed)
    x = project(rng.standard_normal(op.shape))
    lam, res = float("nan"), float("inf")
    history: list[float] = []
    for it in range(1, max_iter + 1):
        y = op.solve_shifted(mass * x, shift)
        x = project(y)
        kx = op.stiffness_apply(x)
        lam = float(np.sum(x * kx))
        r = np.where(mask, kx / mass - lam * x, 0.0)
        res = math.sqrt(float(np.sum(mass * r * r)))
        scale = max(1.0, abs(lam))
        history.append(res)
        # Evaluating K x cancels terms far larger than the result, so the
        # residual has a rounding floor; accept a plateau below stall_tol.
        stalled = len(history) > 8 and min(history[-8:]) > 0.5 * min(history[:-8])
        if res <= tol * scale or (stalled and res <= stall_tol * scale):
            return SpectralResult(lam, ScalarField(op.grid, x), it, res, shift, op.bc)
    raise IterativeFailure("inverse iteration did not converge", residual=res, iterations=max_iter)


# ---------------------------------------------------------------- Poisson


def poisson_solve(op: NeckOperator, psi: ScalarField, *, rtol: float = 1e-10) -> ScalarField:
    """f with Delta f = psi.

    Neumann: psi is first projected to weighted mean zero (a warning reports
    a non-negligible mean) and f is returned with weighted mean zero.
    Dirichlet: f vanishes on the two radial rings.  The relative residual
    ||M psi - K f|| / ||M psi|| must reach ``rtol``, or stall at the rounding
    floor of the double-precision solution.
    """
    v = np.array(psi.values if isinstance(psi, ScalarField) else psi, dtype=float).reshape(op.shape)
    mass = op.mass.reshape(op.shape)
    if op.bc is Boundary.NEUMANN:
        mean = float(np.sum(mass * v) / np.sum(mass))
        if abs(mean) > 1e-12 * max(1.0, float(np.max(np.abs(v)))):
            warnings.warn(f"right-hand side mean {mean:.3e} projected out", ProjectedMeanWarning, stacklevel=2)
        v = v - mean
    else:
        v = np.where(op.active_mask, v, 0.0)
    b = mass * v
    bnorm = float(np.linalg.norm(b[op.active_mask]))
    if bnorm == 0.0:
        return ScalarField(op.grid, np.zeros(op.shape))
    x = op.solve_shifted(b, 0.0)
    rel = float("inf")
    for sweep in range(1, 5):
        if op.bc is Boundary.NEUMANN:
            x = x - np.sum(mass * x) / np.sum(mass)
        r = np.where(op.active_mask, b - op.stiffness_apply(x), 0.0)
        previous, rel = rel, float(np.linalg.norm(r[op.active_mask])) / bnorm
        if rel <= rtol:
            return ScalarField(op.grid, x)
        # Rounding x itself perturbs K x by about eps |K| |x|; below that
        # level refinement cannot make progress.
        floor = 16.0 * np.finfo(float).eps * float(np.linalg.norm(op.abs_stiffness_apply(x)[op.active_mask])) / bnorm
        if rel <= floor and rel > 0.5 * previous:
            return ScalarField(op.grid, x)
        x = x + op.solve_shifted(r, 0.0)
    raise IterativeFailure("Poisson solve missed its residual tolerance", residual=rel, iterations=sweep)


# ---------------------------------------------------------------- random fields


def random_field(
    grid: NeckGrid, rng: np.random.Generator, *, max_mode: int = 3, compact: bool = False, mean_zero: bool = False
) -> ScalarField:
    """Random smooth field built from low Fourier modes in (u, theta, kappa).

    u is the normalised log-radius, so the field has the same shape at every
    scale of the neck.  ``compact`` multiplies by a random bump vanishing
    near both radial ends.
    """
    u = normalized_log_radius(grid.r_nodes, grid.cfg)[:, None, None]
    th = grid.theta_nodes[None, :, None]
    ka = (2.0 * math.pi / grid.kappa_length) * grid.kappa_nodes[None, None, :]
    total = np.zeros(grid.shape)
    for j in range(max_mode + 1):
        for m in range(max_mode + 1):
            for k in range(max_mode + 1):
                amp = rng.standard_normal(4) / (1.0 + j + m + k) ** 2
                ph = rng.uniform(0.0, 2.0 * math.pi, 2)
                radial = np.cos(j * math.pi * u + rng.uniform(0.0, math.pi)) if j else np.ones_like(u)
                total = total + radial * (
                    amp[0] * np.cos(m * th + ph[0]) * np.cos(k * ka + ph[1])
                    + amp[1] * np.sin(m * th + ph[0]) * np.sin(k * ka + ph[1])
                )
    if compact:
        a = rng.uniform(0.05, 0.4)
        b = rng.uniform(0.6, 0.95)
        t = np.clip((u - a) / (b - a), 0.0, 1.0)
        total = total * np.sin(math.pi * t) ** 2
    if mean_zero:
        total = total - np.sum(grid.weights * total) / grid.volume
    return ScalarField(grid, total)


# ---------------------------------------------------------------- estimates


def verify_poincare(op: NeckOperator, trials: int = 100, *, seed: int = 0) -> float:
    """min ||grad h|| / ||h|| over random compactly supported h and the Dirichlet eigenfield."""
    dop = op.with_boundary(Boundary.DIRICHLET)
    rng = np.random.default_rng(seed)
    eig = first_eigenvalue(dop, seed=seed)
    ratios = [math.sqrt(dop.energy(eig.eigenfield) / dop.l2(eig.eigenfield) ** 2)]
    for _ in range(trials):
        h = random_field(dop.grid, rng, compact=True)
        ratios.append(math.sqrt(dop.energy(h) / dop.l2(h) ** 2))
    return float(min(ratios))


def verify_lp_bound(op: NeckOperator, p: float = 2.0, trials: int = 50, *, seed: int = 0) -> float:
    """max ||f||_p / ||psi||_p over random mean-zero psi with Delta f = psi."""
    if p < 1.0:
        raise ValueError("p must be >= 1")
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        psi = random_field(op.grid, rng, mean_zero=op.bc is Boundary.NEUMANN)
        f = poisson_solve(op, psi)
        best = max(best, norm_lp_k(f, p, 0) / norm_lp_k(psi, p, 0))
    return best


def verify_elliptic_estimates(op: NeckOperator, trials: int = 50, *, seed: int = 0) -> tuple[float, float]:
    """Empirical (c22, c42).

    c22 = max ||f||_{2,2} / ||psi||_2 and c42 = max ||f||_{2,4} / ||psi||_{2,2},
    with ||f||_{2,4} realised as ||f||_{2,2} + ||Delta f||_{2,2}.
    """
    rng = np.random.default_rng(seed)
    c22 = c42 = 0.0
    for _ in range(trials):
        psi = random_field(op.grid, rng, mean_zero=op.bc is Boundary.NEUMANN)
        if not np.any(psi.values):
            continue
        f = poisson_solve(op, psi)
        f22 = norm_lp_k(f, 2.0, 2)
        c22 = max(c22, f22 / norm_lp_k(psi, 2.0, 0))
        lap = op.apply(f)
        c42 = max(c42, (f22 + norm_lp_k(lap, 2.0, 2)) / norm_lp_k(psi, 2.0, 2))
    return c22, c42
