"""Special-Lagrangian residual of graphs over the glued neck and its fixed-point solver.

A Hamiltonian deformation by the potential F changes the phase of the neck
to first order through

    R(F) = L(G) - m Delta F + L(G) (F_xy^2 - F_xx F_yy),

where L(G) is the flat Laplacian of the gluing potential (equal to the
error density), m = 1 - det Hess G, and Delta = d*d is the model
Laplace-Beltrami operator.  The Hessian of F is taken in the base
coordinates x, y.  The fixed-point map

    W(h) = Delta^{-1} ((L(G) + Q(h)) / m),   Q(h) = L(G) (h_xy^2 - h_xx h_yy),

uses Dirichlet conditions on the two radial rings, so potentials vanish
there and a fixed point zeroes R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ContractionHypothesisError, IterativeFailure
from .gluing_model import GluingConfig, det_hess_G, laplacian_G
from .neck_grid import NeckGrid, ScalarField, norm_lp_k
from .spectral import Boundary, NeckOperator, OperatorKind, assemble, first_eigenvalue, poisson_solve, random_field

MULTIPLIER_FLOOR = 0.75


@dataclass(eq=False)
class GraphPotential:
    """Scalar potential F on the neck grid; the deformation is J grad F."""

    F: ScalarField

    @classmethod
    def zero(cls, grid: NeckGrid) -> "GraphPotential":
        return cls(ScalarField(grid, np.zeros(grid.shape)))

    @property
    def grid(self) -> NeckGrid:
        return self.F.grid

    @property
    def values(self) -> np.ndarray:
        return self.F.values


@dataclass(eq=False)
class ResidualReport:
    residual_field: ScalarField
    l2_norm: float
    linear_part_norm: float
    nonlinear_part_norm: float
    inhomogeneous_norm: float


@dataclass(frozen=True)
class NeckData:
    """Closed-form coefficient fields of the residual on a grid."""

    lap_G: np.ndarray
    det_hess: np.ndarray
    multiplier: np.ndarray


def neck_data(cfg: GluingConfig, grid: NeckGrid) -> NeckData:
    pts = grid.points
    lap = np.broadcast_to(laplacian_G(pts, cfg), grid.shape)
    det = np.broadcast_to(det_hess_G(pts, cfg), grid.shape)
    return NeckData(lap, det, 1.0 - det)


def check_multiplier(data: NeckData) -> float:
    """Smallest nodal value of 1 - det Hess G; raises if below the 3/4 floor."""
    low = float(np.min(data.multiplier))
    if low < MULTIPLIER_FLOOR:
        raise ValueError(f"multiplier 1 - det Hess G drops to {low:.4f} < {MULTIPLIER_FLOOR}")
    return low


def solver_operator(cfg: GluingConfig, grid: NeckGrid) -> NeckOperator:
    return assemble(grid, cfg, OperatorKind.LAPLACE_BELTRAMI, Boundary.DIRICHLET)


def _interior_laplacian(op: NeckOperator, values: np.ndarray) -> np.ndarray:
    """Delta on interior rows using the actual ring values of ``values``; zero on the rings.

    For potentials vanishing on the rings this equals the Dirichlet operator.
    """
    full = op.with_boundary(Boundary.NEUMANN).apply(values).values
    return np.where(op.grid.ring_mask(), 0.0, full)


def _interior_matrix(op: NeckOperator) -> sp.csr_matrix:
    keep = (~op.grid.ring_mask()).ravel().astype(float)
    return (sp.diags(keep / op.mass) @ op.stiffness).tocsr()


def _hessian(values: np.ndarray, grid: NeckGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ops = grid.cartesian_ops
    v = values.ravel()
    return tuple((ops[n] @ v).reshape(grid.shape) for n in ("xx", "yy", "xy"))


def quadratic_term(values: np.ndarray, lap_G: np.ndarray, grid: NeckGrid) -> np.ndarray:
    """Q(F) = L(G) (F_xy^2 - F_xx F_yy)."""
    fxx, fyy, fxy = _hessian(values, grid)
    return lap_G * (fxy * fxy - fxx * fyy)


def _l2(values: np.ndarray, grid: NeckGrid) -> float:
    return float(math.sqrt(np.sum(grid.weights * values * values)))


def slag_residual(
    F: GraphPotential, cfg: GluingConfig, grid: NeckGrid, op: NeckOperator | None = None
) -> ResidualReport:
    """Nodewise residual and the norms of its three parts, in the weights of ``grid``."""
    op = op or solver_operator(cfg, grid)
    data = neck_data(cfg, grid)
    v = F.values
    linear = -data.multiplier * _interior_laplacian(op, v)
    nonlinear = quadratic_term(v, data.lap_G, grid)
    total = data.lap_G + linear + nonlinear
    return ResidualReport(
        residual_field=ScalarField(grid, total),
        l2_norm=_l2(total, grid),
        linear_part_norm=_l2(linear, grid),
        nonlinear_part_norm=_l2(nonlinear, grid),
        inhomogeneous_norm=_l2(np.asarray(data.lap_G), grid),
    )


@dataclass(eq=False)
class Linearization:
    """Sparse Jacobian of the residual at F0, acting on flattened potentials."""

    matrix: sp.csr_matrix
    grid: NeckGrid

    def apply(self, h) -> ScalarField:
        v = h.values if isinstance(h, (ScalarField, GraphPotential)) else np.asarray(h)
        return ScalarField(self.grid, self.matrix @ v.ravel())


def linearization(
    F0: GraphPotential, cfg: GluingConfig, grid: NeckGrid, op: NeckOperator | None = None
) -> Linearization:
    """h -> -m Delta h + L(G) (2 F0_xy h_xy - F0_xx h_yy - F0_yy h_xx)."""
    op = op or solver_operator(cfg, grid)
    data = neck_data(cfg, grid)
    mat = -sp.diags(data.multiplier.ravel()) @ _interior_matrix(op)
    if np.any(F0.values):
        fxx, fyy, fxy = _hessian(F0.values, grid)
        ops = grid.cartesian_ops
        lap = data.lap_G.ravel()
        mat = mat + sp.diags(lap) @ (
            sp.diags(2.0 * fxy.ravel()) @ ops["xy"] - sp.diags(fxx.ravel()) @ ops["yy"] - sp.diags(fyy.ravel()) @ ops["xx"]
        )
    return Linearization(mat.tocsr(), grid)


def det_hess_bound_check(cfg: GluingConfig, grid: NeckGrid) -> float:
    """Integral of |det Hess G|^2 dvol over the neck."""
    data = neck_data(cfg, grid)
    return float(np.sum(grid.weights * data.det_hess**2))


def contraction_step(h: GraphPotential, cfg: GluingConfig, grid: NeckGrid, op: NeckOperator) -> GraphPotential:
    """One application of W: solve Delta w = (L(G) + Q(h)) / m with w = 0 on the rings."""
    data = neck_data(cfg, grid)
    rhs = (data.lap_G + quadratic_term(h.values, data.lap_G, grid)) / data.multiplier
    w = poisson_solve(op, rhs)
    return GraphPotential(ScalarField(grid, w.values))


def norm22(h: GraphPotential) -> float:
    return norm_lp_k(h.F, 2.0, 2)


def quadratic_constant(
    cfg: GluingConfig,
    grid: NeckGrid,
    op: NeckOperator,
    *,
    pairs: int = 50,
    radius: float = 1.0,
    seed: int = 0,
) -> float:
    """max ||W(h1) - W(h2)|| / ((||h1|| + ||h2||) ||h1 - h2||) over random pairs of norm <= radius."""
    rng = np.random.default_rng(seed)
    data = neck_data(cfg, grid)
    best = 0.0
    for _ in range(pairs):
        hs = []
        for _ in range(2):
            f = random_field(grid, rng, compact=True)
            f = f * (radius * rng.uniform(0.1, 1.0) / norm_lp_k(f, 2.0, 2))
            hs.append(GraphPotential(f))
        q = [quadratic_term(h.values, data.lap_G, grid) / data.multiplier for h in hs]
        dw = poisson_solve(op, q[0] - q[1])
        num = norm_lp_k(ScalarField(grid, dw.values), 2.0, 2)
        n1, n2 = norm22(hs[0]), norm22(hs[1])
        den = (n1 + n2) * norm_lp_k(hs[0].F - hs[1].F, 2.0, 2)
        if den > 0.0:
            best = max(best, num / den)
    return best


@dataclass
class TraceRow:
    iter: int
    step_norm: float
    residual_l2: float
    contraction_ratio: float


@dataclass(eq=False)
class SolveResult:
    potential: GraphPotential
    report: ResidualReport
    trace: list[TraceRow]
    w0_norm: float
    initial_residual: float
    quadratic_constant: float
    contraction_bound: float
    lambda1: float
    converged: bool = True
    details: dict = field(default_factory=dict)


def solve(
    cfg: GluingConfig,
    grid: NeckGrid,
    max_iters: int = 50,
    tol: float | None = None,
    *,
    pairs: int = 8,
    seed: int = 0,
) -> SolveResult:
    """Iterate h <- W(h) from h = 0 until ||h_{k+1} - h_k||_{2,2} <= tol.

    Before iterating, the quadratic constant C of W is measured on random
    pairs in the ball of radius eps = 2 ||W(0)||; the run is refused when
    2 C eps >= 1, and aborted if any step fails to contract.  ``tol``
    defaults to 1e-9 ||W(0)||_{2,2}.  The final residual must satisfy
    ||R(h)||_2 <= 10 tol / lambda1 with lambda1 the first non-zero eigenvalue
    of the Neumann operator.
    """
    op = solver_operator(cfg, grid)
    data = neck_data(cfg, grid)
    check_multiplier(data)
    h = GraphPotential.zero(grid)
    initial = slag_residual(h, cfg, grid, op)
    w0 = contraction_step(h, cfg, grid, op)
    w0_norm = norm22(w0)
    lam1 = first_eigenvalue(op.with_boundary(Boundary.NEUMANN), seed=seed).lambda1
    tol = 1e-9 * w0_norm if tol is None else tol
    if w0_norm == 0.0:
        report = slag_residual(w0, cfg, grid, op)
        row = TraceRow(1, 0.0, report.l2_norm, float("nan"))
        return SolveResult(w0, report, [row], 0.0, initial.l2_norm, 0.0, 0.0, lam1)

    eps = 2.0 * w0_norm
    C = quadratic_constant(cfg, grid, op, pairs=pairs, radius=eps, seed=seed)
    bound = 2.0 * C * eps
    constants = {"C": C, "eps": eps, "2*C*eps": bound, "||W(0)||": w0_norm}
    if bound >= 1.0:
        raise ContractionHypothesisError("fixed-point map is not contracting on the ball", constants)

    trace: list[TraceRow] = []
    prev_step = float("nan")
    current = w0
    step = w0_norm
    trace.append(TraceRow(1, step, slag_residual(current, cfg, grid, op).l2_norm, float("nan")))
    for it in range(2, max_iters + 1):
        if step <= tol:
            break
        nxt = contraction_step(current, cfg, grid, op)
        prev_step, step = step, norm_lp_k(nxt.F - current.F, 2.0, 2)
        ratio = step / prev_step if prev_step > 0.0 else float("nan")
        current = nxt
        report = slag_residual(current, cfg, grid, op)
        trace.append(TraceRow(it, step, report.l2_norm, ratio))
        if ratio >= 1.0:
            raise ContractionHypothesisError("iteration stopped contracting", {**constants, "step_ratio": ratio})
    else:
        if step > tol:
            raise IterativeFailure("fixed-point iteration did not reach tol", residual=step, iterations=max_iters)

    report = slag_residual(current, cfg, grid, op)
    limit = 10.0 * tol / lam1
    details = {**constants, "tol": tol, "residual_limit": limit, "min_multiplier": float(np.min(data.multiplier))}
    if report.l2_norm > limit:
        raise IterativeFailure(
            f"final residual exceeds 10 tol / lambda1 = {limit:.3e}", residual=report.l2_norm, iterations=len(trace)
        )
    return SolveResult(current, report, trace, w0_norm, initial.l2_norm, C, bound, lam1, True, details)
