"""Experiment drivers shared by the command line and the acceptance tests.

Each driver takes an :class:`ExperimentConfig` and returns tabular rows plus a
list of named invariant checks; writing files is left to the caller.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .gluing_model import (
    CurveModel,
    Cutoff,
    GluingConfig,
    NeckPoint,
    cutoff_beta,
    error_density,
    error_density_from_frame,
    mean_curvature_leading,
    mean_curvature_terms,
    omega_restriction,
    point_jacobian,
    tangent_frame,
)
from .neck_grid import build_grid, error_norm
from .slag_solver import det_hess_bound_check, norm22, solve
from .spectral import assemble, first_eigenvalue, verify_elliptic_estimates, verify_lp_bound, verify_poincare

EXPERIMENTS = ("lagrangian_check", "error_scaling", "spectral_sweep", "elliptic_constants", "mean_curvature", "solve")


@dataclass
class ExperimentConfig:
    experiment: str = "error_scaling"
    delta_list: list[float] = field(default_factory=lambda: [1e-1, 1e-2, 1e-3])
    resolutions: tuple[int, int, int] = (64, 16, 8)
    cutoff: Cutoff = Cutoff.SMOOTHED_CLAMPED_LOG
    area_factor_A: float = 1.0
    blend_width: float = 0.1
    seed: int = 0
    output_dir: str = "slag_glue_output"
    samples: int = 10_000
    trials: int = 20
    lp_exponent: float = 4.0
    max_iters: int = 50
    curve_radius: float = 1.0

    def gluing(self, delta: float) -> GluingConfig:
        return GluingConfig(delta, self.cutoff, self.area_factor_A, self.blend_width)

    def echo(self) -> dict:
        d = asdict(self)
        d["cutoff"] = self.cutoff.value
        d["resolutions"] = list(self.resolutions)
        return d


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class Table:
    filename: str
    columns: list[str]
    rows: list[list]

    def write(self, directory: Path) -> Path:
        path = Path(directory) / self.filename
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        path.write_text("\n".join(lines) + "\n")
        return path


@dataclass
class ExperimentResult:
    name: str
    tables: list[Table]
    checks: list[Check]
    summary: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.16e}"
    return str(v)


def fitted_slope(deltas, values) -> float:
    """Least-squares slope of log(values) against log(deltas)."""
    return float(np.polyfit(np.log(deltas), np.log(values), 1)[0])


def spread(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(values.max() / values.min())


def random_neck_points(cfg: GluingConfig, n: int, rng: np.random.Generator) -> NeckPoint:
    """Area-uniform points of the annulus delta <= r <= sqrt(delta)."""
    r = np.sqrt(rng.uniform(cfg.delta**2, cfg.delta, n))
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    kappa = rng.uniform(0.0, 2.0 * math.pi, n)
    return NeckPoint.polar(r, theta, kappa)


# ---------------------------------------------------------------- drivers


def lagrangian_check(ec: ExperimentConfig) -> ExperimentResult:
    rng = np.random.default_rng(ec.seed)
    rows = []
    worst_omega = worst_density = worst_curl = 0.0
    for delta in ec.delta_list:
        cfg = ec.gluing(delta)
        pts = random_neck_points(cfg, ec.samples, rng)
        omega = float(np.max(np.abs(omega_restriction(tangent_frame(pts, cfg)))))
        mismatch = float(np.max(np.abs(error_density(pts, cfg) - error_density_from_frame(pts, cfg))))
        jac = point_jacobian(pts, cfg)
        curl = float(np.max(np.abs(jac.u_y - jac.v_x)))
        rows.append([delta, ec.samples, omega, mismatch, curl])
        worst_omega, worst_density, worst_curl = max(worst_omega, omega), max(worst_density, mismatch), max(worst_curl, curl)
    checks = [
        Check("lagrangian_identity", worst_omega <= 1e-12, f"max |omega(Ei,Ej)| = {worst_omega:.3e} (limit 1e-12)"),
        Check("density_two_paths", worst_density <= 1e-12, f"max density mismatch = {worst_density:.3e} (limit 1e-12)"),
        Check("gradient_curl", worst_curl <= 1e-10, f"max |u_y - v_x| = {worst_curl:.3e} (limit 1e-10)"),
    ]
    table = Table("lagrangian_check.csv", ["delta", "samples", "max_abs_omega", "max_density_mismatch", "max_curl"], rows)
    return ExperimentResult("lagrangian_check", [table], checks, {"max_abs_omega": worst_omega})


def error_scaling(ec: ExperimentConfig) -> ExperimentResult:
    n_r, n_t, n_k = ec.resolutions
    norms = []
    support_violation = 0.0
    rng = np.random.default_rng(ec.seed)
    for delta in ec.delta_list:
        cfg = ec.gluing(delta)
        norms.append(error_norm(cfg, build_grid(cfg, n_r, n_t, n_k)))
        pts = random_neck_points(cfg, 2000, rng)
        beta, _ = cutoff_beta(pts.r, cfg)
        flat = (beta == 0.0) | (beta == 1.0)
        if np.any(flat):
            support_violation = max(support_violation, float(np.max(np.abs(error_density(pts, cfg)[flat]))))
    deltas = np.asarray(ec.delta_list, dtype=float)
    l2 = np.array([n[0] for n in norms])
    slope = fitted_slope(deltas, l2) if len(deltas) > 1 else float("nan")
    scaled = l2**2 * np.log(np.sqrt(deltas)) ** 2 / deltas**2
    rows = [[d, *n, slope] for d, n in zip(deltas, norms)]
    checks = [
        Check("error_support", support_violation == 0.0, f"max |density| where beta in {{0,1}}: {support_violation:.3e}"),
        Check("error_slope", 0.9 <= slope <= 1.2, f"fitted slope {slope:.4f} (window [0.9, 1.2])"),
        Check("error_log_scaled_bound", spread(scaled) <= 1.2, f"max/min of l2^2 log^2(sqrt d)/d^2 = {spread(scaled):.4f} (limit 1.2)"),
    ]
    for i, label in enumerate(("l2", "l2_grad", "l2_hess")):
        comp = [n[i] for n in norms]
        dec = all(b < a for a, b in zip(comp, comp[1:]))
        checks.append(Check(f"error_decay_{label}", dec, f"{label} along sweep: " + ", ".join(f"{c:.4e}" for c in comp)))
    table = Table("error_scaling.csv", ["delta", "l2", "l2_grad", "l2_hess", "fitted_slope"], rows)
    return ExperimentResult("error_scaling", [table], checks, {"fitted_slope": slope, "log_scaled_spread": spread(scaled)})


SPECTRAL_COLUMNS = [
    "delta", "n_r", "n_theta", "n_kappa", "bc", "lambda1", "poincare_min",
    "c_l2", "c_lp", "c22", "c42", "iterations", "residual",
]


def _spectral_rows(ec: ExperimentConfig) -> list[list]:
    n_r, n_t, n_k = ec.resolutions
    rows = []
    for delta in ec.delta_list:
        cfg = ec.gluing(delta)
        op = assemble(build_grid(cfg, n_r, n_t, n_k), cfg)
        eig = first_eigenvalue(op, seed=ec.seed)
        poincare = verify_poincare(op, ec.trials, seed=ec.seed)
        c_l2 = verify_lp_bound(op, 2.0, ec.trials, seed=ec.seed)
        c_lp = verify_lp_bound(op, ec.lp_exponent, ec.trials, seed=ec.seed)
        c22, c42 = verify_elliptic_estimates(op, ec.trials, seed=ec.seed)
        rows.append([delta, n_r, n_t, n_k, op.bc.value, eig.lambda1, poincare, c_l2, c_lp, c22, c42, eig.iterations, eig.residual])
    return rows


def _column(rows, name):
    return [r[SPECTRAL_COLUMNS.index(name)] for r in rows]


def spectral_sweep(ec: ExperimentConfig) -> ExperimentResult:
    rows = _spectral_rows(ec)
    lam = _column(rows, "lambda1")
    poin = _column(rows, "poincare_min")
    checks = [
        Check("lambda1_uniform", min(lam) > 0 and min(lam) >= 0.5 * max(lam), f"lambda1 range [{min(lam):.6f}, {max(lam):.6f}]"),
        Check("poincare_positive", min(poin) > 0, f"min Poincare ratio {min(poin):.4f}"),
    ]
    table = Table("spectral_sweep.csv", SPECTRAL_COLUMNS, rows)
    return ExperimentResult("spectral_sweep", [table], checks, {"lambda1_min": min(lam), "lambda1_max": max(lam)})


def elliptic_constants(ec: ExperimentConfig) -> ExperimentResult:
    rows = _spectral_rows(ec)
    checks = []
    summary = {}
    for name, limit in (("c_l2", 3.0), ("c_lp", 2.0), ("c22", 3.0), ("c42", 3.0)):
        col = _column(rows, name)
        summary[f"{name}_spread"] = spread(col)
        checks.append(Check(f"{name}_uniform", spread(col) <= limit, f"{name} max/min = {spread(col):.4f} (limit {limit})"))
    table = Table("elliptic_constants.csv", SPECTRAL_COLUMNS, rows)
    return ExperimentResult("elliptic_constants", [table], checks, summary)


def mean_curvature_sweep(ec: ExperimentConfig) -> ExperimentResult:
    n_r, n_t, n_k = ec.resolutions
    curve = CurveModel.circle(ec.curve_radius)
    rows = []
    worst = 0.0
    for delta in ec.delta_list:
        cfg = ec.gluing(delta)
        grid = build_grid(cfg, n_r, n_t, n_k)
        H = mean_curvature_leading(grid.points, curve, cfg)
        l2_sq = float(np.sum(grid.weights * np.sum(H * H, axis=-1)))
        edge = NeckPoint(math.sqrt(delta), 0.0, 0.3)
        first, _ = mean_curvature_terms(edge, curve, cfg)
        lead = float(np.linalg.norm(first))
        expected = (1.0 / ec.curve_radius) / (1.0 + delta)
        worst = max(worst, abs(lead - expected))
        rows.append([delta, l2_sq, lead])
    l2 = [r[1] for r in rows]
    checks = [
        Check("mean_curvature_decay", all(b < a for a, b in zip(l2, l2[1:])), "||H||^2 along sweep: " + ", ".join(f"{v:.4e}" for v in l2)),
        Check("leading_term_closed_form", worst <= 1e-12, f"max deviation from (1/R)/(1+delta): {worst:.3e}"),
    ]
    table = Table("mean_curvature.csv", ["delta", "h_l2_sq", "leading_norm_at_sqrt_delta"], rows)
    return ExperimentResult("mean_curvature", [table], checks, {"h_l2_sq": l2})


def solve_sweep(ec: ExperimentConfig) -> ExperimentResult:
    n_r, n_t, n_k = ec.resolutions
    tables = []
    summary_rows = []
    ratio_ok = bound_ok = residual_ok = True
    for delta in ec.delta_list:
        cfg = ec.gluing(delta)
        grid = build_grid(cfg, n_r, n_t, n_k)
        res = solve(cfg, grid, ec.max_iters, seed=ec.seed)
        ratios = [row.contraction_ratio for row in res.trace[1:]]
        worst_ratio = max(ratios) if ratios else 0.0
        h_norm = norm22(res.potential)
        det_int = det_hess_bound_check(cfg, grid)
        ratio_ok &= worst_ratio <= 0.5
        bound_ok &= h_norm <= 2.0 * res.w0_norm
        residual_ok &= res.report.l2_norm <= 1e-6 * res.initial_residual
        tag = f"{delta:.6g}"
        tables.append(
            Table(
                f"solve_trace_delta_{tag}.csv",
                ["iter", "step_norm", "residual_l2", "contraction_ratio"],
                [[r.iter, r.step_norm, r.residual_l2, r.contraction_ratio] for r in res.trace],
            )
        )
        R, T, K = grid.mesh
        tables.append(
            Table(
                f"solve_potential_delta_{tag}.csv",
                ["r", "theta", "kappa", "value", "weight"],
                np.column_stack([R.ravel(), T.ravel(), K.ravel(), res.potential.values.ravel(), grid.weights.ravel()]).tolist(),
            )
        )
        summary_rows.append(
            [delta, len(res.trace), res.w0_norm, h_norm, res.initial_residual, res.report.l2_norm, worst_ratio, res.quadratic_constant, det_int / delta**2]
        )
    tables.insert(
        0,
        Table(
            "solve_summary.csv",
            ["delta", "iterations", "w0_norm", "h_norm", "initial_residual", "final_residual", "max_ratio_after_first", "quadratic_constant", "det_hess_integral_over_delta_sq"],
            summary_rows,
        ),
    )
    checks = [
        Check("contraction_ratio", ratio_ok, "per-step ratios <= 1/2 after the first step"),
        Check("fixed_point_bound", bound_ok, "||h*||_{2,2} <= 2 ||W(0)||_{2,2}"),
        Check("residual_reduction", residual_ok, "final residual <= 1e-6 x initial"),
    ]
    return ExperimentResult("solve", tables, checks, {"runs": len(summary_rows)})


DRIVERS: dict[str, Callable[[ExperimentConfig], ExperimentResult]] = {
    "lagrangian_check": lagrangian_check,
    "error_scaling": error_scaling,
    "spectral_sweep": spectral_sweep,
    "elliptic_constants": elliptic_constants,
    "mean_curvature": mean_curvature_sweep,
    "solve": solve_sweep,
}


def run_experiment(ec: ExperimentConfig) -> ExperimentResult:
    return DRIVERS[ec.experiment](ec)
