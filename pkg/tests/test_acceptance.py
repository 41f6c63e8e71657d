"""Acceptance suite: one test per numbered criterion, each logging a PASS/FAIL line.

Runtime budgets are part of each criterion and are checked against wall time.
"""

import math
import time

import numpy as np
import pytest
import scipy.linalg as sla

from slag_glue import cli
from slag_glue.exterior_algebra import (
    calibration_identity_check,
    holomorphic_three_form,
    standard_symplectic_form,
)
from slag_glue.experiments import (
    ExperimentConfig,
    error_scaling,
    fitted_slope,
    mean_curvature_sweep,
    random_neck_points,
    spread,
)
from slag_glue.gluing_model import GluingConfig, error_density, error_density_from_frame, omega_restriction, tangent_frame
from slag_glue.neck_grid import build_grid, error_norm
from slag_glue.slag_solver import (
    GraphPotential,
    det_hess_bound_check,
    linearization,
    norm22,
    slag_residual,
    solve,
    solver_operator,
)
from slag_glue.spectral import (
    assemble,
    first_eigenvalue,
    random_field,
    verify_elliptic_estimates,
    verify_lp_bound,
)

SWEEP = (1e-1, 10**-1.5, 1e-2, 10**-2.5, 1e-3)
THREE = (1e-1, 1e-2, 1e-3)


def test_criterion_01_lagrangian_identity(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0
    for delta in THREE:
        cfg = GluingConfig(delta)
        pts = random_neck_points(cfg, 10_000, rng)
        worst = max(worst, float(np.max(np.abs(omega_restriction(tangent_frame(pts, cfg))))))
    wall = time.perf_counter() - start
    ok = criterion(1, worst <= 1e-12 and wall < 5.0, f"max |omega(Ei,Ej)| = {worst:.2e} (<= 1e-12), {wall:.2f} s (< 5 s)")
    assert ok


def test_criterion_02_calibration_identity(criterion):
    start = time.perf_counter()
    re, im = holomorphic_three_form()
    residual = calibration_identity_check(standard_symplectic_form(), re, im)
    wall = time.perf_counter() - start
    ok = criterion(2, residual <= 1e-12 and wall < 1.0, f"residual = {residual:.2e} (<= 1e-12), {wall:.3f} s (< 1 s)")
    assert ok


def test_criterion_03_error_support_and_scaling(criterion):
    start = time.perf_counter()
    ec = ExperimentConfig(experiment="error_scaling", delta_list=list(SWEEP), resolutions=(128, 16, 8), seed=0)
    result = error_scaling(ec)
    wall = time.perf_counter() - start
    checks = {c.name: c for c in result.checks}
    support = checks["error_support"].passed
    slope = result.summary["fitted_slope"]
    scaled = result.summary["log_scaled_spread"]
    ok = support and 0.9 <= slope <= 1.2 and scaled <= 1.2 and wall < 120.0
    detail = (
        f"support {'ok' if support else 'violated'}; slope {slope:.4f} (window [0.9, 1.2]); "
        f"log-scaled max/min {scaled:.4f} (<= 1.2); {wall:.1f} s (< 120 s)"
    )
    criterion(3, ok, detail)
    assert ok


def test_criterion_04_two_path_consistency(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    mismatch = 0.0
    for delta in THREE:
        cfg = GluingConfig(delta)
        pts = random_neck_points(cfg, 1000, rng)
        mismatch = max(mismatch, float(np.max(np.abs(error_density(pts, cfg) - error_density_from_frame(pts, cfg)))))
    cfg = GluingConfig(0.01)
    coarse, fine = build_grid(cfg, 64, 16, 8), build_grid(cfg, 128, 32, 16)
    res = slag_residual(GraphPotential.zero(coarse), cfg, coarse).l2_norm
    l2_coarse, l2_fine = error_norm(cfg, coarse)[0], error_norm(cfg, fine)[0]
    truncation = abs(l2_coarse - l2_fine)
    gap = abs(res - l2_coarse)
    wall = time.perf_counter() - start
    ok = mismatch <= 1e-12 and gap <= 2.0 * truncation and wall < 120.0
    detail = (
        f"max density mismatch {mismatch:.2e} (<= 1e-12); |R(0)| - l2 gap {gap:.2e} "
        f"(<= 2 x truncation {truncation:.2e}); {wall:.1f} s (< 120 s)"
    )
    criterion(4, ok, detail)
    assert ok


def test_criterion_05_spectral_uniformity(criterion):
    start = time.perf_counter()
    lams = []
    for delta in SWEEP:
        cfg = GluingConfig(delta)
        lams.append(first_eigenvalue(assemble(build_grid(cfg, 64, 32, 16), cfg)).lambda1)
    oracle_gap = 0.0
    for delta in SWEEP:
        cfg = GluingConfig(delta)
        op = assemble(build_grid(cfg, 8, 8, 8), cfg)
        dense = sla.eigh(op.stiffness.toarray(), np.diag(op.mass), eigvals_only=True)[1]
        oracle_gap = max(oracle_gap, abs(first_eigenvalue(op).lambda1 - dense) / dense)
    wall = time.perf_counter() - start
    lo, hi = min(lams), max(lams)
    ok = lo > 0.0 and lo >= 0.5 * hi and oracle_gap <= 1e-8 and wall < 600.0
    detail = f"lambda1 in [{lo:.6f}, {hi:.6f}] (min >= 0.5 max); dense-oracle rel gap {oracle_gap:.1e} (<= 1e-8); {wall:.1f} s (< 600 s)"
    criterion(5, ok, detail)
    assert ok


def test_criterion_06_elliptic_constant_uniformity(criterion):
    start = time.perf_counter()
    cols = {"c_L2": [], "c_L4": [], "c22": [], "c42": []}
    for delta in SWEEP:
        cfg = GluingConfig(delta)
        op = assemble(build_grid(cfg, 64, 32, 16), cfg)
        cols["c_L2"].append(verify_lp_bound(op, 2.0, 50, seed=0))
        cols["c_L4"].append(verify_lp_bound(op, 4.0, 50, seed=0))
        c22, c42 = verify_elliptic_estimates(op, 50, seed=0)
        cols["c22"].append(c22)
        cols["c42"].append(c42)
    wall = time.perf_counter() - start
    spreads = {k: spread(v) for k, v in cols.items()}
    ok = all(s <= 3.0 for s in spreads.values()) and wall < 900.0
    detail = ", ".join(f"{k} max/min {s:.3f}" for k, s in spreads.items()) + f" (each <= 3); {wall:.1f} s (< 900 s)"
    criterion(6, ok, detail)
    assert ok


def test_criterion_07_linearization_and_quadraticity(criterion):
    start = time.perf_counter()
    cfg = GluingConfig(0.01)
    grid = build_grid(cfg, 64, 16, 8)
    op = solver_operator(cfg, grid)
    zero = GraphPotential.zero(grid)
    h = GraphPotential(random_field(grid, np.random.default_rng(2), compact=True))
    L = linearization(zero, cfg, grid, op).apply(h).values
    R0 = slag_residual(zero, cfg, grid, op).residual_field.values
    eps = np.array([1e-2, 1e-3, 1e-4])
    fd_err = []
    for e in eps:
        Re = slag_residual(GraphPotential(h.F * e), cfg, grid, op).residual_field.values
        fd_err.append(math.sqrt(np.sum(grid.weights * ((Re - R0) / e - L) ** 2)))
    slope_fd = fitted_slope(eps, fd_err)
    scales = np.array([0.5, 1.0, 2.0, 4.0])
    nonlinear = [slag_residual(GraphPotential(h.F * s), cfg, grid, op).nonlinear_part_norm for s in scales]
    slope_q = fitted_slope(scales, nonlinear)
    wall = time.perf_counter() - start
    ok = abs(slope_fd - 1.0) <= 0.05 and abs(slope_q - 2.0) <= 0.05 and wall < 120.0
    detail = f"FD Jacobian error slope {slope_fd:.4f} (first order); nonlinear slope {slope_q:.4f} (2 +- 0.05); {wall:.1f} s (< 120 s)"
    criterion(7, ok, detail)
    assert ok


def test_criterion_08_det_hess_bound(criterion):
    start = time.perf_counter()
    integrals = []
    for delta in SWEEP:
        cfg = GluingConfig(delta)
        integrals.append(det_hess_bound_check(cfg, build_grid(cfg, 128, 16, 8)))
    ratios = [i / d**2 for i, d in zip(integrals, SWEEP)]
    wall = time.perf_counter() - start
    decreasing = all(b < a for a, b in zip(integrals, integrals[1:]))
    # bounded: the ratio never exceeds its value at the largest delta
    bounded = max(ratios) <= ratios[0]
    ok = decreasing and bounded and wall < 60.0
    detail = (
        "integral/delta^2 along sweep: " + ", ".join(f"{r:.4f}" for r in ratios)
        + f" (decreasing integral: {decreasing}, bounded by first: {bounded}); {wall:.1f} s (< 60 s)"
    )
    criterion(8, ok, detail)
    assert ok


def test_criterion_09_contraction_and_fixed_point(criterion):
    start = time.perf_counter()
    worst_ratio, worst_bound, worst_reduction = 0.0, 0.0, 0.0
    for delta in (0.05, 0.01, 0.001):
        cfg = GluingConfig(delta)
        res = solve(cfg, build_grid(cfg, 64, 16, 8))
        worst_ratio = max([worst_ratio] + [r.contraction_ratio for r in res.trace[1:]])
        worst_bound = max(worst_bound, norm22(res.potential) / (2.0 * res.w0_norm))
        worst_reduction = max(worst_reduction, res.report.l2_norm / res.initial_residual)
    wall = time.perf_counter() - start
    ok = worst_ratio <= 0.5 and worst_bound <= 1.0 and worst_reduction <= 1e-6 and wall < 600.0
    detail = (
        f"max ratio after first step {worst_ratio:.4f} (<= 0.5); max ||h*|| / (2||W(0)||) {worst_bound:.4f} (<= 1); "
        f"max final/initial residual {worst_reduction:.1e} (<= 1e-6); {wall:.1f} s (< 600 s)"
    )
    criterion(9, ok, detail)
    assert ok


def test_criterion_10_mean_curvature_decay(criterion):
    start = time.perf_counter()
    ec = ExperimentConfig(experiment="mean_curvature", delta_list=list(THREE), resolutions=(64, 16, 8))
    values = mean_curvature_sweep(ec).summary["h_l2_sq"]
    wall = time.perf_counter() - start
    ok = all(b < a for a, b in zip(values, values[1:])) and wall < 60.0
    criterion(10, ok, "||H||^2 along sweep: " + ", ".join(f"{v:.4e}" for v in values) + f" (strictly decreasing); {wall:.1f} s (< 60 s)")
    assert ok


DETERMINISM_CONFIG = """[run]
delta_list = 0.1, 0.01, 0.001
resolutions = 16, 8, 8
seed = 11
samples = 500
trials = 3
"""


@pytest.mark.parametrize("experiment", cli.EXPERIMENTS)
def test_criterion_11_determinism(experiment, criterion, tmp_path, request):
    path = tmp_path / "run.ini"
    path.write_text(DETERMINISM_CONFIG)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        cli.run(str(path), str(out), None, experiment)
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    same = bool(names) and all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    state = request.config.stash.setdefault(_DETERMINISM, {})
    state[experiment] = same
    done = len(state) == len(cli.EXPERIMENTS)
    if done or not same:
        bad = [k for k, v in state.items() if not v]
        criterion(11, not bad and done, f"{sum(state.values())}/{len(state)} experiments byte-identical" + (f"; differing: {bad}" if bad else ""))
    assert same


_DETERMINISM = pytest.StashKey[dict]()
