"""Tensor-product grid on the neck annulus times a circle, with weighted norms.

Radial nodes are uniform in s = log r on [log delta, log sqrt(delta)], so each
scale of the annulus gets the same number of nodes; theta and kappa are
uniform and periodic.  Quadrature weights include the volume density of the
chosen metric, so sums over weights are integrals against dvol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .gluing_model import GluingConfig, NeckPoint, error_density, induced_metric

MEASURES = ("induced", "conformal", "flat")
QUADRATURES = ("simpson", "trapezoid")


def _simpson_weights(n: int) -> np.ndarray:
    """Extended Simpson weights of fourth order for any n >= 8 (unit spacing)."""
    if n < 8:
        raise ConfigError(f"radial resolution must be >= 8, got {n}")
    w = np.ones(n)
    ends = np.array([17.0, 59.0, 43.0, 49.0]) / 48.0
    w[:4] = ends
    w[-4:] = ends[::-1]
    return w


def _trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def _first_derivative(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    d = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], shape=(n, n), format="lil")
    if periodic:
        d[0, n - 1] = -1.0
        d[n - 1, 0] = 1.0
    else:
        d[0, :3] = [-3.0, 4.0, -1.0]
        d[n - 1, n - 3:] = [1.0, -4.0, 3.0]
    return (d / (2.0 * h)).tocsr()


def _second_derivative(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    d = sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], shape=(n, n), format="lil")
    if periodic:
        d[0, n - 1] = 1.0
        d[n - 1, 0] = 1.0
    else:
        d[0, :] = 0.0
        d[n - 1, :] = 0.0
        d[0, :4] = [2.0, -5.0, 4.0, -1.0]
        d[n - 1, n - 4:] = [-1.0, 4.0, -5.0, 2.0]
    return (d / (h * h)).tocsr()


@dataclass(eq=False)
class NeckGrid:
    """Nodes, metric samples and quadrature weights on the neck.

    Arrays are indexed ``[i_s, i_theta, i_kappa]``; flattened vectors use C
    order over the same axes.
    """

    cfg: GluingConfig
    n_r: int
    n_theta: int
    n_kappa: int
    kappa_length: float
    measure: str
    quadrature: str
    s_nodes: np.ndarray
    theta_nodes: np.ndarray
    kappa_nodes: np.ndarray
    s_weights: np.ndarray
    g11: np.ndarray
    g22: np.ndarray
    g33: np.ndarray
    sqrt_det: np.ndarray
    weights: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_r, self.n_theta, self.n_kappa)

    @property
    def size(self) -> int:
        return self.n_r * self.n_theta * self.n_kappa

    @property
    def r_nodes(self) -> np.ndarray:
        return np.exp(self.s_nodes)

    @property
    def h_s(self) -> float:
        return float(self.s_nodes[1] - self.s_nodes[0])

    @property
    def h_theta(self) -> float:
        return 2.0 * math.pi / self.n_theta

    @property
    def h_kappa(self) -> float:
        return self.kappa_length / self.n_kappa

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(R, THETA, KAPPA) broadcast to the full grid shape."""
        return tuple(
            np.ascontiguousarray(a)
            for a in np.meshgrid(self.r_nodes, self.theta_nodes, self.kappa_nodes, indexing="ij")
        )

    @cached_property
    def points(self) -> NeckPoint:
        R, T, K = self.mesh
        return NeckPoint(R * np.cos(T), R * np.sin(T), K)

    @property
    def volume(self) -> float:
        return float(self.weights.sum())

    def ring_mask(self) -> np.ndarray:
        """True on the two radial boundary rings."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[0] = mask[-1] = True
        return mask

    def sample(self, fn) -> "ScalarField":
        """Field with values ``fn(points)`` for a vectorised function of a NeckPoint."""
        return ScalarField(self, np.broadcast_to(fn(self.points), self.shape))

    def field(self, values) -> "ScalarField":
        return ScalarField(self, values)

    # -------------------------------------------------------- derivatives

    @cached_property
    def _ops_1d(self) -> dict[str, sp.csr_matrix]:
        return {
            "s": _first_derivative(self.n_r, self.h_s, periodic=False),
            "ss": _second_derivative(self.n_r, self.h_s, periodic=False),
            "t": _first_derivative(self.n_theta, self.h_theta, periodic=True),
            "tt": _second_derivative(self.n_theta, self.h_theta, periodic=True),
            "k": _first_derivative(self.n_kappa, self.h_kappa, periodic=True),
            "kk": _second_derivative(self.n_kappa, self.h_kappa, periodic=True),
        }

    def _kron(self, a=None, b=None, c=None) -> sp.csr_matrix:
        mats = [
            a if a is not None else sp.identity(self.n_r),
            b if b is not None else sp.identity(self.n_theta),
            c if c is not None else sp.identity(self.n_kappa),
        ]
        return sp.kron(sp.kron(mats[0], mats[1]), mats[2], format="csr")

    @cached_property
    def log_polar_ops(self) -> dict[str, sp.csr_matrix]:
        """Sparse difference operators in (s, theta, kappa) on flattened fields."""
        o = self._ops_1d
        return {
            "s": self._kron(a=o["s"]),
            "t": self._kron(b=o["t"]),
            "k": self._kron(c=o["k"]),
            "ss": self._kron(a=o["ss"]),
            "tt": self._kron(b=o["tt"]),
            "kk": self._kron(c=o["kk"]),
            "st": self._kron(a=o["s"], b=o["t"]),
            "sk": self._kron(a=o["s"], c=o["k"]),
            "tk": self._kron(b=o["t"], c=o["k"]),
        }

    @cached_property
    def cartesian_ops(self) -> dict[str, sp.csr_matrix]:
        """Sparse operators for the coordinate partials x, y, kappa up to order two."""
        L = self.log_polar_ops
        R, T, _ = self.mesh
        c, s = np.cos(T).ravel(), np.sin(T).ravel()
        ir = 1.0 / R.ravel()
        ir2 = ir * ir

        def diag(a):
            return sp.diags(a)

        rad = diag(c * ir) @ L["s"] - diag(s * ir) @ L["t"]
        ops = {
            "x": rad,
            "y": diag(s * ir) @ L["s"] + diag(c * ir) @ L["t"],
            "k": L["k"],
        }
        f_rr = L["ss"] - L["s"]  # times 1/r^2
        f_tan = L["s"] + L["tt"]  # (f_r / r + f_tt / r^2) times r^2
        f_mix = L["st"] - L["t"]  # (f_rt / r - f_t / r^2) times r^2
        ops["xx"] = diag(ir2) @ (diag(c * c) @ f_rr + diag(s * s) @ f_tan - diag(2 * s * c) @ f_mix)
        ops["yy"] = diag(ir2) @ (diag(s * s) @ f_rr + diag(c * c) @ f_tan + diag(2 * s * c) @ f_mix)
        ops["xy"] = diag(ir2) @ (diag(s * c) @ (L["ss"] - 2 * L["s"] - L["tt"]) + diag(c * c - s * s) @ f_mix)
        ops["xk"] = diag(c * ir) @ L["sk"] - diag(s * ir) @ L["tk"]
        ops["yk"] = diag(s * ir) @ L["sk"] + diag(c * ir) @ L["tk"]
        ops["kk"] = L["kk"]
        return {k: v.tocsr() for k, v in ops.items()}

    def metric_scale(self, name: str) -> np.ndarray:
        """sqrt of the product of metric components for the partial ``name``."""
        comp = {"x": self.g11, "y": self.g22, "k": self.g33}
        out = np.ones(self.shape)
        for ch in name:
            out = out * np.sqrt(comp[ch])
        return out


FIRST_ORDER = ("x", "y", "k")
SECOND_ORDER = ("xx", "yy", "kk", "xy", "xk", "yk")


@dataclass(eq=False)
class ScalarField:
    """Grid-sampled real function; ``values`` has the grid shape."""

    grid: NeckGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.size != self.grid.size:
            raise ValueError(f"field has {v.size} values, grid has {self.grid.size} nodes")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite values")
        self.values = v

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return self.with_values(self.values - other.values)

    def __mul__(self, a: float) -> "ScalarField":
        return self.with_values(a * self.values)

    __rmul__ = __mul__

    def integral(self) -> float:
        return float(np.sum(self.grid.weights * self.values))

    def mean(self) -> float:
        return self.integral() / self.grid.volume

    def inner(self, other: "ScalarField") -> float:
        return float(np.sum(self.grid.weights * self.values * other.values))

    def partial(self, name: str, metric_aware: bool = True) -> np.ndarray:
        """Coordinate partial derivative, divided by metric scale factors if asked."""
        d = (self.grid.cartesian_ops[name] @ self.flat).reshape(self.grid.shape)
        return d / self.grid.metric_scale(name) if metric_aware else d

    def to_csv(self, path) -> None:
        """Write columns r, theta, kappa, value, weight with 17 significant digits."""
        R, T, K = self.grid.mesh
        data = np.column_stack([R.ravel(), T.ravel(), K.ravel(), self.flat, self.grid.weights.ravel()])
        np.savetxt(path, data, fmt="%.16e", delimiter=",", header="r,theta,kappa,value,weight", comments="")


def build_grid(
    cfg: GluingConfig,
    n_r: int,
    n_theta: int,
    n_kappa: int,
    *,
    measure: str = "induced",
    quadrature: str = "simpson",
    kappa_length: float = 2.0 * math.pi,
) -> NeckGrid:
    """Grid on [delta, sqrt(delta)] x circle x circle with dvol weights.

    ``measure`` selects the volume density: the induced metric of the glued
    graph, the conformally flat model metric mu (dx^2 + dy^2) + A dkappa^2
    with mu = 1 + delta^4 / (4 r^4), or the flat metric.
    """
    if not isinstance(cfg, GluingConfig):
        raise ConfigError("cfg must be a GluingConfig")
    for label, n in (("n_r", n_r), ("n_theta", n_theta), ("n_kappa", n_kappa)):
        if int(n) != n or n < 8:
            raise ConfigError(f"{label} must be an integer >= 8, got {n!r}")
    if measure not in MEASURES:
        raise ConfigError(f"measure must be one of {MEASURES}, got {measure!r}")
    if quadrature not in QUADRATURES:
        raise ConfigError(f"quadrature must be one of {QUADRATURES}, got {quadrature!r}")
    if not kappa_length > 0.0:
        raise ConfigError("kappa_length must be positive")

    s = np.linspace(math.log(cfg.r_inner), math.log(cfg.r_outer), n_r)
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
    kappa = kappa_length * np.arange(n_kappa) / n_kappa
    shape = (n_r, n_theta, n_kappa)
    R, T, K = np.meshgrid(np.exp(s), theta, kappa, indexing="ij")

    if measure == "induced":
        m = induced_metric(NeckPoint(R * np.cos(T), R * np.sin(T), K), cfg)
        g11, g22, g33, sqrt_det = (np.broadcast_to(a, shape).copy() for a in (m.g11, m.g22, m.g33, m.sqrt_det))
    else:
        mu = 1.0 + cfg.delta**4 / (4.0 * R**4) if measure == "conformal" else np.ones(shape)
        g11 = mu
        g22 = mu.copy()
        g33 = np.full(shape, cfg.area_factor_A)
        sqrt_det = mu * math.sqrt(cfg.area_factor_A)

    h_s = s[1] - s[0]
    w_1d = _simpson_weights(n_r) if quadrature == "simpson" else _trapezoid_weights(n_r)
    s_weights = w_1d * h_s
    h_t = 2.0 * math.pi / n_theta
    h_k = kappa_length / n_kappa
    weights = sqrt_det * R**2 * s_weights[:, None, None] * h_t * h_k
    return NeckGrid(
        cfg=cfg,
        n_r=int(n_r),
        n_theta=int(n_theta),
        n_kappa=int(n_kappa),
        kappa_length=float(kappa_length),
        measure=measure,
        quadrature=quadrature,
        s_nodes=s,
        theta_nodes=theta,
        kappa_nodes=kappa,
        s_weights=s_weights,
        g11=g11,
        g22=g22,
        g33=g33,
        sqrt_det=sqrt_det,
        weights=weights,
    )


def derivative_norms(
    f: ScalarField, p: float = 2.0, *, metric_aware: bool = True, exclude_ring: bool = True
) -> tuple[float, float, float]:
    """L^p norms of f, of its first partials and of its second partials.

    Each derivative order sums |partial|^p over the multi-indices of that
    order.  With ``exclude_ring`` the two radial boundary rings, where the
    stencils are one-sided, are left out of the derivative sums.
    """
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    w = f.grid.weights
    wd = np.where(f.grid.ring_mask(), 0.0, w) if exclude_ring else w
    parts = [np.sum(w * np.abs(f.values) ** p)]
    for names in (FIRST_ORDER, SECOND_ORDER):
        parts.append(sum(np.sum(wd * np.abs(f.partial(n, metric_aware)) ** p) for n in names))
    return tuple(float(a) ** (1.0 / p) for a in parts)


def norm_lp_k(
    f: ScalarField, p: float, k: int, *, metric_aware: bool = True, exclude_ring: bool = True
) -> float:
    """(integral of sum over |nu| <= k of |d^nu f|^p dvol)^(1/p)."""
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    if k not in (0, 1, 2):
        raise ValueError(f"k must be 0, 1 or 2, got {k}")
    if k == 0:
        return float(np.sum(f.grid.weights * np.abs(f.values) ** p)) ** (1.0 / p)
    parts = derivative_norms(f, p, metric_aware=metric_aware, exclude_ring=exclude_ring)
    return float(sum(a**p for a in parts[: k + 1])) ** (1.0 / p)


def error_field(cfg: GluingConfig, grid: NeckGrid) -> ScalarField:
    return grid.sample(lambda pts: error_density(pts, cfg))


def error_norm(cfg: GluingConfig, grid: NeckGrid) -> tuple[float, float, float]:
    """(l2, l2_grad, l2_hess): the pieces of the L^2_2 norm of the error density."""
    return derivative_norms(error_field(cfg, grid), 2.0)
