"""Local model of the glued submanifold near the neck.

Near the neck the glued submanifold is the graph over the (x, y, kappa)
plane of the gradient of the potential

    G(x, y) with dG/dx = u = delta^2 beta x / (2 r^2),  dG/dy = v = delta^2 beta y / (2 r^2),

where beta is a radial cutoff equal to 1 on the inner part of the neck and 0
outside r = sqrt(delta).  Everything here is a pure, vectorised function of
the point coordinates and a :class:`GluingConfig`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError
from .exterior_algebra import DIM, evaluate, holomorphic_three_form, standard_symplectic_form


class Cutoff(enum.Enum):
    RAW_LOG = "raw_log"
    SMOOTHED_CLAMPED_LOG = "smoothed_clamped_log"
    # Test fixtures: constant cutoffs with zero error density.
    ONE = "one"
    ZERO = "zero"

    @classmethod
    def parse(cls, name: str) -> "Cutoff":
        key = name.strip().lower().replace("-", "_")
        for member in cls:
            if member.value == key or member.name.lower() == key:
                return member
        raise ConfigError(f"unknown cutoff {name!r}; choose from {[m.value for m in cls]}")


class Side(enum.Enum):
    FROM_L1 = "from_l1"
    FROM_L2 = "from_l2"


@dataclass(frozen=True)
class GluingConfig:
    """Gluing parameter, cutoff choice and local-model constants.

    ``blend_width`` is the fraction of the normalised log-radius
    ``log(r/delta) / log(sqrt(delta)/delta)`` over which the smoothed cutoff
    blends into the clamped values at each end of the neck.
    """

    delta: float
    cutoff: Cutoff = Cutoff.SMOOTHED_CLAMPED_LOG
    area_factor_A: float = 1.0
    blend_width: float = 0.1
    exact_metric: bool = False

    def __post_init__(self):
        if not (isinstance(self.delta, (int, float)) and 0.0 < self.delta < 1.0):
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta!r}")
        if not (self.area_factor_A > 0.0 and math.isfinite(self.area_factor_A)):
            raise ConfigError(f"area_factor_A must be positive, got {self.area_factor_A!r}")
        if not 0.0 < self.blend_width <= 0.5:
            raise ConfigError(f"blend_width must lie in (0, 0.5], got {self.blend_width!r}")
        if not isinstance(self.cutoff, Cutoff):
            object.__setattr__(self, "cutoff", Cutoff.parse(str(self.cutoff)))

    @property
    def r_inner(self) -> float:
        return self.delta

    @property
    def r_outer(self) -> float:
        return math.sqrt(self.delta)

    @property
    def log_span(self) -> float:
        """log(sqrt(delta) / delta) > 0."""
        return -0.5 * math.log(self.delta)


@dataclass(frozen=True)
class NeckPoint:
    """Point (x, y, kappa) of the base; fields may be arrays of equal shape."""

    x: np.ndarray | float
    y: np.ndarray | float
    kappa: np.ndarray | float = 0.0

    @classmethod
    def polar(cls, r, theta, kappa=0.0) -> "NeckPoint":
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        return cls(r * np.cos(theta), r * np.sin(theta), kappa)

    @property
    def r(self) -> np.ndarray:
        return np.hypot(self.x, self.y)


@dataclass(frozen=True)
class Frame3:
    """Three tangent vectors in R^6 (each may carry batch dimensions)."""

    E1: np.ndarray
    E2: np.ndarray
    E3: np.ndarray

    def as_list(self) -> list[np.ndarray]:
        return [self.E1, self.E2, self.E3]

    def gram_determinant(self) -> np.ndarray:
        m = np.stack(np.broadcast_arrays(self.E1, self.E2, self.E3), axis=-1)
        return np.linalg.det(np.swapaxes(m, -1, -2) @ m)


@dataclass(frozen=True)
class MetricSample:
    """Induced metric components at points of the neck.

    ``sqrt_det`` uses the diagonal components unless the config asked for the
    exact first fundamental form, in which case the dx dy cross term ``g12``
    is included.
    """

    g11: np.ndarray
    g22: np.ndarray
    g33: np.ndarray
    sqrt_det: np.ndarray
    g12: np.ndarray


@dataclass(frozen=True)
class GraphJacobian:
    """Values and first partials of the graph functions (u, v) = grad G."""

    u: np.ndarray
    v: np.ndarray
    u_x: np.ndarray
    u_y: np.ndarray
    v_x: np.ndarray
    v_y: np.ndarray


# ---------------------------------------------------------------- cutoff


def _smoothstep(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Monotone C^3 step 35t^4 - 84t^5 + 70t^6 - 20t^7 on [0, 1], with its derivative."""
    t = np.clip(t, 0.0, 1.0)
    s = t**4 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)))
    ds = 140.0 * t**3 * (1.0 - t) ** 3
    return s, ds


def normalized_log_radius(r, cfg: GluingConfig) -> np.ndarray:
    """0 at r = delta, 1 at r = sqrt(delta)."""
    return np.log(np.asarray(r, dtype=float) / cfg.delta) / cfg.log_span


def cutoff_beta(r, cfg: GluingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Radial cutoff beta(r) and d beta / dr."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0) or not np.all(np.isfinite(r)):
        raise ValueError("cutoff radius must be positive and finite")
    if cfg.cutoff is Cutoff.ONE:
        return np.ones_like(r), np.zeros_like(r)
    if cfg.cutoff is Cutoff.ZERO:
        return np.zeros_like(r), np.zeros_like(r)
    span = cfg.log_span
    u = normalized_log_radius(r, cfg)
    if cfg.cutoff is Cutoff.RAW_LOG:
        return 1.0 - u, np.full_like(r, -1.0) / (r * span)

    w = cfg.blend_width
    beta = np.where(u <= 0.0, 1.0, 0.0)
    dbeta_du = np.zeros_like(r)

    inner = (u > 0.0) & (u < w)
    s, ds = _smoothstep(u[inner] / w)
    beta[inner] = 1.0 - s * u[inner]
    dbeta_du[inner] = -(ds * u[inner] / w + s)

    middle = (u >= w) & (u <= 1.0 - w)
    beta[middle] = 1.0 - u[middle]
    dbeta_du[middle] = -1.0

    outer = (u > 1.0 - w) & (u < 1.0)
    s, ds = _smoothstep((u[outer] - (1.0 - w)) / w)
    beta[outer] = (1.0 - s) * (1.0 - u[outer])
    dbeta_du[outer] = -(ds / w) * (1.0 - u[outer]) - (1.0 - s)

    return beta, dbeta_du / (r * span)


def cutoff_xy(x, y, cfg: GluingConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """beta and its Cartesian partials (beta_x, beta_y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    beta, db = cutoff_beta(r, cfg)
    return beta, db * x / r, db * y / r


# ---------------------------------------------------------------- graph data


def graph_jacobian(x, y, delta: float, beta, beta_x, beta_y) -> GraphJacobian:
    """(u, v) = delta^2 beta (x, y) / (2 r^2) and exact first partials.

    Accepts an arbitrary (not necessarily radial) cutoff through its values
    and partials, which is what the non-radial negative tests use.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x * x + y * y
    if np.any(r2 <= 0.0):
        raise ValueError("graph functions are singular at r = 0")
    h = delta * delta / (2.0 * r2)
    r4 = r2 * r2
    d2 = delta * delta
    u = h * beta * x
    v = h * beta * y
    u_x = h * beta_x * x + d2 * beta * (y * y - x * x) / (2.0 * r4)
    u_y = h * beta_y * x - d2 * beta * x * y / r4
    v_x = h * beta_x * y - d2 * beta * x * y / r4
    v_y = h * beta_y * y + d2 * beta * (x * x - y * y) / (2.0 * r4)
    return GraphJacobian(u, v, u_x, u_y, v_x, v_y)


def point_jacobian(p: NeckPoint, cfg: GluingConfig) -> GraphJacobian:
    beta, bx, by = cutoff_xy(p.x, p.y, cfg)
    return graph_jacobian(p.x, p.y, cfg.delta, beta, bx, by)


def frame_from_jacobian(jac: GraphJacobian) -> Frame3:
    shape = np.shape(jac.u_x)
    E1 = np.zeros(shape + (DIM,))
    E2 = np.zeros(shape + (DIM,))
    E3 = np.zeros(shape + (DIM,))
    E1[..., 0] = 1.0
    E1[..., 4] = jac.u_x
    E1[..., 5] = jac.v_x
    E2[..., 1] = 1.0
    E2[..., 4] = jac.u_y
    E2[..., 5] = jac.v_y
    E3[..., 2] = 1.0
    return Frame3(E1, E2, E3)


def tangent_frame(p: NeckPoint, cfg: GluingConfig) -> Frame3:
    """Coordinate tangent frame of the graph of grad G at ``p``."""
    return frame_from_jacobian(point_jacobian(p, cfg))


def omega_restriction(frame: Frame3) -> np.ndarray:
    """omega on the pairs (E1, E2), (E1, E3), (E2, E3), stacked on the last axis."""
    omega = standard_symplectic_form()
    pairs = [(frame.E1, frame.E2), (frame.E1, frame.E3), (frame.E2, frame.E3)]
    return np.stack([np.asarray(evaluate(omega, list(pair))) for pair in pairs], axis=-1)


def error_density(p: NeckPoint, cfg: GluingConfig) -> np.ndarray:
    """Im xi restricted to the graph, from the closed form beta_x x + beta_y y.

    For a radial cutoff this is (delta^2 / 2 r^2) r beta'(r); it vanishes
    wherever beta is locally constant.
    """
    x = np.asarray(p.x, dtype=float)
    y = np.asarray(p.y, dtype=float)
    r2 = x * x + y * y
    if np.any(r2 <= 0.0):
        raise ValueError("error density is undefined at r = 0")
    _, bx, by = cutoff_xy(x, y, cfg)
    return cfg.delta**2 / (2.0 * r2) * (bx * x + by * y)


def error_density_from_frame(p: NeckPoint, cfg: GluingConfig) -> np.ndarray:
    """Im xi evaluated on the tangent frame through the exterior-algebra kernel."""
    _, im_xi = holomorphic_three_form()
    return np.asarray(evaluate(im_xi, tangent_frame(p, cfg).as_list()))


def mirrored_side_frame(p: NeckPoint, cfg: GluingConfig) -> Frame3:
    """Tangent frame of the graph built from the second sheet.

    Here (p.x, p.y) are read as the (u, v) coordinates of the second plane and
    the graph is (x, y) = delta^2 beta (u, v) / (2 rho^2) over it.
    """
    jac = point_jacobian(p, cfg)
    shape = np.shape(jac.u_x)
    F1 = np.zeros(shape + (DIM,))
    F2 = np.zeros(shape + (DIM,))
    F3 = np.zeros(shape + (DIM,))
    F1[..., 4] = 1.0
    F1[..., 0] = jac.u_x
    F1[..., 1] = jac.v_x
    F2[..., 5] = 1.0
    F2[..., 0] = jac.u_y
    F2[..., 1] = jac.v_y
    F3[..., 2] = 1.0
    return Frame3(F1, F2, F3)


def induced_metric(p: NeckPoint, cfg: GluingConfig, exact: bool | None = None) -> MetricSample:
    """First fundamental form of the graph in (x, y, kappa) coordinates."""
    exact = cfg.exact_metric if exact is None else exact
    jac = point_jacobian(p, cfg)
    g11 = 1.0 + jac.u_x**2 + jac.v_x**2
    g22 = 1.0 + jac.u_y**2 + jac.v_y**2
    g12 = jac.u_x * jac.u_y + jac.v_x * jac.v_y
    g33 = np.full_like(g11, cfg.area_factor_A)
    planar = g11 * g22 - g12 * g12 if exact else g11 * g22
    return MetricSample(g11, g22, g33, np.sqrt(planar * g33), g12)


def metric_discrepancy(p: NeckPoint, cfg: GluingConfig) -> np.ndarray:
    """Exact minus diagonal volume density (the diagonal form drops g12)."""
    return induced_metric(p, cfg, exact=True).sqrt_det - induced_metric(p, cfg, exact=False).sqrt_det


def det_hess_G(p: NeckPoint, cfg: GluingConfig) -> np.ndarray:
    """det Hess G = u_x v_y - u_y v_x."""
    jac = point_jacobian(p, cfg)
    return jac.u_x * jac.v_y - jac.u_y * jac.v_x


def laplacian_G(p: NeckPoint, cfg: GluingConfig) -> np.ndarray:
    """Flat Laplacian of G, u_x + v_y (equal to the error density)."""
    jac = point_jacobian(p, cfg)
    return jac.u_x + jac.v_y


# ---------------------------------------------------------------- chart


def chart_point(kappa: float, z: complex, side: Side, cfg: GluingConfig) -> tuple[float, complex, complex]:
    """Point (kappa, z1, z2) of the connected sum parametrised from one sheet.

    ``z`` is the coordinate on the sheet named by ``side``; the partner
    coordinate is 0 outside the neck, delta^2 / (2 conj z) on the middle band
    delta/2 < |z| <= delta and beta delta^2 / (2 conj z) elsewhere inside.
    """
    z = complex(z)
    a = abs(z)
    root = math.sqrt(cfg.delta)
    if a >= root:
        partner = 0j
    elif a == 0.0:
        raise DomainError("the chart is singular at z = 0 inside the neck")
    else:
        d2 = cfg.delta**2
        if cfg.delta / 2.0 < a <= cfg.delta:
            beta = 1.0
        else:
            beta = float(cutoff_beta(np.array([a]), cfg)[0][0])
        partner = beta * d2 / (2.0 * z.conjugate())
    if side is Side.FROM_L1:
        return kappa, z, partner
    return kappa, partner, z


# ---------------------------------------------------------------- mean curvature


def _zero3(t) -> np.ndarray:
    return np.zeros(np.shape(t) + (3,), dtype=complex)


@dataclass(frozen=True)
class CurveModel:
    """Curve c(t) in C^3 with normal frames V1, V2, through second derivatives.

    The callables return complex arrays of shape ``t.shape + (3,)``.  The
    bounds are uniform bounds on the supplied second derivatives.
    """

    c_dd: Callable[[np.ndarray], np.ndarray]
    V1_dd: Callable[[np.ndarray], np.ndarray] = _zero3
    V2_dd: Callable[[np.ndarray], np.ndarray] = _zero3
    c_dd_bound: float = 0.0
    V1_dd_bound: float = 0.0
    V2_dd_bound: float = 0.0
    bound_Z: float = 1.0
    name: str = field(default="custom")

    def __post_init__(self):
        for label in ("c_dd_bound", "V1_dd_bound", "V2_dd_bound", "bound_Z"):
            value = getattr(self, label)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{label} must be finite and non-negative, got {value!r}")

    @classmethod
    def straight(cls) -> "CurveModel":
        return cls(c_dd=_zero3, name="straight")

    @classmethod
    def circle(cls, radius: float = 1.0, bound_Z: float = 1.0) -> "CurveModel":
        """Unit-speed circle of the given radius in the first two real directions."""
        if radius <= 0.0:
            raise ValueError("radius must be positive")

        def c_dd(t):
            t = np.asarray(t, dtype=float)
            out = _zero3(t)
            out[..., 0] = -np.cos(t / radius) / radius
            out[..., 1] = -np.sin(t / radius) / radius
            return out

        return cls(c_dd=c_dd, c_dd_bound=1.0 / radius, bound_Z=bound_Z, name=f"circle(R={radius:g})")


def complex3_to_vec6(w: np.ndarray) -> np.ndarray:
    """(w1, w2, w3) -> real coordinates with w1 = x1 + i x5, w2 = x2 + i x6, w3 = x3 + i x4."""
    w = np.asarray(w, dtype=complex)
    out = np.empty(w.shape[:-1] + (DIM,))
    out[..., 0] = w[..., 0].real
    out[..., 1] = w[..., 1].real
    out[..., 2] = w[..., 2].real
    out[..., 3] = w[..., 2].imag
    out[..., 4] = w[..., 0].imag
    out[..., 5] = w[..., 1].imag
    return out


def mean_curvature_terms(p: NeckPoint, curve: CurveModel, cfg: GluingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Order-one and order-delta^2 terms of the mean curvature expansion (complex, C^3).

    The curve parameter is the kappa coordinate; the O(delta^4) remainder is
    not modelled.
    """
    z1 = np.asarray(p.x, dtype=float) + 1j * np.asarray(p.y, dtype=float)
    if np.any(z1 == 0):
        raise DomainError("mean curvature expansion is singular at z1 = 0")
    t = np.broadcast_to(np.asarray(p.kappa, dtype=float), z1.shape)
    c_dd = curve.c_dd(t)
    v1 = curve.V1_dd(t)
    v2 = curve.V2_dd(t)
    w = 1.0 + np.abs(z1) ** 2
    first = (c_dd + z1[..., None] * v1) / w[..., None]
    second = cfg.delta**2 * (-curve.bound_Z * c_dd + v2 / (z1 * w)[..., None])
    return first, second


def mean_curvature_leading(p: NeckPoint, curve: CurveModel, cfg: GluingConfig) -> np.ndarray:
    """Sum of the two modelled terms as a real 6-vector (batch dims allowed)."""
    first, second = mean_curvature_terms(p, curve, cfg)
    return complex3_to_vec6(first + second)
