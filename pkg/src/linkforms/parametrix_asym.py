"""Small-time heat asymptotics near a curve in flat 3-space.

Tube coordinates around a curve L are (s, r, theta): the foot point c(s), the
distance r, and the angle theta in the normal plane measured from the first
normal vector n1.  For a circle n1 points to the centre, so the volume
Jacobian is j = 1 - (r / rho) cos(theta).  The normal frame (n1, n2) together
with the unit tangent T is positively oriented.

The recursion fields eta_i are 2-forms written in the frame basis
(n1^n2, n1^T, n2^T).  Their frame components do not depend on s for the three
supported curves (line, circle, coordinate geodesic of T^3), so each field is
stored once as a 2D Chebyshev series in the normal-plane coordinates
(a, b) = (r cos theta, r sin theta) and evaluated anywhere in the tube.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy import integrate
from scipy.special import ive

from . import formtools as ft
from .euclid_kernels import heat_evolve_components, heat_quadrature_size
from .curves import Knot

__all__ = [
    "CurveGeometrySpec",
    "TubeGrid",
    "TubeField",
    "SpecialFnConfig",
    "ResolutionError",
    "DivergenceError",
    "OutsideTubeError",
    "RecursionResult",
    "tube_jacobian",
    "eta0_field",
    "eta_recursion",
    "hj_eval",
    "hj_evaluate",
    "hj_gradient_factor",
    "theta_fn",
    "upsilon_fn",
    "f_fn",
    "parametrix_eval",
    "exact_heat_evolution",
    "circle_heat_evolution_bessel",
    "error_order_fit",
    "mean_curvature_residual",
    "dstar_eta0_limit",
    "jacobian_identity_residual",
    "product_rule_residual",
    "extendibility_probe",
    "richardson_to_zero",
]


class ResolutionError(RuntimeError):
    """The grid is too coarse for the requested recursion depth."""


class DivergenceError(ValueError):
    """The requested special-function value is infinite."""


class OutsideTubeError(ValueError):
    """A point lies outside the tubular neighbourhood."""


# -- geometry --------------------------------------------------------------------------

_KINDS = ("line", "circle", "geodesic")


@dataclass(frozen=True)
class CurveGeometrySpec:
    """A straight line (the x3 axis), a circle of radius rho in the x1x2 plane,
    or the coordinate geodesic {(s, c2, c3)} of T^3."""

    kind: str
    rho: float = 1.0
    tube_radius: float = 0.25
    offset: Tuple[float, float] = (np.pi, np.pi)

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}; expected one of {_KINDS}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.tube_radius > 0:
            raise ValueError("tube radius must be positive")
        if self.kind == "circle" and self.tube_radius >= self.rho / 2:
            raise ValueError(f"tube radius {self.tube_radius} must stay below rho/2 = {self.rho / 2}")
        if self.kind == "geodesic" and self.tube_radius >= np.pi / 2:
            raise ValueError("tube radius must stay below pi/2 on the torus")

    @property
    def flat(self) -> bool:
        return self.kind != "circle"

    @property
    def curvature(self) -> float:
        return 1.0 / self.rho if self.kind == "circle" else 0.0

    def frame(self, s) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(foot point, n1, n2, T) with broadcast shape (..., 3)."""
        s = np.asarray(s, dtype=float)
        zero, one = np.zeros_like(s), np.ones_like(s)
        if self.kind == "circle":
            cs, sn = np.cos(s), np.sin(s)
            foot = self.rho * np.stack([cs, sn, zero], axis=-1)
            n1 = -np.stack([cs, sn, zero], axis=-1)
            n2 = np.stack([zero, zero, one], axis=-1)
            tangent = np.stack([-sn, cs, zero], axis=-1)
        elif self.kind == "line":
            foot = np.stack([zero, zero, s], axis=-1)
            n1 = np.stack([one, zero, zero], axis=-1)
            n2 = np.stack([zero, one, zero], axis=-1)
            tangent = np.stack([zero, zero, one], axis=-1)
        else:
            foot = np.stack([s, self.offset[0] * one, self.offset[1] * one], axis=-1)
            n1 = np.stack([zero, one, zero], axis=-1)
            n2 = np.stack([zero, zero, one], axis=-1)
            tangent = np.stack([one, zero, zero], axis=-1)
        return foot, n1, n2, tangent

    def to_cartesian(self, s, r, theta) -> np.ndarray:
        s, r, theta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s, r, theta)))
        foot, n1, n2, _ = self.frame(s)
        return foot + (r * np.cos(theta))[..., None] * n1 + (r * np.sin(theta))[..., None] * n2

    def normal_coordinates(self, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(s, a, b) with x = c(s) + a n1 + b n2."""
        x = np.asarray(x, dtype=float)
        if self.kind == "circle":
            s = np.arctan2(x[..., 1], x[..., 0])
            a = self.rho - np.hypot(x[..., 0], x[..., 1])
            return s, a, x[..., 2]
        if self.kind == "line":
            return x[..., 2], x[..., 0], x[..., 1]
        return x[..., 0], x[..., 1] - self.offset[0], x[..., 2] - self.offset[1]

    def jacobian_cartesian(self, x) -> np.ndarray:
        """Closed-form j at Cartesian points."""
        _, a, _ = self.normal_coordinates(x)
        if self.kind == "circle":
            return 1.0 - a / self.rho
        return np.ones_like(a)

    def frame_two_forms(self, s) -> np.ndarray:
        """Cartesian components (..., 3 frame forms, 3) of n1^n2, n1^T, n2^T."""
        _, n1, n2, tangent = self.frame(s)
        pairs = [(n1, n2), (n1, tangent), (n2, tangent)]
        return np.stack([ft.covectors_wedge(np.stack([u, v], axis=-2)) for u, v in pairs], axis=-2)


def tube_jacobian(spec: CurveGeometrySpec, s, r, theta, method: str = "closed", step: float = 1e-5) -> np.ndarray:
    """Volume Jacobian j of the normal exponential map, normalised so that j = 1 on L."""
    r = np.asarray(r, dtype=float)
    if np.any(r > spec.tube_radius) or np.any(r < 0):
        raise OutsideTubeError(f"r must lie in [0, {spec.tube_radius}]")
    s, r, theta = np.broadcast_arrays(np.asarray(s, dtype=float), r, np.asarray(theta, dtype=float))
    if method == "closed":
        if spec.kind == "circle":
            return 1.0 - (r / spec.rho) * np.cos(theta)
        return np.ones_like(r)
    if method != "numeric":
        raise ValueError("method must be 'closed' or 'numeric'")
    # central-difference Jacobian of (s, a, b) -> c(s) + a n1(s) + b n2(s)
    a, b = r * np.cos(theta), r * np.sin(theta)

    def embed(ss, aa, bb):
        foot, n1, n2, _ = spec.frame(ss)
        return foot + aa[..., None] * n1 + bb[..., None] * n2

    cols = []
    for k in range(3):
        args_p = [s.copy(), a.copy(), b.copy()]
        args_m = [s.copy(), a.copy(), b.copy()]
        args_p[k] = args_p[k] + step
        args_m[k] = args_m[k] - step
        cols.append((embed(*args_p) - embed(*args_m)) / (2 * step))
    det = np.linalg.det(np.stack(cols, axis=-1))
    # |c'(s)| normalises j to 1 on the curve
    return np.abs(det) / (spec.rho if spec.kind == "circle" else 1.0)


# -- grids and fields ------------------------------------------------------------------

@dataclass(frozen=True)
class TubeGrid:
    """Uniform in s and theta, geometric in r from ``r_min`` up to the tube radius."""

    spec: CurveGeometrySpec
    n_s: int = 64
    n_r: int = 64
    n_theta: int = 64
    r_min: float = 5e-3

    def __post_init__(self) -> None:
        if min(self.n_s, self.n_r, self.n_theta) < 4:
            raise ValueError("each grid resolution must be at least 4")
        if not 0 < self.r_min < self.spec.tube_radius:
            raise ValueError("r_min must lie strictly inside the tube")

    @cached_property
    def s(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_s) / self.n_s

    @cached_property
    def r(self) -> np.ndarray:
        return np.geomspace(self.r_min, self.spec.tube_radius, self.n_r)

    @cached_property
    def theta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_theta) / self.n_theta

    @property
    def ratio(self) -> float:
        return float(self.r[1] / self.r[0])

    def slice_points(self, s: float = 0.0) -> np.ndarray:
        """Cartesian points (n_r, n_theta, 3) of one s-slice."""
        rr, tt = np.meshgrid(self.r, self.theta, indexing="ij")
        return self.spec.to_cartesian(np.full_like(rr, s), rr, tt)


@dataclass(frozen=True, eq=False)
class TubeField:
    """Frame components of a 2-form on the tube grid.

    ``values`` has shape (n_s, n_r, n_theta, 3); it is a broadcast view of one
    s-slice because the supported curves are homogeneous along s.
    """

    grid: TubeGrid
    values: np.ndarray
    degree: int = 2
    label: str = ""

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"field {self.label!r} has non-finite values")

    @property
    def slice(self) -> np.ndarray:
        return self.values[0]


class _ChebField:
    """Frame components as a 2D Chebyshev series on the square [-R, R]^2 in (a, b)."""

    def __init__(self, coeffs: np.ndarray, half_width: float):
        self.coeffs = coeffs  # (3, deg+1, deg+1)
        self.half_width = half_width

    @classmethod
    def fit(cls, func: Callable[[np.ndarray, np.ndarray], np.ndarray], half_width: float, degree: int) -> "_ChebField":
        nodes = np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1))
        aa, bb = np.meshgrid(half_width * nodes, half_width * nodes, indexing="ij")
        vals = func(aa, bb)  # (deg+1, deg+1, 3)
        vander = cheb.chebvander(nodes, degree)
        inv = np.linalg.inv(vander)
        coeffs = np.einsum("ip,pqc,jq->cij", inv, vals, inv, optimize=False)
        return cls(coeffs, half_width)

    @classmethod
    def constant(cls, values: Sequence[float], half_width: float) -> "_ChebField":
        coeffs = np.zeros((3, 1, 1))
        coeffs[:, 0, 0] = values
        return cls(coeffs, half_width)

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        u, v = a / self.half_width, b / self.half_width
        if np.any(np.abs(u) > 1 + 1e-12) or np.any(np.abs(v) > 1 + 1e-12):
            raise OutsideTubeError("evaluation point outside the stored normal square")
        return np.stack([cheb.chebval2d(u, v, c) for c in self.coeffs], axis=-1)

    def tail(self) -> float:
        """Largest coefficient in the last row and column, a proxy for truncation error."""
        c = np.abs(self.coeffs)
        return float(max(c[:, -1, :].max(), c[:, :, -1].max()))


# -- finite-difference Laplacian in ambient coordinates ---------------------------------

_SECOND_DIFF = {
    4: (np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0, np.array([-2, -1, 0, 1, 2])),
    6: (np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0, np.array([-3, -2, -1, 0, 1, 2, 3])),
}


def _sum_second(func, x, h, weights, offsets, centre):
    """Sum over axes of the weighted second-difference stencil (not yet divided by h^2)."""
    total = np.zeros_like(centre)
    for axis in range(x.shape[-1]):
        for w, o in zip(weights, offsets):
            if o == 0:
                total = total + w * centre
                continue
            shifted = x.copy()
            shifted[..., axis] += o * h
            total = total + w * func(shifted)
    return total


# -- the recursion ---------------------------------------------------------------------

@dataclass
class RecursionResult:
    """eta_0..eta_N as evaluable fields plus their grid samples and diagnostics."""

    spec: CurveGeometrySpec
    grid: TubeGrid
    fields: List[TubeField]
    residuals: List[float]
    series_tails: List[float]
    _evaluators: List[Callable[[np.ndarray], np.ndarray]] = field(repr=False, default_factory=list)

    @property
    def order(self) -> int:
        return len(self.fields) - 1

    def frame_components(self, i: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self._evaluators[i](a, b)

    def cartesian(self, i: int, x: np.ndarray) -> np.ndarray:
        """eta_i at Cartesian points, components over (dx12, dx13, dx23)."""
        s, a, b = self.spec.normal_coordinates(x)
        comps = self._evaluators[i](a, b)
        return np.einsum("...f,...fc->...c", comps, self.spec.frame_two_forms(s), optimize=False)


def _frame_project(spec: CurveGeometrySpec, s: np.ndarray, cart: np.ndarray) -> np.ndarray:
    return np.einsum("...c,...fc->...f", cart, spec.frame_two_forms(s), optimize=False)


def eta0_field(spec: CurveGeometrySpec, grid: TubeGrid) -> TubeField:
    """j^{-1/2} times the parallel normal volume form, on the grid."""
    rr, tt = np.meshgrid(grid.r, grid.theta, indexing="ij")
    j = tube_jacobian(spec, 0.0, rr, tt)
    vals = np.zeros(rr.shape + (3,))
    vals[..., 0] = j ** -0.5
    return TubeField(grid, np.broadcast_to(vals, (grid.n_s,) + vals.shape), 2, "eta_0")


def _jac_ab(spec: CurveGeometrySpec, a: np.ndarray) -> np.ndarray:
    return 1.0 - a / spec.rho if spec.kind == "circle" else np.ones_like(a)


def _radial_derivative_nonuniform(r: np.ndarray, values: np.ndarray, order: int = 4) -> np.ndarray:
    """d/dr along axis 0 on a nonuniform grid with (order+1)-point centred Fornberg weights."""
    half = order // 2
    out = np.full(values.shape, np.nan)
    for k in range(half, r.size - half):
        stencil = r[k - half:k + half + 1]
        w = _fornberg_weights(r[k], stencil, 1)
        out[k] = np.tensordot(w, values[k - half:k + half + 1], axes=(0, 0))
    return out


def _fornberg_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    n = x.size - 1
    c = np.zeros((n + 1, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n + 1):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def eta_recursion(spec: CurveGeometrySpec, grid: TubeGrid, order: int, fd_step: float = 1e-2, fd_order: int = 4,
                  ray_nodes: int = 16, cheb_degree: int = 28, tolerance: float = 1e-4) -> RecursionResult:
    """eta_0, ..., eta_N from the radial transport recursion.

    Stage i+1 is A_{i+1}(v) = -j(v)^{-1/2} int_0^1 sigma^i j(sigma v)^{1/2}
    B_i(sigma v) d sigma with B_i the frame components of Laplacian(eta_i),
    computed by central differences in ambient coordinates of the evaluable
    field eta_i.  The ray integral uses Gauss-Legendre nodes.  Each stage is
    checked on the grid by differencing r^{i+1} j^{1/2} A_{i+1} in r.
    """
    if not 0 <= order <= 3:
        raise ValueError("recursion depth must lie in 0..3")
    # each stage is stored on a square large enough for the next stage's stencils
    reach = max(_SECOND_DIFF[fd_order][1]) * fd_step * 1.25
    widths = [spec.tube_radius + reach * (order - i + 1) for i in range(order + 1)]
    if spec.kind == "circle" and np.sqrt(2) * widths[0] >= 0.75 * spec.rho:
        raise ValueError("finite-difference margin reaches too far toward the rotation axis")
    if spec.flat:
        evaluators: List[Callable] = [_ChebField.constant([1.0, 0.0, 0.0], widths[0])]
    else:
        evaluators = [_ChebField.fit(lambda a, b: np.stack(
            [_jac_ab(spec, a) ** -0.5, 0 * a, 0 * a], axis=-1), widths[0], cheb_degree)]
    tails = [evaluators[0].tail()]
    gl_nodes, gl_weights = np.polynomial.legendre.leggauss(ray_nodes)
    sigma = 0.5 * (gl_nodes + 1.0)
    sigma_w = 0.5 * gl_weights

    fields = [eta0_field(spec, grid)]
    residuals: List[float] = []
    rr, tt = np.meshgrid(grid.r, grid.theta, indexing="ij")

    def laplacian_frame(stage: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        x = spec.to_cartesian(np.zeros_like(a), np.hypot(a, b), np.arctan2(b, a))
        evaluator = evaluators[stage]

        def cart(points: np.ndarray) -> np.ndarray:
            s_p, a_p, b_p = spec.normal_coordinates(points)
            return np.einsum("...f,...fc->...c", evaluator(a_p, b_p), spec.frame_two_forms(s_p), optimize=False)

        lap = -_sum_second(cart, x, fd_step, *_SECOND_DIFF[fd_order], cart(x)) / fd_step ** 2
        return _frame_project(spec, np.zeros_like(a), lap)

    for i in range(order):
        if spec.flat:
            # constant frame components: the Laplacian vanishes identically
            evaluators.append(_ChebField.constant([0.0, 0.0, 0.0], widths[i + 1]))
            tails.append(0.0)
        else:
            def next_stage(a: np.ndarray, b: np.ndarray, i=i) -> np.ndarray:
                sa = a[..., None] * sigma
                sb = b[..., None] * sigma
                lap = laplacian_frame(i, sa, sb)
                weight = sigma_w * sigma ** i * _jac_ab(spec, sa) ** 0.5
                integral = np.sum(weight[..., None] * lap, axis=-2)
                return -(_jac_ab(spec, a) ** -0.5)[..., None] * integral

            evaluators.append(_ChebField.fit(next_stage, widths[i + 1], cheb_degree))
            tails.append(evaluators[-1].tail())
        a_grid, b_grid = rr * np.cos(tt), rr * np.sin(tt)
        values = evaluators[-1](a_grid, b_grid)
        fields.append(TubeField(grid, np.broadcast_to(values, (grid.n_s,) + values.shape), 2, f"eta_{i + 1}"))
        # grid check of the transport equation d/dr (r^{i+1} j^{1/2} A) = -r^i j^{1/2} B
        if spec.flat:
            residuals.append(0.0)
            continue
        j_half = _jac_ab(spec, a_grid) ** 0.5
        lhs = _radial_derivative_nonuniform(grid.r, (rr ** (i + 1) * j_half)[..., None] * values)
        rhs = -(rr ** i * j_half)[..., None] * laplacian_frame(i, a_grid, b_grid)
        interior = slice(2, grid.n_r - 2)
        scale = max(1.0, float(np.max(np.abs(rhs[interior]))))
        residual = float(np.max(np.abs(lhs[interior] - rhs[interior]))) / scale
        residuals.append(residual)
        if residual > tolerance:
            raise ResolutionError(
                f"transport residual {residual:.2e} at stage {i + 1} exceeds {tolerance:g}; "
                f"refine the radial grid (n_r={grid.n_r}) or lower the order")
    return RecursionResult(spec, grid, fields, residuals, tails, evaluators)


# -- special functions -----------------------------------------------------------------

@dataclass(frozen=True)
class SpecialFnConfig:
    tolerance: float = 1e-13

    def __post_init__(self) -> None:
        if not 1e-14 <= self.tolerance <= 1e-8:
            raise ValueError("quadrature tolerance must lie in [1e-14, 1e-8]")


_DEFAULT_CFG = SpecialFnConfig()


def _quad(func, lo, hi, cfg: SpecialFnConfig, **kw) -> float:
    val, _ = integrate.quad(func, lo, hi, epsabs=0.0, epsrel=cfg.tolerance, limit=400, **kw)
    return float(val)


def theta_fn(x: float, cfg: SpecialFnConfig = _DEFAULT_CFG) -> float:
    """int_x^inf e^{-u} u^{-1/2} du, integrated in w = sqrt(u)."""
    if x < 0:
        raise ValueError("argument must be non-negative")
    return 2.0 * _quad(lambda w: np.exp(-w * w), np.sqrt(x), np.inf, cfg)


def upsilon_fn(x: float, cfg: SpecialFnConfig = _DEFAULT_CFG) -> float:
    """int_x^inf ln(u) e^{-u} du."""
    if x < 0:
        raise ValueError("argument must be non-negative")
    if x < 1.0:
        head = _quad(lambda u: np.log(u) * np.exp(-u), x, 1.0, cfg, points=None) if x > 0 else \
            _quad(lambda u: np.exp(-u), 0.0, 1.0, cfg, weight="alg-loga", wvar=(0.0, 0.0))
        return head + _quad(lambda u: np.log(u) * np.exp(-u), 1.0, np.inf, cfg)
    return _quad(lambda u: np.log(u) * np.exp(-u), x, np.inf, cfg)


def f_fn(j: int, x: float, cfg: SpecialFnConfig = _DEFAULT_CFG) -> float:
    """F_j(x) = int_x^inf e^{-u} u^{j/2-2} du, so that F_j(0) = Gamma(j/2 - 1) for j >= 3."""
    if x < 0:
        raise ValueError("argument must be non-negative")
    if j == 3:
        return theta_fn(x, cfg)
    power = j / 2.0 - 2.0
    if x == 0 and power <= -1:
        raise DivergenceError(f"F_{j}(0) diverges")
    return _quad(lambda u: np.exp(-u) * u ** power, x, np.inf, cfg)


@dataclass(frozen=True)
class HjValue:
    value: float
    singular: bool = False


def hj_evaluate(j: int, r: float, method: str = "closed", cfg: SpecialFnConfig = _DEFAULT_CFG) -> HjValue:
    """H_j(r) = int_0^1 exp(-r^2/4t) t^{-j/2} dt with a flag for the logarithmic case j = 2."""
    if j < 1 or int(j) != j:
        raise ValueError("j must be a positive integer")
    if r < 0:
        raise ValueError("r must be non-negative")
    j = int(j)
    if r == 0 and j >= 2:
        raise DivergenceError(f"H_{j}(0) diverges")
    x = r * r / 4.0
    singular = j == 2 and r < 1e-2
    if method == "quadrature":
        if r == 0:
            raise DivergenceError("direct quadrature needs r > 0")
        # in tau = -ln t the integrand is smooth and bell-shaped
        peak = np.log(max(2.0 * (j / 2.0 - 1.0) / (x if x > 0 else 1.0), 1.0)) if j > 2 else 0.0
        integrand = lambda tau: np.exp(-x * np.exp(tau) + tau * (j / 2.0 - 1.0))
        points = [peak] if peak > 0 else None
        upper = max(peak, 0.0) + 60.0
        val = _quad(integrand, 0.0, upper, cfg, points=points)
        return HjValue(val, singular)
    if method != "closed":
        raise ValueError("method must be 'closed' or 'quadrature'")
    if j == 1:
        return HjValue(2.0 * np.exp(-x) - r * theta_fn(x, cfg))
    if j == 2:
        return HjValue(-np.log(x) * np.exp(-x) + upsilon_fn(x, cfg), singular)
    return HjValue(2.0 ** (j - 2) * r ** (2 - j) * f_fn(j, x, cfg))


def hj_eval(j: int, r: float, method: str = "closed", cfg: SpecialFnConfig = _DEFAULT_CFG) -> float:
    return hj_evaluate(j, r, method, cfg).value


def hj_gradient_factor(j: int, r: float, cfg: SpecialFnConfig = _DEFAULT_CFG) -> float:
    """r^{j-1} H_j'(r).

    Differentiating under the integral gives H_j' = -(r/2) H_{j+2}, and the
    closed form of H_{j+2} turns this into -2^{j-1} F_{j+2}(r^2/4).
    """
    if not r > 0:
        raise ValueError("r must be positive")
    return -(2.0 ** (j - 1)) * f_fn(j + 2, r * r / 4.0, cfg)


# -- parametrix and exact evolution ----------------------------------------------------

def heat_profile(r: np.ndarray, t: float, codim: int = 2) -> np.ndarray:
    return (4.0 * np.pi * t) ** (-codim / 2.0) * np.exp(-np.asarray(r) ** 2 / (4.0 * t))


def parametrix_eval(etas: RecursionResult, t: float, x, order: Optional[int] = None) -> np.ndarray:
    """f_t(r) sum_{i<=N} t^i eta_i at Cartesian points, components over (dx12, dx13, dx23)."""
    if not t > 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    spec = etas.spec
    _, a, b = spec.normal_coordinates(x)
    r = np.hypot(a, b)
    if np.any(r > spec.tube_radius):
        raise OutsideTubeError("parametrix evaluated outside the tube")
    order = etas.order if order is None else order
    total = np.zeros(x.shape[:-1] + (3,))
    for i in range(order + 1):
        total = total + t ** i * etas.cartesian(i, x)
    return heat_profile(r, t)[..., None] * total


def circle_knot(rho: float) -> Knot:
    return Knot.from_fourier([0, 0, 0], [[rho], [0], [0]], [[0], [rho], [0]], name=f"circle_{rho:g}")


def exact_heat_evolution(spec: CurveGeometrySpec, t: float, x, quad_n: Optional[int] = None) -> np.ndarray:
    """e^{-t Laplacian} of the current of L at Cartesian points."""
    x = np.asarray(x, dtype=float)
    if spec.kind == "circle":
        knot = circle_knot(spec.rho)
        n = quad_n or heat_quadrature_size(knot.length(), t, minimum=1024)
        return heat_evolve_components(knot, t, x, n)
    # straight lines: integrate the 3D heat kernel along the line numerically
    _, a, b = spec.normal_coordinates(x)
    r2 = a * a + b * b
    along, _ = integrate.quad(lambda u: (4 * np.pi * t) ** -1.5 * np.exp(-u * u / (4 * t)), -np.inf, np.inf,
                              epsabs=0, epsrel=1e-13)
    profile = along * np.exp(-r2 / (4 * t))
    if spec.kind == "geodesic":
        for k2 in range(-2, 3):
            for k3 in range(-2, 3):
                if k2 == 0 and k3 == 0:
                    continue
                shift = (a + 2 * np.pi * k2) ** 2 + (b + 2 * np.pi * k3) ** 2
                profile = profile + along * np.exp(-shift / (4 * t))
    _, n1, n2, _ = spec.frame(np.zeros_like(a))
    vol = ft.covectors_wedge(np.stack([n1, n2], axis=-2))
    return profile[..., None] * vol


def circle_heat_evolution_bessel(rho: float, t: float, x) -> np.ndarray:
    """Closed form of the heat-evolved circle current via the modified Bessel function I_1."""
    x = np.asarray(x, dtype=float)
    radial = np.hypot(x[..., 0], x[..., 1])
    phi = np.arctan2(x[..., 1], x[..., 0])
    z = x[..., 2]
    arg = radial * rho / (2 * t)
    amp = (4 * np.pi * t) ** -1.5 * np.exp(-((radial - rho) ** 2 + z * z) / (4 * t)) * 2 * np.pi * rho * ive(1, arg)
    tangent = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=-1)
    return ft.star(amp[..., None] * tangent, 3, 1)


@dataclass
class OrderFit:
    slope: float
    target: float
    times: List[float]
    errors: List[float]
    monotone: bool
    diagnostics: Dict[str, list] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"slope": self.slope, "target": self.target, "times": list(self.times),
                "errors": list(self.errors), "monotone": self.monotone, "diagnostics": self.diagnostics}


def error_order_fit(etas: RecursionResult, order: int, times: Sequence[float],
                    annulus: Tuple[float, float] = (0.05, 0.2), s_slice: float = 0.3) -> OrderFit:
    """Log-log slope of sup over the annulus of |exact - parametrix_N| against t."""
    spec, grid = etas.spec, etas.grid
    if order > etas.order:
        raise ValueError(f"recursion only computed up to order {etas.order}")
    rr, tt = np.meshgrid(grid.r, grid.theta, indexing="ij")
    mask = (rr >= annulus[0]) & (rr <= annulus[1])
    pts = spec.to_cartesian(np.full(int(mask.sum()), s_slice), rr[mask], tt[mask])
    errors = []
    for t in times:
        exact = exact_heat_evolution(spec, t, pts)
        approx = parametrix_eval(etas, t, pts, order)
        errors.append(float(np.max(np.abs(exact - approx))))
    times = [float(t) for t in times]
    errs = np.array(errors)
    positive = errs > 0
    slope = float(np.polyfit(np.log(np.array(times)[positive]), np.log(errs[positive]), 1)[0]) \
        if positive.sum() >= 2 else float("inf")
    order_idx = np.argsort(times)
    monotone = bool(np.all(np.diff(errs[order_idx]) >= 0))
    diagnostics = {} if monotone else {"times": times, "errors": errors, "points": int(mask.sum())}
    return OrderFit(slope, float(order), times, errors, monotone, diagnostics)


# -- mean curvature and the codifferential of eta_0 ------------------------------------

def richardson_to_zero(f_r: np.ndarray, f_2r: np.ndarray, f_4r: np.ndarray) -> np.ndarray:
    """Value at 0 of the quadratic through samples at r, 2r and 4r."""
    return (8.0 * f_r - 6.0 * f_2r + f_4r) / 3.0


def _grad_j_frame(spec: CurveGeometrySpec, s, r, theta, method: str, h: float) -> np.ndarray:
    """Cartesian gradient of j from tube-coordinate differences."""
    def jac(ss, rr, th):
        return tube_jacobian(spec, ss, rr, th, method)

    w = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
    off = np.array([-2, -1, 1, 2])
    d_r = sum(wi * jac(s, r + o * h, theta) for wi, o in zip(w, off)) / h
    d_t = sum(wi * jac(s, r, theta + o * h) for wi, o in zip(w, off)) / h
    d_s = sum(wi * jac(s + o * h, r, theta) for wi, o in zip(w, off)) / h
    _, n1, n2, tangent = spec.frame(s)
    u = np.cos(theta)[..., None] * n1 + np.sin(theta)[..., None] * n2
    tau = -np.sin(theta)[..., None] * n1 + np.cos(theta)[..., None] * n2
    h_s = (spec.rho if spec.kind == "circle" else 1.0) * jac(s, r, theta)
    return d_r[..., None] * u + (d_t / r)[..., None] * tau + (d_s / h_s)[..., None] * tangent


def mean_curvature_vector(spec: CurveGeometrySpec, s) -> np.ndarray:
    _, n1, _, _ = spec.frame(s)
    return spec.curvature * n1


def mean_curvature_residual(spec: CurveGeometrySpec, method: str = "closed", shells: float = 0.01,
                            n_theta: int = 16, s: float = 0.4) -> float:
    """max over directions of |grad j at L (Richardson from three shells) + H|."""
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    s_arr = np.full_like(theta, s)
    h = 1e-3 if method == "closed" else 2e-3
    samples = [_grad_j_frame(spec, s_arr, np.full_like(theta, shells * m), theta, method, h) for m in (1, 2, 4)]
    limit = richardson_to_zero(*samples)
    return float(np.max(np.linalg.norm(limit + mean_curvature_vector(spec, s_arr), axis=-1)))


def _eta0_cartesian(spec: CurveGeometrySpec) -> Callable[[np.ndarray], np.ndarray]:
    def field_fn(x: np.ndarray) -> np.ndarray:
        s, a, _ = spec.normal_coordinates(x)
        j = _jac_ab(spec, a)
        return (j ** -0.5)[..., None] * spec.frame_two_forms(s)[..., 0, :]
    return field_fn


@dataclass
class DstarLimit:
    vertical: np.ndarray  # components on (n1, n2)
    horizontal: float  # component on T
    expected: np.ndarray
    residual: float

    def as_dict(self) -> dict:
        return {"vertical": self.vertical.tolist(), "horizontal": self.horizontal,
                "expected": self.expected.tolist(), "residual": self.residual}


def dstar_eta0_limit(spec: CurveGeometrySpec, shells: float = 0.01, n_theta: int = 16, s: float = 0.4,
                     h: float = 1e-3) -> DstarLimit:
    """d^* eta_0 on L by Richardson extrapolation, against iota_{H/2} of the normal volume."""
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    s_arr = np.full_like(theta, s)
    fn = _eta0_cartesian(spec)
    samples = []
    for m in (1, 2, 4):
        x = spec.to_cartesian(s_arr, np.full_like(theta, shells * m), theta)
        samples.append(ft.fd_codifferential(fn, x, 3, 2, h=h, order=4))
    limit = richardson_to_zero(*samples)  # (n_theta, 3) Cartesian 1-forms
    _, n1, n2, tangent = spec.frame(np.array(s))
    vertical = np.stack([limit @ n1, limit @ n2], axis=-1)
    horizontal = float(np.max(np.abs(limit @ tangent)))
    # iota_{H/2}(n1 ^ n2) with H = kappa n1 is (kappa / 2) n2
    expected = np.array([0.0, spec.curvature / 2.0])
    residual = float(np.max(np.abs(vertical - expected)))
    return DstarLimit(vertical.mean(axis=0), horizontal, expected, residual)


def jacobian_identity_residual(spec: CurveGeometrySpec, r_values=(0.02, 0.05, 0.1), n_theta: int = 12,
                                     h: float = 1e-3) -> float:
    """max |(k - n - Delta_0 xi)/2 - grad xi (log sqrt j)| with xi = r^2/2, k = 1, n = 3."""
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    rr, tt = np.meshgrid(np.asarray(r_values, dtype=float), theta, indexing="ij")
    x = spec.to_cartesian(np.full_like(rr, 0.4), rr, tt)

    def xi(points: np.ndarray) -> np.ndarray:
        _, a, b = spec.normal_coordinates(points)
        return (0.5 * (a * a + b * b))[..., None]

    positive_laplacian = -_sum_second(xi, x, h, *_SECOND_DIFF[4], xi(x))[..., 0] / h ** 2
    lhs = (1 - 3 - positive_laplacian) / 2.0
    # grad xi = r d/dr, and d/dr log sqrt j = -(cos theta / rho) / (2 j)
    j = tube_jacobian(spec, 0.4, rr, tt)
    dlogj = -(np.cos(tt) * spec.curvature) / (2.0 * j)
    rhs = rr * dlogj
    return float(np.max(np.abs(lhs - rhs)))


def product_rule_residual(spec: CurveGeometrySpec, t: float = 0.01, r_values=(0.05, 0.1, 0.15), n_theta: int = 12,
                          h: float = 2e-3) -> float:
    """Check Laplacian(f eta) = (Delta_0 f) eta + f Laplacian(eta) - 2 nabla_{grad f} eta for f = f_t(r), eta = eta_0."""
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    rr, tt = np.meshgrid(np.asarray(r_values, dtype=float), theta, indexing="ij")
    x = spec.to_cartesian(np.full_like(rr, 0.4), rr, tt)
    eta = _eta0_cartesian(spec)

    def profile(points: np.ndarray) -> np.ndarray:
        _, a, b = spec.normal_coordinates(points)
        return heat_profile(np.hypot(a, b), t)[..., None]

    def product(points: np.ndarray) -> np.ndarray:
        return profile(points) * eta(points)

    stencil = _SECOND_DIFF[4]
    lap_prod = -_sum_second(product, x, h, *stencil, product(x)) / h ** 2
    lap_f = -_sum_second(profile, x, h, *stencil, profile(x)) / h ** 2
    lap_eta = -_sum_second(eta, x, h, *stencil, eta(x)) / h ** 2
    grad_f = ft.fd_gradient(profile, x, h, 4)[..., 0]  # (..., 3)
    grad_eta = ft.fd_gradient(eta, x, h, 4)  # (..., 3, 3)
    covariant = np.einsum("...d,...dc->...c", grad_f, grad_eta, optimize=False)
    rhs = lap_f * eta(x) + profile(x) * lap_eta - 2.0 * covariant
    scale = float(np.max(np.abs(lap_prod)))
    return float(np.max(np.abs(lap_prod - rhs))) / scale


# -- blow-up extendibility -------------------------------------------------------------

@dataclass
class ExtendibilityReport:
    radii: List[float]
    variations: Dict[str, List[float]]
    verdict: bool
    worst: List[float]

    def as_dict(self) -> dict:
        return {"radii": list(self.radii), "variations": {k: list(v) for k, v in self.variations.items()},
                "verdict": self.verdict, "worst": list(self.worst)}


def _cauchy_verdict(seq: Sequence[float], floor: float = 1e-12, ratio: float = 0.9) -> bool:
    seq = list(seq)
    if all(v <= floor for v in seq):
        return True
    tail = seq[-3:] if len(seq) >= 3 else seq
    return all(b <= ratio * a or b <= floor for a, b in zip(tail, tail[1:]))


def extendibility_probe(field_fn: Callable[[np.ndarray], np.ndarray], degree: int, base_points, normal_frames,
                        tangent_frames, radii: Sequence[float], samples: int = 24) -> ExtendibilityReport:
    """Variation of the rescaled families r^i omega(r v) on the unit normal sphere bundle.

    At each base point p the normal sphere is sampled at unit vectors v with
    an oriented frame (v, sphere tangents).  Every component omega(e_1, ...)
    with legs drawn from {v, sphere tangents, curve tangents} is multiplied by
    r^i, i the number of sphere-tangent legs, and grouped by
    (radial legs, sphere legs, curve legs).  The report lists, per group, the
    sup over the bundle of the difference between consecutive radii.
    """
    base_points = np.atleast_2d(np.asarray(base_points, dtype=float))
    normal_frames = np.asarray(normal_frames, dtype=float)
    if normal_frames.ndim == 2:
        normal_frames = np.broadcast_to(normal_frames, (base_points.shape[0],) + normal_frames.shape)
    tangent_frames = np.asarray(tangent_frames, dtype=float).reshape(base_points.shape[0], -1, base_points.shape[1])
    c = normal_frames.shape[1]
    n = base_points.shape[1]
    radii = [float(r) for r in radii]
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly decreasing")
    if c == 2:
        angles = (2 * np.pi * np.arange(samples) / samples,)
    elif c == 3:
        polar = np.pi * (np.arange(samples // 2) + 0.5) / (samples // 2)
        az = 2 * np.pi * np.arange(samples) / samples
        pg, ag = np.meshgrid(polar, az, indexing="ij")
        angles = (pg.ravel(), ag.ravel())
    else:
        raise ValueError("normal dimension must be 2 or 3")
    families: Dict[str, List[np.ndarray]] = {}
    for radius in radii:
        per_group: Dict[str, List[np.ndarray]] = {}
        for p, frame, tangents in zip(base_points, normal_frames, tangent_frames):
            u, sphere = ft.sphere_frame(frame, angles)
            legs = [("radial", u)] + [("sphere", sphere[..., k, :]) for k in range(c - 1)] + \
                   [("curve", np.broadcast_to(tv, u.shape)) for tv in tangents]
            values = np.asarray(field_fn(p + radius * u))
            for combo in combinations(range(len(legs)), degree):
                kinds = [legs[k][0] for k in combo]
                key = f"radial{kinds.count('radial')}_sphere{kinds.count('sphere')}_curve{kinds.count('curve')}"
                vecs = np.stack([legs[k][1] for k in combo], axis=-2) if degree else np.zeros(u.shape[:-1] + (0, n))
                comp = ft.evaluate_on_vectors(values, n, degree, vecs) * radius ** kinds.count("sphere")
                per_group.setdefault(key, []).append(comp)
        for key, parts in per_group.items():
            families.setdefault(key, []).append(np.concatenate([np.ravel(q) for q in parts]))
    variations = {key: [float(np.max(np.abs(a - b))) for a, b in zip(vals, vals[1:])]
                  for key, vals in sorted(families.items())}
    worst = [max(v[k] for v in variations.values()) for k in range(len(radii) - 1)]
    verdict = all(_cauchy_verdict(v) for v in variations.values())
    return ExtendibilityReport(radii, variations, verdict, worst)
