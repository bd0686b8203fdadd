"""Truncated-Fourier Hodge calculus on the flat torus T^n = R^n / (2 pi Z)^n.

A degree-k form is stored as one dense complex array of Fourier coefficients
per multi-index: ``omega(x) = sum_{m, I} c(m, I) e^{i m.x} dx_I`` with modes
|m|_inf <= M.  Array position ``a`` along each axis corresponds to m = a - M.
The Laplacian is diagonal (|m|^2), so d, d^*, the heat semigroup, the Green
operator and the harmonic projection are all exact on the truncated space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy.special import erfc

from . import formtools as ft
from .calibration import sign_constant
from .curves import Knot
from .exterior_core import (
    MultiIndex,
    all_multi_indices,
    codiff_sign,
    hodge_star_basis,
    wedge_basis,
)

__all__ = [
    "TorusGeometry",
    "FourierForm",
    "KnotCurrentForm",
    "QuadratureConvergenceError",
    "d_form",
    "dstar_form",
    "hodge_star_torus",
    "laplace_form",
    "heat_semigroup",
    "green_op",
    "harmonic_projection",
    "inner_product",
    "pairing",
    "current_from_knot",
    "biot_savart_of_knot",
    "eval_form_at",
    "EwaldBiotSavart",
    "ewald_eval_bs",
    "dlf_identity_residual",
    "dlf2_identity_residual",
    "verify_current_op_signs",
    "random_form",
]

TWO_PI = 2.0 * np.pi


class QuadratureConvergenceError(RuntimeError):
    """Doubling the quadrature changed knot-current coefficients beyond tolerance."""


@dataclass(frozen=True)
class TorusGeometry:
    n: int
    period: float = TWO_PI

    def __post_init__(self) -> None:
        if self.n not in (2, 3, 4):
            raise ValueError(f"torus dimension must be 2, 3 or 4, got {self.n}")
        if self.period != TWO_PI:
            raise ValueError("only the 2 pi periodic torus is supported")


@lru_cache(maxsize=None)
def _mode_axes(n: int, modes: int) -> Tuple[np.ndarray, ...]:
    """Broadcastable integer mode arrays m_1, ..., m_n."""
    m = np.arange(-modes, modes + 1)
    axes = []
    for j in range(n):
        shape = [1] * n
        shape[j] = 2 * modes + 1
        axes.append(m.reshape(shape))
    return tuple(axes)


@lru_cache(maxsize=None)
def _mode_norm_sq(n: int, modes: int) -> np.ndarray:
    total = sum(axis.astype(float) ** 2 for axis in _mode_axes(n, modes))
    out = np.broadcast_to(total, (2 * modes + 1,) * n).copy()
    out.setflags(write=False)
    return out


def _reflect(arr: np.ndarray) -> np.ndarray:
    """Coefficient array at -m."""
    return arr[(slice(None, None, -1),) * arr.ndim]


@dataclass(frozen=True, eq=False)
class FourierForm:
    """Truncated Fourier expansion of a real k-form on the flat torus."""

    geometry: TorusGeometry
    degree: int
    modes: int
    coeffs: Dict[MultiIndex, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = self.geometry.n
        if not 0 <= self.degree <= n:
            raise ValueError(f"degree {self.degree} out of range 0..{n}")
        if self.modes < 1:
            raise ValueError("truncation must be at least one mode")
        shape = (2 * self.modes + 1,) * n
        clean = {}
        for idx, arr in self.coeffs.items():
            if idx.n != n or idx.degree != self.degree:
                raise ValueError(f"index {idx} does not match degree {self.degree} in dimension {n}")
            arr = np.asarray(arr, dtype=complex)
            if arr.shape != shape:
                raise ValueError(f"coefficient array for {idx} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            clean[idx] = arr
        object.__setattr__(self, "coeffs", clean)

    @property
    def n(self) -> int:
        return self.geometry.n

    @property
    def shape(self) -> Tuple[int, ...]:
        return (2 * self.modes + 1,) * self.n

    def component(self, idx: MultiIndex) -> np.ndarray:
        arr = self.coeffs.get(idx)
        return np.zeros(self.shape, dtype=complex) if arr is None else arr

    def coefficient(self, mode: Iterable[int], idx) -> complex:
        idx = idx if isinstance(idx, MultiIndex) else MultiIndex(tuple(idx), self.n)
        pos = tuple(int(m) + self.modes for m in mode)
        if any(p < 0 or p > 2 * self.modes for p in pos):
            return 0.0j
        return complex(self.component(idx)[pos])

    def _like(self, degree: int, coeffs: Dict[MultiIndex, np.ndarray]) -> "FourierForm":
        return FourierForm(self.geometry, degree, self.modes, coeffs)

    def _check_compatible(self, other: "FourierForm") -> None:
        if other.n != self.n or other.modes != self.modes or other.degree != self.degree:
            raise ValueError("forms differ in dimension, truncation or degree")

    def __add__(self, other: "FourierForm") -> "FourierForm":
        self._check_compatible(other)
        keys = sorted(set(self.coeffs) | set(other.coeffs))
        return self._like(self.degree, {k: self.component(k) + other.component(k) for k in keys})

    def __sub__(self, other: "FourierForm") -> "FourierForm":
        return self + other.scaled(-1.0)

    def scaled(self, factor: complex) -> "FourierForm":
        return self._like(self.degree, {k: factor * v for k, v in self.coeffs.items()})

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(v))) for v in self.coeffs.values()), default=0.0)

    def reality_defect(self) -> float:
        """max |c(-m, I) - conj c(m, I)|; zero for a real form."""
        return max((float(np.max(np.abs(_reflect(v) - np.conj(v)))) for v in self.coeffs.values()), default=0.0)

    @classmethod
    def zeros(cls, n: int, degree: int, modes: int) -> "FourierForm":
        return cls(TorusGeometry(n), degree, modes, {})

    @classmethod
    def constant(cls, n: int, values: Dict[MultiIndex, float], modes: int) -> "FourierForm":
        degree = next(iter(values)).degree if values else 0
        shape = (2 * modes + 1,) * n
        coeffs = {}
        for idx, val in values.items():
            arr = np.zeros(shape, dtype=complex)
            arr[(modes,) * n] = val
            coeffs[idx] = arr
        return cls(TorusGeometry(n), degree, modes, coeffs)

    @classmethod
    def single_mode(cls, n: int, mode: Iterable[int], idx: MultiIndex, modes: int, value: complex = 1.0,
                    real: bool = False) -> "FourierForm":
        """value e^{i m.x} dx_I, optionally with its conjugate mode added (real part times two)."""
        shape = (2 * modes + 1,) * n
        arr = np.zeros(shape, dtype=complex)
        pos = tuple(int(m) + modes for m in mode)
        arr[pos] += value
        if real:
            neg = tuple(-int(m) + modes for m in mode)
            arr[neg] += np.conj(value)
        return cls(TorusGeometry(n), idx.degree, modes, {idx: arr})


def random_form(rng: np.random.Generator, n: int, degree: int, modes: int, decay: float = 0.0) -> FourierForm:
    """Random real form with optional algebraic decay (1 + |m|^2)^(-decay/2)."""
    shape = (2 * modes + 1,) * n
    weight = (1.0 + _mode_norm_sq(n, modes)) ** (-decay / 2.0)
    coeffs = {}
    for idx in all_multi_indices(n, degree):
        raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        coeffs[idx] = 0.5 * (raw + np.conj(_reflect(raw))) * weight
    return FourierForm(TorusGeometry(n), degree, modes, coeffs)


# -- differential operators ------------------------------------------------------------

def d_form(omega: FourierForm) -> FourierForm:
    """Exterior derivative: e^{i m.x} dx_I -> sum_j i m_j e^{i m.x} dx_j ^ dx_I."""
    n, k = omega.n, omega.degree
    if k >= n:
        raise ValueError("d of a top-degree form is not defined here")
    axes = _mode_axes(n, omega.modes)
    out: Dict[MultiIndex, np.ndarray] = {}
    for idx in sorted(omega.coeffs):
        arr = omega.coeffs[idx]
        for j in range(1, n + 1):
            w = wedge_basis(MultiIndex((j,), n), idx)
            if w.is_zero:
                continue
            term = (w.sign * 1j) * axes[j - 1] * arr
            if w.index in out:
                out[w.index] = out[w.index] + term
            else:
                out[w.index] = term
    return omega._like(k + 1, out)


def hodge_star_torus(omega: FourierForm) -> FourierForm:
    out = {}
    for idx, arr in omega.coeffs.items():
        s = hodge_star_basis(idx)
        out[s.index] = s.sign * arr
    return omega._like(omega.n - omega.degree, out)


def dstar_form(omega: FourierForm) -> FourierForm:
    """Codifferential as codiff_sign(n, k) * star d star."""
    n, k = omega.n, omega.degree
    if k == 0:
        raise ValueError("d^* of a 0-form is not defined here")
    return hodge_star_torus(d_form(hodge_star_torus(omega))).scaled(codiff_sign(n, k))


def laplace_form(omega: FourierForm) -> FourierForm:
    lam = _mode_norm_sq(omega.n, omega.modes)
    return omega._like(omega.degree, {k: lam * v for k, v in omega.coeffs.items()})


def heat_semigroup(omega: FourierForm, t: float) -> FourierForm:
    if t < 0:
        raise ValueError("heat semigroup needs t >= 0")
    factor = np.exp(-t * _mode_norm_sq(omega.n, omega.modes))
    return omega._like(omega.degree, {k: factor * v for k, v in omega.coeffs.items()})


def _green_factor(n: int, modes: int) -> np.ndarray:
    lam = _mode_norm_sq(n, modes)
    out = np.zeros_like(lam)
    nonzero = lam > 0
    out[nonzero] = 1.0 / lam[nonzero]
    return out


def green_op(omega: FourierForm) -> FourierForm:
    factor = _green_factor(omega.n, omega.modes)
    return omega._like(omega.degree, {k: factor * v for k, v in omega.coeffs.items()})


def harmonic_projection(omega: FourierForm) -> FourierForm:
    centre = (omega.modes,) * omega.n
    out = {}
    for idx, arr in omega.coeffs.items():
        kept = np.zeros_like(arr)
        kept[centre] = arr[centre]
        out[idx] = kept
    return omega._like(omega.degree, out)


def inner_product(alpha: FourierForm, beta: FourierForm) -> complex:
    """L^2 inner product int <alpha, conj beta> dvol by Parseval."""
    alpha._check_compatible(beta)
    vol = TWO_PI ** alpha.n
    total = 0.0j
    for idx in sorted(set(alpha.coeffs) & set(beta.coeffs)):
        total += np.sum(alpha.coeffs[idx] * np.conj(beta.coeffs[idx]))
    return vol * total


def pairing(alpha: FourierForm, beta: FourierForm) -> complex:
    """int_{T^n} alpha ^ beta, evaluated exactly from coefficients."""
    if alpha.n != beta.n or alpha.modes != beta.modes:
        raise ValueError("forms live on different tori or truncations")
    if alpha.degree + beta.degree != alpha.n:
        raise ValueError("pairing needs complementary degrees")
    vol = TWO_PI ** alpha.n
    total = 0.0j
    for idx in sorted(alpha.coeffs):
        comp = idx.complement()
        if comp not in beta.coeffs:
            continue
        sign = wedge_basis(idx, comp).sign
        total += sign * np.sum(alpha.coeffs[idx] * _reflect(beta.coeffs[comp]))
    return vol * total


def eval_form_at(omega: FourierForm, x) -> np.ndarray:
    """Pointwise values by direct Fourier summation.

    Returns an array (..., C) over ``all_multi_indices(n, k)``.  The reduction
    is a fixed sequence of axis contractions, so results do not depend on
    threading.
    """
    x = np.asarray(x, dtype=float)
    n = omega.n
    flat = x.reshape(-1, n)
    m = np.arange(-omega.modes, omega.modes + 1)
    phases = [np.exp(1j * np.multiply.outer(flat[:, j], m)) for j in range(n)]
    basis_k = all_multi_indices(n, omega.degree)
    out = np.zeros((flat.shape[0], len(basis_k)))
    for pos, idx in enumerate(basis_k):
        arr = omega.coeffs.get(idx)
        if arr is None:
            continue
        acc = np.einsum("...a,pa->p...", arr, phases[-1], optimize=False)
        for j in range(n - 2, -1, -1):
            acc = np.einsum("p...a,pa->p...", acc, phases[j], optimize=False)
        out[:, pos] = acc.real
    return out.reshape(x.shape[:-1] + (len(basis_k),))


# -- knots as currents -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KnotCurrentForm:
    """The (n-1)-form representing integration over a closed curve."""

    form: FourierForm
    knot: Knot
    quad_n: int
    doubling_change: float

    @property
    def harmonic_norm(self) -> float:
        return harmonic_projection(self.form).max_abs()

    def homology_class(self) -> np.ndarray:
        """Winding vector read off from the harmonic part: (2 pi)^(n-1) * coefficients."""
        n = self.form.n
        centre = (self.form.modes,) * n
        out = np.zeros(n)
        for j in range(1, n + 1):
            single = MultiIndex((j,), n)
            comp = single.complement()
            sign = wedge_basis(comp, single).sign
            out[j - 1] = sign * self.form.component(comp)[centre].real * TWO_PI ** n / TWO_PI
        return out


def _current_coefficients(knot: Knot, modes: int, quad_n: int) -> Dict[MultiIndex, np.ndarray]:
    n = knot.n
    _, pos, vel, w = knot.nodes(quad_n)
    m = np.arange(-modes, modes + 1)
    phases = [np.exp(1j * np.multiply.outer(pos[:, j], m)) for j in range(n)]
    coeffs = {}
    for j in range(1, n + 1):
        single = MultiIndex((j,), n)
        comp = single.complement()
        # pairing contract: int L ^ e^{i m.x} dx_j = (2 pi)^n sign * L(-m, j^c)
        sign = wedge_basis(comp, single).sign
        acc = (w * vel[:, j - 1]).astype(complex)
        table = acc
        for a in range(n):
            table = np.einsum("s...,sa->s...a", table, phases[a], optimize=False)
        loop = np.sum(table, axis=0)  # loop[m] = sum_s w gamma'_j e^{i m.gamma}
        coeffs[comp] = _reflect(loop) / (sign * TWO_PI ** n)
    return coeffs


def current_from_knot(knot: Knot, modes: int = 12, quad_n: int = 512, check: bool = True,
                      tol: float = 1e-10) -> KnotCurrentForm:
    """The truncated form L with int L ^ eta = loop integral of eta over the knot."""
    if quad_n < 64 or quad_n & (quad_n - 1):
        raise ValueError("quad_n must be a power of two, at least 64")
    geometry = TorusGeometry(knot.n)
    coeffs = _current_coefficients(knot, modes, quad_n)
    change = 0.0
    if check:
        finer = _current_coefficients(knot, modes, 2 * quad_n)
        change = max(float(np.max(np.abs(coeffs[k] - finer[k]))) for k in coeffs)
        if change > tol:
            raise QuadratureConvergenceError(
                f"knot {knot.name!r}: doubling quad_n={quad_n} changed a coefficient by {change:.3e} > {tol:g}")
    form = FourierForm(geometry, knot.n - 1, modes, coeffs)
    return KnotCurrentForm(form, knot, quad_n, change)


def biot_savart_of_knot(knot_or_current, modes: int = 12, quad_n: int = 512) -> FourierForm:
    """d^* G (L - H) with the recorded sign constant."""
    current = knot_or_current if isinstance(knot_or_current, KnotCurrentForm) else current_from_knot(
        knot_or_current, modes, quad_n)
    form = current.form
    exact = form - harmonic_projection(form)
    return dstar_form(green_op(exact)).scaled(sign_constant("torus_biot_savart"))


# -- Ewald evaluation ------------------------------------------------------------------

def _near_potential_derivative(r: np.ndarray, t0: float) -> np.ndarray:
    """phi'(r) for phi(r) = int_0^t0 (4 pi t)^(-3/2) e^{-r^2/4t} dt = erfc(r / 2 sqrt(t0)) / (4 pi r)."""
    return (-np.exp(-r * r / (4.0 * t0)) / (4.0 * np.pi * r * np.sqrt(np.pi * t0))
            - erfc(r / (2.0 * np.sqrt(t0))) / (4.0 * np.pi * r * r))


class EwaldBiotSavart:
    """Biot-Savart 1-form of a knot in T^3 split at heat time t0.

    Near field: d^* of int_0^t0 e^{-t Laplacian} L dt, summed over lattice
    images of the Euclidean heat kernel.  Far field: d^* G e^{-t0 Laplacian}
    (L - H), evaluated spectrally.
    """

    def __init__(self, knot: Knot, modes: int = 12, quad_n: int = 512, t0: float = 1.0,
                 lattice_radius: int = 3, cutoff: float = 11.0, current: Optional[KnotCurrentForm] = None):
        if knot.n != 3:
            raise ValueError("Ewald evaluation is implemented for T^3")
        self.knot = knot
        self.t0 = float(t0)
        self.lattice_radius = int(lattice_radius)
        self.cutoff = float(cutoff) * np.sqrt(self.t0)
        self.quad_n = quad_n
        if current is None:
            current = current_from_knot(knot, modes, max(quad_n, 64))
        self.current = current
        form = current.form
        exact = form - harmonic_projection(form)
        far = dstar_form(green_op(heat_semigroup(exact, self.t0)))
        self.sign = sign_constant("torus_biot_savart")
        self.far = far.scaled(self.sign)
        _, self.nodes, vel, self.weight = knot.nodes(quad_n)
        n = 3
        density = np.zeros((quad_n, n))
        for j in range(1, n + 1):
            single = MultiIndex((j,), n)
            comp = single.complement()
            density[:, ft.position(comp)] = wedge_basis(comp, single).sign * vel[:, j - 1]
        # star of the current density 2-form, reused for every evaluation
        self.star_density = ft.star(density, n, n - 1)
        lo, hi = knot.bounding_box(1024)
        self._box = (lo, hi)
        rng = range(-self.lattice_radius, self.lattice_radius + 1)
        self.images = np.array([(a, b, c) for a in rng for b in rng for c in rng], dtype=float) * TWO_PI

    def near_field(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 3)
        out = np.zeros((flat.shape[0], 3))
        lo, hi = self._box
        pmin, pmax = flat.min(axis=0), flat.max(axis=0)
        for shift in self.images:
            gap = np.maximum(0.0, np.maximum(lo + shift - pmax, pmin - (hi + shift)))
            if np.linalg.norm(gap) > self.cutoff:
                continue
            nodes = self.nodes + shift
            for start in range(0, flat.shape[0], 512):
                pts = flat[start:start + 512]
                z = pts[:, None, :] - nodes[None, :, :]
                r = np.sqrt(np.sum(z * z, axis=-1))
                if np.any(r == 0.0):
                    raise ValueError("Ewald evaluation point lies on the knot")
                grad = (_near_potential_derivative(r, self.t0) / r)[..., None] * z
                # d(phi c) = d phi ^ c, and d^* = codiff_sign * star d star
                two = ft.wedge(grad, 1, self.star_density[None, :, :], 1, 3)
                one = codiff_sign(3, 2) * ft.star(two, 3, 2)
                out[start:start + 512] += self.weight * np.sum(one, axis=1)
        return self.sign * out.reshape(x.shape)

    def far_field(self, x: np.ndarray) -> np.ndarray:
        return eval_form_at(self.far, x)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.near_field(x) + self.far_field(x)


def ewald_eval_bs(knot: Knot, x, t0: float = 1.0, lattice_radius: int = 3, modes: int = 12,
                  quad_n: int = 512) -> np.ndarray:
    """BS(K)(x) as 1-form components (dx1, dx2, dx3)."""
    return EwaldBiotSavart(knot, modes, quad_n, t0, lattice_radius)(np.asarray(x, dtype=float))


# -- kernel identities -----------------------------------------------------------------

class _ModeDoubleForm:
    """Double form on T^n x T^n supported on mode pairs (-m, m).

    ``table[(J, K)][m]`` is the coefficient of e^{-i m.x} e^{i m.y} dx_J ^ dy_K.
    """

    def __init__(self, n: int, modes: int, table: Dict[Tuple[MultiIndex, MultiIndex], np.ndarray]):
        self.n, self.modes, self.table = n, modes, table

    def _x_forms(self) -> Dict[MultiIndex, FourierForm]:
        groups: Dict[MultiIndex, Dict[MultiIndex, np.ndarray]] = {}
        for (a, b), arr in self.table.items():
            groups.setdefault(b, {})[a] = _reflect(arr)
        out = {}
        for b, coeffs in groups.items():
            degree = next(iter(coeffs)).degree
            out[b] = FourierForm(TorusGeometry(self.n), degree, self.modes, coeffs)
        return out

    def _y_forms(self) -> Dict[MultiIndex, FourierForm]:
        groups: Dict[MultiIndex, Dict[MultiIndex, np.ndarray]] = {}
        for (a, b), arr in self.table.items():
            groups.setdefault(a, {})[b] = arr
        out = {}
        for a, coeffs in groups.items():
            degree = next(iter(coeffs)).degree
            out[a] = FourierForm(TorusGeometry(self.n), degree, self.modes, coeffs)
        return out

    def apply_x(self, op: Callable[[FourierForm], FourierForm]) -> "_ModeDoubleForm":
        table: Dict[Tuple[MultiIndex, MultiIndex], np.ndarray] = {}
        for b, form in self._x_forms().items():
            res = op(form)
            for a, arr in res.coeffs.items():
                table[(a, b)] = table.get((a, b), 0) + _reflect(arr)
        return _ModeDoubleForm(self.n, self.modes, table)

    def apply_y(self, op: Callable[[FourierForm], FourierForm], koszul: bool = True) -> "_ModeDoubleForm":
        table: Dict[Tuple[MultiIndex, MultiIndex], np.ndarray] = {}
        for a, form in self._y_forms().items():
            res = op(form)
            sign = -1.0 if (koszul and a.degree % 2) else 1.0
            for b, arr in res.coeffs.items():
                table[(a, b)] = table.get((a, b), 0) + sign * arr
        return _ModeDoubleForm(self.n, self.modes, table)

    def scaled(self, factor) -> "_ModeDoubleForm":
        return _ModeDoubleForm(self.n, self.modes, {k: factor * v for k, v in self.table.items()})

    def minus(self, other: "_ModeDoubleForm") -> "_ModeDoubleForm":
        keys = set(self.table) | set(other.table)
        zero = np.zeros((2 * self.modes + 1,) * self.n, dtype=complex)
        return _ModeDoubleForm(self.n, self.modes,
                               {k: self.table.get(k, zero) - other.table.get(k, zero) for k in keys})

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(v))) for v in self.table.values()), default=0.0)


def _green_kernel_double_form(n: int, k: int, modes: int, weights: np.ndarray) -> _ModeDoubleForm:
    """(-1)^{kn} (2 pi)^{-n} sum_m w(m) sum_{|I|=k} e^{-i m.x} (star dx_I) ^ e^{i m.y} dy_I.

    With w = 1/|m|^2 off the zero mode this is the Green kernel on k-forms,
    with w = 1 the (n-k, k) part of the diagonal, and with w supported on
    m = 0 the harmonic kernel.
    """
    table = {}
    base = (-1.0) ** (k * n) / TWO_PI ** n
    for idx in all_multi_indices(n, k):
        star = hodge_star_basis(idx)
        table[(star.index, idx)] = base * star.sign * weights.astype(complex)
    return _ModeDoubleForm(n, modes, table)


def _sum_tables(*parts: _ModeDoubleForm) -> _ModeDoubleForm:
    table: Dict[Tuple[MultiIndex, MultiIndex], np.ndarray] = {}
    for part in parts:
        for key, arr in part.table.items():
            table[key] = table[key] + arr if key in table else arr
    return _ModeDoubleForm(parts[0].n, parts[0].modes, table)


def dlf_identity_residual(k: int, modes: int = 12, n: int = 3) -> float:
    """max modewise |Laplacian(G_k / 2) - (diagonal - harmonic)| on the product torus.

    The product Laplacian is applied as Laplacian_x + Laplacian_y through the
    single-factor operator, not through the closed form 2|m|^2.
    """
    if not 0 <= k <= n:
        raise ValueError(f"degree {k} out of range 0..{n}")
    lam = _mode_norm_sq(n, modes)
    half_green = _green_kernel_double_form(n, k, modes, _green_factor(n, modes)).scaled(0.5)
    lhs = _sum_tables(half_green.apply_x(laplace_form), half_green.apply_y(laplace_form, koszul=False))
    diagonal = _green_kernel_double_form(n, k, modes, np.ones_like(lam))
    harmonic = _green_kernel_double_form(n, k, modes, (lam == 0).astype(float))
    return lhs.minus(diagonal.minus(harmonic)).max_abs()


def _dstar_x(kernel: _ModeDoubleForm) -> Optional[_ModeDoubleForm]:
    x_degree = next(iter(kernel.table))[0].degree
    return None if x_degree == 0 else kernel.apply_x(dstar_form)


def _dstar_y(kernel: _ModeDoubleForm) -> Optional[_ModeDoubleForm]:
    y_degree = next(iter(kernel.table))[1].degree
    return None if y_degree == 0 else kernel.apply_y(dstar_form)


def dlf2_identity_residual(k: Optional[int] = None, modes: int = 12, n: int = 3) -> float:
    """Residual of the Green-kernel codifferential identities on the product torus.

    With ``k`` given: max modewise |d_x^* G_k - d_y^* G_{k+1}|, where G_k is the
    kernel of the Green operator on k-forms (x-degree n-k, y-degree k).  For
    k = n both sides vanish by degree.  With ``k = None``: the total identity
    d^*(G/2) = d_y^* G for G = sum_k G_k, using d^* = d_x^* + d_y^*.

    d_y^* carries the Koszul sign (-1)^{x-degree} from moving past the x-factor.
    """
    green = _green_factor(n, modes)
    kernels = [_green_kernel_double_form(n, j, modes, green) for j in range(n + 1)]
    if k is not None:
        if not 0 <= k <= n:
            raise ValueError(f"degree {k} out of range 0..{n}")
        lhs = _dstar_x(kernels[k])
        rhs = _dstar_y(kernels[k + 1]) if k < n else None
        if lhs is None and rhs is None:
            return 0.0
        if lhs is None:
            return rhs.max_abs()
        if rhs is None:
            return lhs.max_abs()
        return lhs.minus(rhs).max_abs()
    parts_total = []
    parts_y = []
    for kernel in kernels:
        dx, dy = _dstar_x(kernel), _dstar_y(kernel)
        for part in (dx, dy):
            if part is not None:
                parts_total.append(part.scaled(0.5))
        if dy is not None:
            parts_y.append(dy)
    return _sum_tables(*parts_total).minus(_sum_tables(*parts_y)).max_abs()


# -- sign identities for currents ------------------------------------------------------

def verify_current_op_signs(samples: int = 100, n: int = 3, modes: int = 4, seed: int = 0) -> dict:
    """Check the three duality sign identities for T_omega(eta) = int omega ^ eta.

    For omega of degree k: T_omega(d eta) = (-1)^{k+1} T_{d omega}(eta),
    T_omega(d^* eta) = (-1)^k T_{d^* omega}(eta), T_omega(G eta) = T_{G omega}(eta).
    """
    rng = np.random.default_rng(seed)
    report = {"samples": samples, "n": n, "modes": modes, "identities": {}, "skipped": []}
    for k in range(n + 1):
        residuals = {"d": 0.0, "dstar": 0.0, "green": 0.0}
        for name in residuals:
            if name == "d" and k == n:
                report["skipped"].append({"identity": name, "k": k, "reason": "no test form of degree -1"})
            if name == "dstar" and k == 0:
                report["skipped"].append({"identity": name, "k": k, "reason": "test forms would need degree n+1"})
        for _ in range(samples):
            omega = random_form(rng, n, k, modes, decay=2.0)
            if k < n:
                eta = random_form(rng, n, n - k - 1, modes, decay=2.0)
                lhs = pairing(omega, d_form(eta))
                rhs = (-1) ** (k + 1) * pairing(d_form(omega), eta)
                residuals["d"] = max(residuals["d"], abs(lhs - rhs) / max(1.0, abs(lhs)))
            if k > 0:
                eta = random_form(rng, n, n - k + 1, modes, decay=2.0)
                lhs = pairing(omega, dstar_form(eta))
                rhs = (-1) ** k * pairing(dstar_form(omega), eta)
                residuals["dstar"] = max(residuals["dstar"], abs(lhs - rhs) / max(1.0, abs(lhs)))
            eta = random_form(rng, n, n - k, modes, decay=2.0)
            lhs = pairing(omega, green_op(eta))
            rhs = pairing(green_op(omega), eta)
            residuals["green"] = max(residuals["green"], abs(lhs - rhs) / max(1.0, abs(lhs)))
        report["identities"][k] = residuals
    report["max_residual"] = max(v for r in report["identities"].values() for v in r.values())
    return report
