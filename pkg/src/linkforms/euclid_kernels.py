"""Closed-form Green, heat and Biot-Savart kernels on Euclidean space.

Double forms on R^n x R^n are expanded in the basis dx_J ^ dy_K with the
x-slot written first.  All kernels are evaluated pointwise; nothing is tabulated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import gamma, pi
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from . import formtools as ft
from .exterior_core import (
    MultiIndex,
    all_multi_indices,
    epsilon_exponent,
    permutation_sign,
    wedge_basis,
)

__all__ = [
    "SingularInputError",
    "UnsupportedCodimensionError",
    "EuclidPoint",
    "DoubleFormValue",
    "LinearSubspaceSpec",
    "sphere_volume",
    "green_kernel_value",
    "bs_delta0_value",
    "bs_delta0_components",
    "bs_diagonal_value",
    "bs_diagonal_components",
    "bs_linear_subspace_value",
    "green_linear_subspace_value",
    "heat_evolve_curve_r3",
    "heat_evolve_components",
]


class SingularInputError(ValueError):
    """Raised when a kernel is evaluated on its singular set."""


class UnsupportedCodimensionError(ValueError):
    """Raised for linear subspaces whose codimension is below 3."""


@dataclass(frozen=True)
class EuclidPoint:
    coords: Tuple[float, ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.coords, dtype=float).ravel()
        if not np.all(np.isfinite(arr)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "coords", tuple(float(c) for c in arr))

    @property
    def n(self) -> int:
        return len(self.coords)

    def array(self) -> np.ndarray:
        return np.array(self.coords)


def _as_array(x) -> np.ndarray:
    if isinstance(x, EuclidPoint):
        return x.array()
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


@dataclass
class DoubleFormValue:
    """Coefficients of a double form at one point pair.

    ``coeffs`` maps ``(x_index, y_index)`` to a real number; missing keys are
    zero.  A single-slot form (no y dependence) uses the empty y-index.  When
    ``q`` is ``None`` the value mixes bidegrees and ``p`` is the total degree.
    """

    n: int
    p: int
    q: Optional[int]
    coeffs: Dict[Tuple[MultiIndex, MultiIndex], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for (a, b) in self.coeffs:
            if a.n != self.n or b.n != self.n:
                raise ValueError(f"index pair ({a}, {b}) lives in the wrong dimension")
            if self.q is None:
                ok = a.degree + b.degree == self.p
            else:
                ok = a.degree == self.p and b.degree == self.q
            if not ok:
                raise ValueError(f"index pair ({a}, {b}) does not have bidegree ({self.p}, {self.q})")

    def get(self, x_index, y_index=()) -> float:
        a = x_index if isinstance(x_index, MultiIndex) else MultiIndex(tuple(x_index), self.n)
        b = y_index if isinstance(y_index, MultiIndex) else MultiIndex(tuple(y_index), self.n)
        return self.coeffs.get((a, b), 0.0)

    def max_abs_difference(self, other: "DoubleFormValue") -> float:
        keys = set(self.coeffs) | set(other.coeffs)
        return max((abs(self.coeffs.get(k, 0.0) - other.coeffs.get(k, 0.0)) for k in keys), default=0.0)

    def scaled(self, factor: float) -> "DoubleFormValue":
        return DoubleFormValue(self.n, self.p, self.q, {k: factor * v for k, v in self.coeffs.items()})

    def reflected(self) -> "DoubleFormValue":
        """Pull back through the swap (x, y) -> (y, x).

        dx_J ^ dy_K becomes dy_J ^ dx_K = (-1)^(|J||K|) dx_K ^ dy_J.
        """
        coeffs = {}
        for (a, b), v in self.coeffs.items():
            sign = -1.0 if (a.degree * b.degree) % 2 else 1.0
            coeffs[(b, a)] = sign * v
        if self.q is None:
            return DoubleFormValue(self.n, self.p, None, coeffs)
        return DoubleFormValue(self.n, self.q, self.p, coeffs)

    def single_slot_array(self) -> np.ndarray:
        """Component array of a form with no y-slot (q = 0)."""
        if self.q != 0:
            raise ValueError("only defined for bidegree (p, 0)")
        empty = MultiIndex((), self.n)
        return np.array([self.coeffs.get((idx, empty), 0.0) for idx in all_multi_indices(self.n, self.p)])

    @classmethod
    def from_single_slot(cls, arr: np.ndarray, n: int, p: int) -> "DoubleFormValue":
        empty = MultiIndex((), n)
        coeffs = {(idx, empty): float(v) for idx, v in zip(all_multi_indices(n, p), arr) if v != 0.0}
        return cls(n, p, 0, coeffs)


@dataclass(frozen=True)
class LinearSubspaceSpec:
    """An oriented k-dimensional linear subspace L of R^n with an adapted frame.

    ``frame`` holds n orthonormal rows: first an oriented basis of L, then an
    oriented basis of the orthogonal complement.  Orientations must satisfy
    ori(L-perp) ^ ori(L) = ori(R^n).
    """

    n: int
    k: int
    frame: Tuple[Tuple[float, ...], ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.frame, dtype=float)
        if arr.shape != (self.n, self.n):
            raise ValueError(f"frame must be {self.n}x{self.n}, got {arr.shape}")
        if not 0 <= self.k < self.n:
            raise ValueError("subspace dimension must satisfy 0 <= k < n")
        if np.max(np.abs(arr @ arr.T - np.eye(self.n))) > 1e-12:
            raise ValueError("frame is not orthonormal to 1e-12")
        normal_first = np.vstack([arr[self.k:], arr[: self.k]])
        if np.linalg.det(normal_first) <= 0:
            raise ValueError("frame orientation violates ori(L-perp) ^ ori(L) = ori(R^n)")
        object.__setattr__(self, "frame", tuple(tuple(float(v) for v in row) for row in arr))

    @property
    def tangent(self) -> np.ndarray:
        return np.asarray(self.frame)[: self.k]

    @property
    def normal(self) -> np.ndarray:
        return np.asarray(self.frame)[self.k:]

    @property
    def codim(self) -> int:
        return self.n - self.k

    @classmethod
    def coordinate(cls, n: int, axes: Iterable[int]) -> "LinearSubspaceSpec":
        """Span of the given 1-based coordinate axes, with a compatible normal frame."""
        axes = list(axes)
        k = len(axes)
        eye = np.eye(n)
        rest = [i for i in range(1, n + 1) if i not in axes]
        rows = [eye[a - 1] for a in axes] + [eye[i - 1] for i in rest]
        frame = np.array(rows)
        normal_first = np.vstack([frame[k:], frame[:k]])
        if np.linalg.det(normal_first) < 0:
            if n - k >= 1:
                frame[k] = -frame[k]
            else:  # pragma: no cover - k = n excluded above
                frame[0] = -frame[0]
        return cls(n, k, tuple(map(tuple, frame)))


def sphere_volume(m: int) -> float:
    """Volume of the unit m-sphere in R^(m+1): 2 pi^((m+1)/2) / Gamma((m+1)/2)."""
    if m < 0:
        raise ValueError("sphere dimension must be non-negative")
    return 2.0 * pi ** ((m + 1) / 2.0) / gamma((m + 1) / 2.0)


def _green_constant(n: int) -> float:
    return 1.0 / ((n - 2) * sphere_volume(n - 1))


def green_kernel_value(x, y, k: int) -> DoubleFormValue:
    """Green kernel on k-forms, bidegree (n-k, k)."""
    xa, ya = _as_array(x), _as_array(y)
    n = xa.size
    if n < 3:
        raise ValueError("the Euclidean Green kernel needs n >= 3")
    if not 0 <= k <= n:
        raise ValueError(f"degree {k} out of range 0..{n}")
    dist = float(np.linalg.norm(xa - ya))
    if dist == 0.0:
        raise SingularInputError("Green kernel evaluated at coincident points")
    scale = _green_constant(n) * (-1.0) ** (k * n) * dist ** (2 - n)
    coeffs = {}
    for idx in all_multi_indices(n, k):
        sign = -1.0 if epsilon_exponent(idx) % 2 else 1.0
        coeffs[(idx.complement(), idx)] = sign * scale
    return DoubleFormValue(n, n - k, k, coeffs)


def bs_delta0_components(x: np.ndarray) -> np.ndarray:
    """Vectorised solid-angle form: array (..., n) over the (n-1)-form basis."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0.0):
        raise SingularInputError("Biot-Savart form of a point evaluated at the point")
    out = np.zeros(x.shape[:-1] + (n,))
    scale = 1.0 / (sphere_volume(n - 1) * r ** n)
    for i in range(1, n + 1):
        idx = MultiIndex(tuple(j for j in range(1, n + 1) if j != i), n)
        out[..., ft.position(idx)] = (-1.0) ** (i - 1) * x[..., i - 1] * scale
    return out


def bs_delta0_value(x) -> DoubleFormValue:
    """Normalised solid-angle (n-1)-form at x, bidegree (n-1, 0)."""
    xa = _as_array(x)
    return DoubleFormValue.from_single_slot(bs_delta0_components(xa), xa.size, xa.size - 1)


def _difference_expansion(n: int, degree: int) -> Dict[MultiIndex, Dict[Tuple[MultiIndex, MultiIndex], float]]:
    """Expand (dx_{i1} - dy_{i1}) ^ ... ^ (dx_{ip} - dy_{ip}) into x-first basis terms."""
    table = {}
    for idx in all_multi_indices(n, degree):
        terms: Dict[Tuple[MultiIndex, MultiIndex], float] = {}
        for choice in product((0, 1), repeat=degree):
            xs = tuple(i for i, c in zip(idx.indices, choice) if c == 0)
            ys = tuple(i for i, c in zip(idx.indices, choice) if c == 1)
            # moving the y-factors past the x-factors keeps relative order within each slot
            order = [(c, pos) for pos, c in enumerate(choice)]
            perm = [pos for c, pos in sorted(order, key=lambda t: (t[0], t[1]))]
            sign = permutation_sign(tuple(perm)) * (-1) ** len(ys)
            key = (MultiIndex(xs, n), MultiIndex(ys, n))
            terms[key] = terms.get(key, 0.0) + sign
        table[idx] = terms
    return table


def bs_diagonal_components(x: np.ndarray, y: np.ndarray) -> Dict[Tuple[MultiIndex, MultiIndex], np.ndarray]:
    """Vectorised pullback of the solid-angle form through (x, y) -> x - y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[-1]
    base = bs_delta0_components(x - y)
    out: Dict[Tuple[MultiIndex, MultiIndex], np.ndarray] = {}
    for idx, terms in _difference_expansion(n, n - 1).items():
        coeff = base[..., ft.position(idx)]
        for key, sign in terms.items():
            if key in out:
                out[key] = out[key] + sign * coeff
            else:
                out[key] = sign * coeff
    return out


def bs_diagonal_value(x, y) -> DoubleFormValue:
    """Biot-Savart form of the diagonal of R^n x R^n, all (p, q) parts with p + q = n - 1."""
    xa, ya = _as_array(x), _as_array(y)
    n = xa.size
    if np.array_equal(xa, ya):
        raise SingularInputError("diagonal kernel evaluated at coincident points")
    comps = bs_diagonal_components(xa, ya)
    return DoubleFormValue(n, n - 1, None, {key: float(v) for key, v in comps.items() if v != 0.0})


def bidegree_part(value: DoubleFormValue, p: int, q: int) -> DoubleFormValue:
    """Select the (p, q) component of a mixed-degree double form value."""
    coeffs = {(a, b): v for (a, b), v in value.coeffs.items() if a.degree == p and b.degree == q}
    return DoubleFormValue(value.n, p, q, coeffs)


def _check_subspace_point(spec: LinearSubspaceSpec, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if spec.codim < 3:
        raise UnsupportedCodimensionError(
            f"subspace kernels need codimension >= 3, got {spec.codim}")
    xa = _as_array(x)
    if xa.shape[-1] != spec.n:
        raise ValueError("point dimension does not match subspace ambient dimension")
    normal = spec.normal
    coords = xa @ normal.T
    r = np.linalg.norm(coords, axis=-1)
    if np.any(r == 0.0):
        raise SingularInputError("subspace kernel evaluated on the subspace")
    return xa, coords, r


def bs_linear_subspace_components(spec: LinearSubspaceSpec, x: np.ndarray) -> np.ndarray:
    """Vectorised Biot-Savart form of L, array over the (n-k-1)-form basis."""
    xa, coords, r = _check_subspace_point(spec, x)
    c = spec.codim
    normal = spec.normal
    grad_r = (coords / r[..., None]) @ normal
    vol_normal = ft.covectors_wedge(normal)
    vol_b = np.broadcast_to(vol_normal, grad_r.shape[:-1] + vol_normal.shape)
    form = ft.contract(grad_r, vol_b, spec.n, c)
    return form / (sphere_volume(c - 1) * r[..., None] ** (c - 1))


def bs_linear_subspace_value(spec: LinearSubspaceSpec, x) -> DoubleFormValue:
    comps = bs_linear_subspace_components(spec, _as_array(x))
    return DoubleFormValue.from_single_slot(comps, spec.n, spec.codim - 1)


def green_linear_subspace_components(spec: LinearSubspaceSpec, x: np.ndarray) -> np.ndarray:
    xa, coords, r = _check_subspace_point(spec, x)
    c = spec.codim
    vol_normal = ft.covectors_wedge(spec.normal)
    scale = 1.0 / ((c - 2) * sphere_volume(c - 1)) * r ** (2 - c)
    return scale[..., None] * vol_normal


def green_linear_subspace_value(spec: LinearSubspaceSpec, x) -> DoubleFormValue:
    comps = green_linear_subspace_components(spec, _as_array(x))
    return DoubleFormValue.from_single_slot(comps, spec.n, spec.codim)


# -- heat evolution of a curve in R^3 --------------------------------------------------

def _current_density_signs(n: int) -> np.ndarray:
    """sigma_j with dx_{j^c} ^ dx_j = sigma_j dvol."""
    signs = np.empty(n)
    for j in range(1, n + 1):
        single = MultiIndex((j,), n)
        signs[j - 1] = wedge_basis(single.complement(), single).sign
    return signs


def heat_quadrature_size(length: float, t: float, minimum: int = 256) -> int:
    """Power-of-two node count resolving a Gaussian of width sqrt(t) on a curve of given length."""
    need = 12.0 * length / np.sqrt(t)
    size = minimum
    while size < need:
        size *= 2
    return size


def heat_evolve_components(knot, t: float, x: np.ndarray, quad_n: Optional[int] = None) -> np.ndarray:
    """Vectorised heat evolution of a closed curve's current in R^3.

    Returns an array (..., 3) over the 2-form basis (dx1^dx2, dx1^dx3, dx2^dx3).
    """
    if not t > 0:
        raise ValueError(f"heat evolution needs t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    if quad_n is None:
        quad_n = heat_quadrature_size(knot.length(), t)
    s = 2.0 * np.pi * np.arange(quad_n) / quad_n
    pos = knot.position(s)
    vel = knot.derivative(s)
    weight = 2.0 * np.pi / quad_n
    sig = _current_density_signs(3)
    flat = x.reshape(-1, 3)
    out = np.zeros((flat.shape[0], 3))
    norm = (4.0 * np.pi * t) ** -1.5
    chunk = max(1, 2_000_000 // quad_n)
    for start in range(0, flat.shape[0], chunk):
        pts = flat[start:start + chunk]
        diff = pts[:, None, :] - pos[None, :, :]
        kern = norm * np.exp(-np.sum(diff * diff, axis=-1) / (4.0 * t)) * weight
        tang = kern @ vel
        for j in range(1, 4):
            comp = MultiIndex((j,), 3).complement()
            out[start:start + chunk, ft.position(comp)] += sig[j - 1] * tang[:, j - 1]
    return out.reshape(x.shape[:-1] + (3,))


def heat_evolve_curve_r3(knot, t: float, x, quad_n: Optional[int] = None) -> DoubleFormValue:
    """e^{-t Laplacian} applied to the current of a closed curve in R^3, evaluated at x."""
    xa = _as_array(x)
    if xa.shape != (3,):
        raise ValueError("heat_evolve_curve_r3 evaluates at a single point of R^3")
    comps = heat_evolve_components(knot, t, xa, quad_n)
    return DoubleFormValue.from_single_slot(comps, 3, 2)
