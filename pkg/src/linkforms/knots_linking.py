"""Linking numbers of closed curves by three independent routes.

* :func:`gauss_linking` integrates the pullback of the solid-angle double
  form over K1 x K2 in R^3.
* :func:`crossing_linking` counts signed crossings of a planar projection.
* :func:`torus_linking` integrates the spectral Biot-Savart 1-form of K2
  along K1 inside the flat torus T^3.

The crossing count fixes the sign convention (right-handed crossings count
+1); the two integral backends each multiply by a frozen constant from
:mod:`linkforms.calibration`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gamma

from . import formtools as ft
from .calibration import sign_constant
from .curves import Knot, RegularityError
from .euclid_kernels import bs_diagonal_components
from .torus_spectral import EwaldBiotSavart, current_from_knot

__all__ = [
    "Knot",
    "LinkReport",
    "DistanceError",
    "HomologyError",
    "DegenerateProjectionError",
    "gauss_linking",
    "crossing_linking",
    "torus_linking",
    "b2_probe",
    "knot_normal_frame",
    "isotopy_perturb",
    "perturb_link",
    "hopf_pair",
    "whitehead_link",
    "cable_link",
    "embed_in_torus",
    "torus_hopf_pair",
]

TWO_PI = 2.0 * np.pi


class DistanceError(ValueError):
    """The two curves are too close for the quadrature to be trusted."""


class HomologyError(ValueError):
    """A knot in the torus is not nullhomologous."""


class DegenerateProjectionError(RuntimeError):
    """No generic projection direction was found."""


@dataclass(frozen=True)
class LinkReport:
    method: str
    raw: float
    rounded: int
    residual: float
    runtime: float
    params: dict = field(default_factory=dict)

    @property
    def confident(self) -> bool:
        return self.residual < 0.5

    @classmethod
    def from_raw(cls, method: str, raw: float, runtime: float, **params) -> "LinkReport":
        rounded = int(np.rint(raw))
        return cls(method, float(raw), rounded, abs(float(raw) - rounded), runtime, params)

    def as_dict(self, include_runtime: bool = True) -> dict:
        out = {"method": self.method, "raw": self.raw, "rounded": self.rounded, "residual": self.residual,
               "params": dict(self.params)}
        if include_runtime:
            out["runtime"] = self.runtime
        return out


def _check_separation(k1: Knot, k2: Knot, minimum: float, period: Optional[float] = None) -> float:
    dist = k1.min_distance(k2, 512, period)
    if dist < minimum:
        raise DistanceError(f"knots {k1.name!r} and {k2.name!r} come within {dist:.3e} < {minimum:g}")
    return dist


# -- Gauss integral --------------------------------------------------------------------

def gauss_linking(k1: Knot, k2: Knot, quad_n: int = 256, min_distance: float = 1e-3,
                  chunk: int = 64) -> LinkReport:
    """Product periodic-trapezoid quadrature of the pulled-back solid-angle form."""
    if k1.n != 3 or k2.n != 3:
        raise ValueError("the Gauss integral backend is implemented for curves in R^3")
    start = time.perf_counter()
    _check_separation(k1, k2, min_distance)
    _, x, dx, w1 = k1.nodes(quad_n)
    _, y, dy, w2 = k2.nodes(quad_n)
    total = 0.0
    for lo in range(0, quad_n, chunk):
        xs = x[lo:lo + chunk, None, :]
        comps = bs_diagonal_components(xs, y[None, :, :])
        block = np.zeros((xs.shape[0], quad_n))
        for (x_idx, y_idx), coeff in comps.items():
            if x_idx.degree != 1:
                continue
            i, j = x_idx.indices[0] - 1, y_idx.indices[0] - 1
            block += coeff * dx[lo:lo + chunk, i, None] * dy[None, :, j]
        total += float(np.sum(np.sum(block, axis=1)))
    raw = sign_constant("gauss_integral") * total * w1 * w2
    return LinkReport.from_raw("gauss", raw, time.perf_counter() - start, quad_n=quad_n)


# -- crossing oracle -------------------------------------------------------------------

def _projection_basis(direction: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    d = direction / np.linalg.norm(direction)
    helper = np.eye(3)[int(np.argmin(np.abs(d)))]
    u = np.cross(helper, d)
    u /= np.linalg.norm(u)
    v = np.cross(d, u)
    return u, v, d


def _signed_crossings(a: np.ndarray, b: np.ndarray, direction: np.ndarray, tol: float) -> Optional[int]:
    """Sum of crossing signs between closed polylines a and b, or None if degenerate."""
    u, v, d = _projection_basis(direction)
    a2 = np.stack([a @ u, a @ v], axis=-1)
    b2 = np.stack([b @ u, b @ v], axis=-1)
    ha, hb = a @ d, b @ d
    da = np.roll(a, -1, axis=0) - a
    db = np.roll(b, -1, axis=0) - b
    pa, pb = np.roll(a2, -1, axis=0) - a2, np.roll(b2, -1, axis=0) - b2
    total = 0
    for lo in range(0, a.shape[0], 256):
        p, r = a2[lo:lo + 256, None, :], pa[lo:lo + 256, None, :]
        q, s = b2[None, :, :], pb[None, :, :]
        denom = r[..., 0] * s[..., 1] - r[..., 1] * s[..., 0]
        qp = q - p
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (qp[..., 0] * s[..., 1] - qp[..., 1] * s[..., 0]) / denom
            tb = (qp[..., 0] * r[..., 1] - qp[..., 1] * r[..., 0]) / denom
        hit = (ta >= 0) & (ta < 1) & (tb >= 0) & (tb < 1)
        ia, ib = np.nonzero(hit)
        if ia.size == 0:
            continue
        ta_h, tb_h = ta[ia, ib], tb[ia, ib]
        # crossings too close to a vertex, or nearly tangent, make the count fragile
        if np.any(np.minimum(ta_h, 1 - ta_h) < tol) or np.any(np.minimum(tb_h, 1 - tb_h) < tol):
            return None
        seg_a = np.linalg.norm(r[ia, 0], axis=-1)
        seg_b = np.linalg.norm(s[0, ib], axis=-1)
        if np.any(np.abs(denom[ia, ib]) < 1e-3 * seg_a * seg_b):
            return None
        ia_g = ia + lo
        height_a = ha[ia_g] + ta_h * (da[ia_g] @ d)
        height_b = hb[ib] + tb_h * (db[ib] @ d)
        gap = height_a - height_b
        if np.any(np.abs(gap) < 1e-9):
            return None
        over = np.where(gap[:, None] > 0, da[ia_g], db[ib])
        under = np.where(gap[:, None] > 0, db[ib], da[ia_g])
        signs = np.sign(np.cross(over, under) @ d)
        total += int(np.sum(signs))
    return total


def crossing_linking(k1: Knot, k2: Knot, direction: Optional[Sequence[float]] = None, samples: int = 2048,
                     seed: int = 0, retries: int = 20, tol: float = 1e-6) -> int:
    """Half the signed crossing count of a generic planar projection.

    The viewer looks along ``-direction``; a crossing counts +1 when
    (over tangent x under tangent) points toward the viewer.
    """
    if k1.n != 3 or k2.n != 3:
        raise ValueError("the crossing oracle is implemented for curves in R^3")
    _, a, _, _ = k1.nodes(samples)
    _, b, _, _ = k2.nodes(samples)
    rng = np.random.default_rng(seed)
    candidate = None if direction is None else np.asarray(direction, dtype=float)
    for _ in range(retries):
        if candidate is None:
            candidate = rng.standard_normal(3)
        total = _signed_crossings(a, b, candidate, tol)
        if total is not None:
            if total % 2:
                candidate = None
                continue
            return total // 2
        candidate = None
    raise DegenerateProjectionError(f"no generic projection for {k1.name!r}, {k2.name!r} after {retries} tries")


# -- torus backend ---------------------------------------------------------------------

def torus_linking(k1: Knot, k2: Knot, modes: int = 12, quad_n: int = 512, t0: float = 1.0,
                  lattice_radius: int = 3, min_distance: float = 0.05,
                  homology_tol: float = 1e-10) -> LinkReport:
    """Loop integral of the Biot-Savart 1-form of K2 along K1 in T^3."""
    if k1.n != 3 or k2.n != 3:
        raise ValueError("the torus backend is implemented for T^3")
    start = time.perf_counter()
    k1, k2 = k1.with_ambient("torus"), k2.with_ambient("torus")
    _check_separation(k1, k2, min_distance, period=TWO_PI)
    currents = []
    for knot in (k1, k2):
        current = current_from_knot(knot, modes, quad_n)
        if current.harmonic_norm > homology_tol:
            cls = np.round(current.homology_class()).astype(int).tolist()
            raise HomologyError(f"knot {knot.name!r} is not nullhomologous: class {cls}, "
                                f"harmonic part {current.harmonic_norm:.3e}")
        currents.append(current)
    field = EwaldBiotSavart(k2, modes, quad_n, t0, lattice_radius, current=currents[1])
    _, x, dx, w = k1.nodes(quad_n)
    values = field(x)
    raw = sign_constant("torus_pairing") * float(np.sum(np.sum(values * dx, axis=1))) * w
    return LinkReport.from_raw("torus", raw, time.perf_counter() - start, modes=modes, quad_n=quad_n, t0=t0,
                               lattice_radius=lattice_radius)


# -- transverse disk probe -------------------------------------------------------------

def knot_normal_frame(knot: Knot, s: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(point, normal frame (2, 3), unit tangent) with (e1, e2, tangent) positively oriented."""
    point = knot.position(np.array([s]))[0]
    tangent = knot.derivative(np.array([s]))[0]
    tangent = tangent / np.linalg.norm(tangent)
    helper = np.eye(3)[int(np.argmin(np.abs(tangent)))]
    e1 = helper - (helper @ tangent) * tangent
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(tangent, e1)
    return point, np.stack([e1, e2]), tangent


def b2_probe(bs_field: Callable[[np.ndarray], np.ndarray], harmonic: Optional[np.ndarray], point,
             normal_frame, radius: float, quad_n: int = 256,
             crossing_check: Optional[Callable[[np.ndarray, np.ndarray, float], int]] = None) -> float:
    """int_B H + int_{dB} Omega for the normal disk B of the given radius.

    ``normal_frame`` (c, n) orders the normal space so that (normal frame,
    tangent frame) is positively oriented; the sphere dB carries the outward
    normal first.  ``bs_field`` maps points (..., n) to components over the
    (c-1)-form basis, and ``harmonic`` is a constant c-form array (or None).
    """
    point = np.asarray(point, dtype=float)
    frame = np.asarray(normal_frame, dtype=float)
    c, n = frame.shape
    if crossing_check is not None and crossing_check(point, frame, radius) > 1:
        raise ValueError("the probe disk meets the knot more than once")
    if c == 2:
        alpha = TWO_PI * np.arange(quad_n) / quad_n
        u, tangents = ft.sphere_frame(frame, (alpha,))
        weights = np.full(quad_n, TWO_PI / quad_n) * radius
        vectors = tangents
    elif c == 3:
        nodes, gl_w = np.polynomial.legendre.leggauss(quad_n // 2)
        polar = np.arccos(-nodes)
        az = TWO_PI * np.arange(quad_n) / quad_n
        polar_g, az_g = np.meshgrid(polar, az, indexing="ij")
        u, tangents = ft.sphere_frame(frame, (polar_g.ravel(), az_g.ravel()))
        # sin(polar) d(polar) = d(-cos polar), so the Legendre weights carry the area element
        weights = np.repeat(gl_w, quad_n) * (TWO_PI / quad_n) * radius ** 2
        vectors = tangents
    else:
        raise ValueError(f"probe disks only for normal dimension 2 or 3, got {c}")
    values = np.asarray(bs_field(point + radius * u))
    boundary = float(np.sum(weights * ft.evaluate_on_vectors(values, n, c - 1, vectors)))
    interior = 0.0
    if harmonic is not None:
        h_val = float(ft.evaluate_on_vectors(np.asarray(harmonic, dtype=float), n, c, frame))
        interior = h_val * _ball_volume(c) * radius ** c
    return interior + boundary


def _ball_volume(c: int) -> float:
    return float(np.pi ** (c / 2) / gamma(c / 2 + 1))


# -- perturbations and fixtures --------------------------------------------------------

def isotopy_perturb(knot: Knot, seed: int, amplitude: float, harmonics: int = 3,
                    separation: Optional[float] = None) -> Knot:
    """Add a seeded smooth displacement of sup-norm at most ``amplitude``."""
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    if separation is not None and amplitude >= 0.5 * separation:
        raise ValueError(f"amplitude {amplitude:g} is not below half the separation {separation:g}")
    if amplitude == 0:
        return knot
    rng = np.random.default_rng(seed)
    cos_d = rng.standard_normal((knot.n, harmonics))
    sin_d = rng.standard_normal((knot.n, harmonics))
    bound = np.sqrt(np.sum(np.sum(np.abs(cos_d) + np.abs(sin_d), axis=1) ** 2))
    scale = amplitude / bound
    try:
        return knot.displaced(scale * cos_d, scale * sin_d)
    except RegularityError as err:
        raise RegularityError(f"perturbation of {knot.name!r} (seed {seed}) broke regularity: {err}") from err


def perturb_link(k1: Knot, k2: Knot, seed: int, fraction: float = 0.25,
                 period: Optional[float] = None) -> Tuple[Knot, Knot]:
    """Perturb both curves by at most ``fraction`` of their separation each.

    With fraction < 1/2 the straight-line homotopy keeps the curves disjoint,
    so the perturbed pair is isotopic to the original one.
    """
    if not 0 <= fraction < 0.5:
        raise ValueError("fraction must lie in [0, 0.5)")
    sep = k1.min_distance(k2, 1024, period)
    amp = fraction * sep
    return (isotopy_perturb(k1, 2 * seed, amp, separation=sep),
            isotopy_perturb(k2, 2 * seed + 1, amp, separation=sep))


def hopf_pair() -> Tuple[Knot, Knot]:
    k1 = Knot.from_fourier([0, 0, 0], [[1], [0], [0]], [[0], [1], [0]], name="hopf_a")
    k2 = Knot.from_fourier([1, 0, 0], [[1], [0], [0]], [[0], [0], [1]], name="hopf_b")
    return k1, k2


def whitehead_link(height: float = 1.0) -> Tuple[Knot, Knot]:
    """A figure-eight loop threaded by an oval that rises through both lobes.

    The oval passes up through one lobe and down through the other, so the
    two intersection signs with the figure eight's spanning surface cancel.
    """
    eight = Knot.from_fourier([0, 0, 0], [[1, 0], [0, 0], [0, 0]], [[0, 0], [0, 0.5], [0.2, 0]],
                              name="whitehead_eight")
    oval = Knot.from_fourier([0, 0, 0], [[0.5, 0], [0, 0], [0, 0]], [[-1.5, 0], [0.3, 0], [0, height]],
                             name="whitehead_oval")
    return eight, oval


def cable_link(tube_radius: float = 0.2) -> Tuple[Knot, Knot]:
    """A unit circle and a 2-strand cable of a second circle threaded through it.

    The cable runs twice along the core circle while turning once around it
    meridionally, so it closes up after one period and links the first circle
    twice.
    """
    partner = Knot.from_fourier([0, 0, 0], [[1], [0], [0]], [[0], [1], [0]], name="cable_circle")

    def cable(s: np.ndarray) -> np.ndarray:
        along = 2 * s
        centre = np.stack([1 + np.cos(along), 0 * s, np.sin(along)], axis=-1)
        radial = np.stack([np.cos(along), 0 * s, np.sin(along)], axis=-1)
        binormal = np.array([0.0, 1.0, 0.0])
        return centre + tube_radius * (np.cos(s)[:, None] * radial + np.sin(s)[:, None] * binormal)

    return partner, Knot.from_function(cable, samples=64, name="cable_2_1")


def embed_in_torus(knot: Knot, scale: float = 0.25, centre=(np.pi, np.pi, np.pi)) -> Knot:
    """Shrink a Euclidean curve about the origin and move it to ``centre`` of the fundamental cube."""
    moved = knot.scaled(scale).translated(np.asarray(centre, dtype=float))
    lo, hi = moved.bounding_box()
    if np.any(lo <= 0) or np.any(hi >= TWO_PI):
        raise ValueError(f"knot {knot.name!r} does not fit in the fundamental cube after scaling")
    return moved.with_ambient("torus")


def torus_hopf_pair() -> Tuple[Knot, Knot]:
    k1, k2 = hopf_pair()
    return (embed_in_torus(k1).renamed("torus_hopf_a"), embed_in_torus(k2).renamed("torus_hopf_b"))
