"""Closed parametric curves with period 2 pi.

A :class:`Knot` is stored as a real Fourier descriptor per coordinate, plus an
integer winding vector for curves that close up only modulo the torus lattice
(2 pi Z)^n.  Sampled curves are converted to descriptors by FFT, which gives
the spectral interpolation used for their derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = ["Knot", "KnotError", "ClosureError", "RegularityError"]

TWO_PI = 2.0 * np.pi


class KnotError(ValueError):
    """Base class for invalid curve data."""


class ClosureError(KnotError):
    pass


class RegularityError(KnotError):
    pass


@dataclass(frozen=True, eq=False)
class Knot:
    """gamma(s) = center + winding * s + sum_k cos_k cos(k s) + sin_k sin(k s).

    ``cos_coeffs`` and ``sin_coeffs`` have shape (n, K) for harmonics 1..K.
    ``orientation = -1`` traverses the same curve backwards.
    """

    center: np.ndarray
    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray
    winding: np.ndarray
    orientation: int = 1
    ambient: str = "euclidean"
    name: str = ""

    def __post_init__(self) -> None:
        center = np.asarray(self.center, dtype=float).ravel()
        n = center.size
        cos_c = np.asarray(self.cos_coeffs, dtype=float).reshape(n, -1)
        sin_c = np.asarray(self.sin_coeffs, dtype=float).reshape(n, -1)
        if cos_c.shape != sin_c.shape:
            raise KnotError("cosine and sine coefficient tables must match in shape")
        winding = np.asarray(self.winding, dtype=float).ravel()
        if winding.size != n or np.any(winding != np.round(winding)):
            raise KnotError("winding must be an integer vector of the ambient dimension")
        if self.orientation not in (1, -1):
            raise KnotError("orientation must be +1 or -1")
        if self.ambient not in ("euclidean", "torus"):
            raise KnotError(f"unknown ambient {self.ambient!r}")
        if self.ambient == "euclidean" and np.any(winding != 0):
            raise ClosureError(f"knot {self.name!r}: a Euclidean curve cannot wind around a lattice direction")
        for attr, val in (("center", center), ("cos_coeffs", cos_c), ("sin_coeffs", sin_c), ("winding", winding)):
            val.setflags(write=False)
            object.__setattr__(self, attr, val)
        if not (np.all(np.isfinite(cos_c)) and np.all(np.isfinite(sin_c)) and np.all(np.isfinite(center))):
            raise KnotError(f"knot {self.name!r}: non-finite coefficients")
        speed = np.linalg.norm(self.derivative(TWO_PI * np.arange(1024) / 1024), axis=-1)
        if np.min(speed) < 1e-6:
            raise RegularityError(f"knot {self.name!r}: |gamma'| drops to {np.min(speed):.3e} < 1e-6")

    # -- construction -----------------------------------------------------------------

    @classmethod
    def from_fourier(cls, center: Sequence[float], cos_coeffs, sin_coeffs, winding=None,
                     orientation: int = 1, ambient: str = "euclidean", name: str = "") -> "Knot":
        center = np.asarray(center, dtype=float)
        if winding is None:
            winding = np.zeros(center.size)
        return cls(center, np.asarray(cos_coeffs, dtype=float), np.asarray(sin_coeffs, dtype=float),
                   np.asarray(winding, dtype=float), orientation, ambient, name)

    @classmethod
    def from_samples(cls, points, orientation: int = 1, ambient: str = "euclidean", name: str = "",
                     closure_tol: float = 1e-10) -> "Knot":
        """Build from N + 1 uniformly spaced samples s_j = 2 pi j / N, j = 0..N.

        The last sample must repeat the first (modulo the lattice for torus
        curves); this is the closure check.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 5:
            raise KnotError(f"knot {name!r}: need at least 5 samples of shape (N+1, n)")
        jump = pts[-1] - pts[0]
        if ambient == "torus":
            winding = np.round(jump / TWO_PI)
        else:
            winding = np.zeros(pts.shape[1])
        gap = np.max(np.abs(jump - TWO_PI * winding))
        if gap > closure_tol:
            raise ClosureError(f"knot {name!r} is not closed: endpoint gap {gap:.3e} > {closure_tol:g}")
        count = pts.shape[0] - 1
        s = TWO_PI * np.arange(count) / count
        periodic = pts[:-1] - s[:, None] * winding[None, :]
        spec = np.fft.rfft(periodic, axis=0) / count
        center = spec[0].real
        harmonics = spec[1:]
        cos_c = 2.0 * harmonics.real.T
        sin_c = -2.0 * harmonics.imag.T
        if count % 2 == 0:
            # the Nyquist term is real and must not be doubled
            cos_c[:, -1] *= 0.5
            sin_c[:, -1] = 0.0
        return cls(center, cos_c, sin_c, winding, orientation, ambient, name)

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], samples: int = 256,
                      winding=None, orientation: int = 1, ambient: str = "euclidean", name: str = "") -> "Knot":
        """Fourier descriptor of a smooth periodic map s -> gamma(s) by sampling."""
        s = TWO_PI * np.arange(samples + 1) / samples
        pts = np.asarray(func(s), dtype=float)
        if winding is not None:
            pts[-1] = pts[0] + TWO_PI * np.asarray(winding, dtype=float)
        else:
            pts[-1] = pts[0] if ambient == "euclidean" else pts[-1]
        knot = cls.from_samples(pts, orientation=orientation, ambient=ambient, name=name, closure_tol=1e-8)
        return knot.truncated(1e-15)

    # -- evaluation ---------------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.center.size

    @property
    def harmonics(self) -> int:
        return self.cos_coeffs.shape[1]

    def _param(self, s) -> np.ndarray:
        return self.orientation * np.asarray(s, dtype=float)

    def position(self, s) -> np.ndarray:
        u = self._param(s)
        k = np.arange(1, self.harmonics + 1)
        ang = np.multiply.outer(u, k)
        out = np.cos(ang) @ self.cos_coeffs.T + np.sin(ang) @ self.sin_coeffs.T
        return out + self.center + np.multiply.outer(u, self.winding)

    def derivative(self, s) -> np.ndarray:
        u = self._param(s)
        k = np.arange(1, self.harmonics + 1)
        ang = np.multiply.outer(u, k)
        out = (np.cos(ang) * k) @ self.sin_coeffs.T - (np.sin(ang) * k) @ self.cos_coeffs.T
        out = out + self.winding
        return self.orientation * out

    def second_derivative(self, s) -> np.ndarray:
        u = self._param(s)
        k = np.arange(1, self.harmonics + 1)
        ang = np.multiply.outer(u, k)
        return -((np.cos(ang) * k**2) @ self.cos_coeffs.T + (np.sin(ang) * k**2) @ self.sin_coeffs.T)

    def nodes(self, count: int):
        """Uniform periodic-trapezoid nodes: (s, positions, derivatives, weight)."""
        s = TWO_PI * np.arange(count) / count
        return s, self.position(s), self.derivative(s), TWO_PI / count

    def length(self, count: int = 2048) -> float:
        _, _, vel, w = self.nodes(count)
        return float(np.sum(np.linalg.norm(vel, axis=-1)) * w)

    # -- transformations ----------------------------------------------------------------

    def _replace(self, **changes) -> "Knot":
        data = dict(center=self.center, cos_coeffs=self.cos_coeffs, sin_coeffs=self.sin_coeffs,
                    winding=self.winding, orientation=self.orientation, ambient=self.ambient, name=self.name)
        data.update(changes)
        return Knot(**data)

    def reversed(self) -> "Knot":
        return self._replace(orientation=-self.orientation)

    def translated(self, shift) -> "Knot":
        return self._replace(center=self.center + np.asarray(shift, dtype=float))

    def scaled(self, factor: float, about=None) -> "Knot":
        about = np.zeros(self.n) if about is None else np.asarray(about, dtype=float)
        if np.any(self.winding != 0):
            raise KnotError("cannot rescale a curve that winds around the torus")
        return self._replace(center=about + factor * (self.center - about),
                             cos_coeffs=factor * self.cos_coeffs, sin_coeffs=factor * self.sin_coeffs)

    def with_ambient(self, ambient: str) -> "Knot":
        return self._replace(ambient=ambient)

    def renamed(self, name: str) -> "Knot":
        return self._replace(name=name)

    def displaced(self, cos_delta: np.ndarray, sin_delta: np.ndarray) -> "Knot":
        """Add low harmonics to the descriptor (in the unoriented parameter)."""
        k = max(self.harmonics, cos_delta.shape[1])
        cos_c = np.zeros((self.n, k))
        sin_c = np.zeros((self.n, k))
        cos_c[:, : self.harmonics] = self.cos_coeffs
        sin_c[:, : self.harmonics] = self.sin_coeffs
        cos_c[:, : cos_delta.shape[1]] += cos_delta
        sin_c[:, : sin_delta.shape[1]] += sin_delta
        return self._replace(cos_coeffs=cos_c, sin_coeffs=sin_c)

    def truncated(self, tol: float) -> "Knot":
        """Drop trailing harmonics whose coefficients are all below ``tol``."""
        mags = np.max(np.abs(self.cos_coeffs) + np.abs(self.sin_coeffs), axis=0)
        keep = np.nonzero(mags > tol)[0]
        k = int(keep[-1]) + 1 if keep.size else 1
        return self._replace(cos_coeffs=self.cos_coeffs[:, :k], sin_coeffs=self.sin_coeffs[:, :k])

    def bounding_box(self, count: int = 1024):
        _, pos, _, _ = self.nodes(count)
        return pos.min(axis=0), pos.max(axis=0)

    def min_distance(self, other: "Knot", count: int = 512, period: Optional[float] = None) -> float:
        """Minimum distance between node sets (periodic distance when ``period`` is set)."""
        _, a, _, _ = self.nodes(count)
        _, b, _, _ = other.nodes(count)
        best = np.inf
        for start in range(0, a.shape[0], 256):
            diff = a[start:start + 256, None, :] - b[None, :, :]
            if period is not None:
                diff = diff - period * np.round(diff / period)
            best = min(best, float(np.sqrt(np.min(np.sum(diff * diff, axis=-1)))))
        return best

    def to_json_data(self) -> dict:
        return {
            "center": self.center.tolist(),
            "cos": self.cos_coeffs.tolist(),
            "sin": self.sin_coeffs.tolist(),
            "winding": [int(w) for w in self.winding],
        }
