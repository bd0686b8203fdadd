"""Vectorised helpers for real-valued constant-metric forms on R^n.

A k-form field sampled at many points is stored as an array whose last axis
runs over ``all_multi_indices(n, k)`` in lexicographic order.  The signs come
from :mod:`linkforms.exterior_core`; this module only does the bookkeeping.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable, Dict, Sequence, Tuple

import numpy as np

from .exterior_core import (
    MultiIndex,
    all_multi_indices,
    codiff_sign,
    contract_basis,
    hodge_star_basis,
    wedge_basis,
)

FormDict = Dict[MultiIndex, float]


def basis(n: int, k: int) -> Tuple[MultiIndex, ...]:
    return all_multi_indices(n, k)


def position(index: MultiIndex) -> int:
    return _positions(index.n, index.degree)[index]


@lru_cache(maxsize=None)
def _positions(n: int, k: int) -> Dict[MultiIndex, int]:
    return {idx: pos for pos, idx in enumerate(all_multi_indices(n, k))}


@lru_cache(maxsize=None)
def _star_table(n: int, k: int) -> Tuple[np.ndarray, np.ndarray]:
    src = basis(n, k)
    targets = np.empty(len(src), dtype=int)
    signs = np.empty(len(src))
    for pos, idx in enumerate(src):
        s = hodge_star_basis(idx)
        targets[pos] = position(s.index)
        signs[pos] = s.sign
    return targets, signs


def star(form: np.ndarray, n: int, k: int) -> np.ndarray:
    """Euclidean Hodge star of a k-form array (last axis = components)."""
    targets, signs = _star_table(n, k)
    out = np.zeros(form.shape[:-1] + (len(basis(n, n - k)),), dtype=np.result_type(form, float))
    out[..., targets] = form * signs
    return out


@lru_cache(maxsize=None)
def _wedge_table(n: int, ka: int, kb: int) -> Tuple[Tuple[int, int, int, int], ...]:
    rows = []
    for pa, a in enumerate(basis(n, ka)):
        for pb, b in enumerate(basis(n, kb)):
            w = wedge_basis(a, b)
            if not w.is_zero:
                rows.append((pa, pb, position(w.index), w.sign))
    return tuple(rows)


def wedge(a: np.ndarray, ka: int, b: np.ndarray, kb: int, n: int) -> np.ndarray:
    """Pointwise wedge product of a ka-form array and a kb-form array."""
    if ka + kb > n:
        shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
        return np.zeros(shape + (0,))
    shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    out = np.zeros(shape + (len(basis(n, ka + kb)),), dtype=np.result_type(a, b, float))
    for pa, pb, pc, sign in _wedge_table(n, ka, kb):
        out[..., pc] += sign * a[..., pa] * b[..., pb]
    return out


@lru_cache(maxsize=None)
def _contract_table(n: int, k: int) -> Tuple[Tuple[int, int, int, int], ...]:
    rows = []
    for pos, idx in enumerate(basis(n, k)):
        for j in range(1, n + 1):
            c = contract_basis(j, idx)
            if not c.is_zero:
                rows.append((j - 1, pos, position(c.index), c.sign))
    return tuple(rows)


def contract(vector: np.ndarray, form: np.ndarray, n: int, k: int) -> np.ndarray:
    """Interior product of a vector (last axis length n) with a k-form array."""
    if k == 0:
        raise ValueError("cannot contract a 0-form")
    shape = np.broadcast_shapes(vector.shape[:-1], form.shape[:-1])
    out = np.zeros(shape + (len(basis(n, k - 1)),), dtype=np.result_type(vector, form, float))
    for j, src, dst, sign in _contract_table(n, k):
        out[..., dst] += sign * vector[..., j] * form[..., src]
    return out


def covectors_wedge(vectors: np.ndarray) -> np.ndarray:
    """Components of v_1^b ^ ... ^ v_p^b for rows v_a of ``vectors`` (shape (..., p, n))."""
    vectors = np.asarray(vectors, dtype=float)
    p, n = vectors.shape[-2:]
    out = np.empty(vectors.shape[:-2] + (len(basis(n, p)),))
    for pos, idx in enumerate(basis(n, p)):
        cols = [i - 1 for i in idx.indices]
        if p == 0:
            out[..., pos] = 1.0
        else:
            out[..., pos] = np.linalg.det(vectors[..., :, cols])
    return out


def evaluate_on_vectors(form: np.ndarray, n: int, k: int, vectors: np.ndarray) -> np.ndarray:
    """omega(v_1, ..., v_k) with ``vectors`` of shape (..., k, n)."""
    if k == 0:
        return form[..., 0]
    minors = covectors_wedge(vectors)
    return np.sum(form * minors, axis=-1)


def to_dict(form: np.ndarray, n: int, k: int, drop_zeros: bool = True) -> FormDict:
    out: FormDict = {}
    for pos, idx in enumerate(basis(n, k)):
        val = float(form[pos])
        if val != 0.0 or not drop_zeros:
            out[idx] = val
    return out


def from_dict(values: FormDict, n: int, k: int) -> np.ndarray:
    arr = np.zeros(len(basis(n, k)))
    for idx, val in values.items():
        if idx.n != n or idx.degree != k:
            raise ValueError(f"index {idx} does not match (n={n}, k={k})")
        arr[position(idx)] = val
    return arr


# -- finite differences ----------------------------------------------------------------

_CENTRAL = {
    2: (np.array([-1.0, 1.0]), np.array([-1, 1]), 2.0),
    4: (np.array([1.0, -8.0, 8.0, -1.0]), np.array([-2, -1, 1, 2]), 12.0),
}


def fd_gradient(field: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float, order: int = 2) -> np.ndarray:
    """Central-difference partial derivatives of a sampled field.

    ``field`` maps points (..., n) to arrays (..., c); the result has shape
    (..., n, c) with the derivative direction on the second-to-last axis.
    """
    weights, offsets, denom = _CENTRAL[order]
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    parts = []
    for j in range(n):
        acc = None
        for w, o in zip(weights, offsets):
            shifted = x.copy()
            shifted[..., j] += o * h
            val = w * np.asarray(field(shifted))
            acc = val if acc is None else acc + val
        parts.append(acc / (denom * h))
    return np.stack(parts, axis=-2)


def fd_exterior_derivative(field: Callable[[np.ndarray], np.ndarray], x: np.ndarray, n: int, k: int,
                           h: float = 1e-3, order: int = 2) -> np.ndarray:
    """d of a k-form field via central differences: sum_j dx_j ^ d_j(omega)."""
    grad = fd_gradient(field, x, h, order)
    out = None
    eye = np.eye(n)
    for j in range(n):
        term = wedge(eye[j], 1, grad[..., j, :], k, n)
        out = term if out is None else out + term
    return out


def fd_codifferential(field: Callable[[np.ndarray], np.ndarray], x: np.ndarray, n: int, k: int,
                      h: float = 1e-3, order: int = 2) -> np.ndarray:
    """d^* of a k-form field, computed as codiff_sign * star d star."""
    def starred(p: np.ndarray) -> np.ndarray:
        return star(np.asarray(field(p)), n, k)

    d_star = fd_exterior_derivative(starred, x, n, n - k, h, order)
    return codiff_sign(n, k) * star(d_star, n, n - k + 1)


def sphere_frame(normal_frame: np.ndarray, angles: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Unit vectors and an oriented tangent frame on the unit sphere of a normal space.

    ``normal_frame`` has shape (c, n) with c = 2 or 3.  For c = 2, ``angles`` is
    ``(alpha,)``; for c = 3, ``(polar, azimuth)``.  The tangent frame is ordered
    so that (outward normal, tangents...) is positively oriented with respect to
    the order of ``normal_frame``.
    """
    c = normal_frame.shape[0]
    if c == 2:
        (alpha,) = angles
        u = np.cos(alpha)[..., None] * normal_frame[0] + np.sin(alpha)[..., None] * normal_frame[1]
        tau = -np.sin(alpha)[..., None] * normal_frame[0] + np.cos(alpha)[..., None] * normal_frame[1]
        return u, tau[..., None, :]
    if c == 3:
        polar, az = angles
        sp, cp = np.sin(polar)[..., None], np.cos(polar)[..., None]
        sa, ca = np.sin(az)[..., None], np.cos(az)[..., None]
        e1, e2, e3 = normal_frame
        u = sp * ca * e1 + sp * sa * e2 + cp * e3
        t_polar = cp * ca * e1 + cp * sa * e2 - sp * e3
        t_az = -sa * e1 + ca * e2
        # (u, t_polar, t_az) is the right-handed spherical frame
        return u, np.stack([t_polar, t_az], axis=-2)
    raise ValueError(f"sphere frames only for normal dimension 2 or 3, got {c}")
