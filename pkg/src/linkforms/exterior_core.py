"""Exact sign arithmetic for basis covectors of the exterior algebra on R^n.

Indices are 1-based, so ``MultiIndex((1, 3), 3)`` stands for dx_1 ^ dx_3 in R^3.
Nothing in this module touches floating point: every sign is an ``int``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterator, Optional, Tuple

__all__ = [
    "MultiIndex",
    "SignedIndex",
    "ZERO",
    "all_multi_indices",
    "epsilon_exponent",
    "hodge_star_basis",
    "wedge_basis",
    "contract_basis",
    "codiff_sign",
    "current_op_sign",
    "permutation_sign",
]


@dataclass(frozen=True, order=True)
class MultiIndex:
    """A strictly increasing subset of {1, ..., n}."""

    indices: Tuple[int, ...]
    n: int

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if self.n < 0:
            raise ValueError(f"ambient dimension must be non-negative, got {self.n}")
        for a, b in zip(idx, idx[1:]):
            if not a < b:
                raise ValueError(f"indices must be strictly increasing: {idx}")
        if idx and (idx[0] < 1 or idx[-1] > self.n):
            raise ValueError(f"indices {idx} out of range 1..{self.n}")

    @property
    def degree(self) -> int:
        return len(self.indices)

    def complement(self) -> "MultiIndex":
        present = set(self.indices)
        return MultiIndex(tuple(i for i in range(1, self.n + 1) if i not in present), self.n)

    def __contains__(self, j: object) -> bool:
        return j in self.indices

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def label(self) -> str:
        """Short human-readable name, e.g. ``dx1^dx3`` or ``1`` for the empty index."""
        if not self.indices:
            return "1"
        return "^".join(f"dx{i}" for i in self.indices)


@dataclass(frozen=True)
class SignedIndex:
    """A basis covector with a sign, or the zero covector.

    The zero covector is represented by ``index=None`` (and ``sign=0`` for
    arithmetic convenience); use :attr:`is_zero` rather than comparing signs.
    """

    sign: int
    index: Optional[MultiIndex]

    def __post_init__(self) -> None:
        if self.index is None:
            if self.sign != 0:
                raise ValueError("the zero marker carries sign 0")
        elif self.sign not in (-1, 1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")

    @property
    def is_zero(self) -> bool:
        return self.index is None


ZERO = SignedIndex(0, None)


def all_multi_indices(n: int, k: int) -> Tuple[MultiIndex, ...]:
    """Every multi-index of size k in dimension n, in lexicographic order."""
    return _all_multi_indices(n, k)


@lru_cache(maxsize=None)
def _all_multi_indices(n: int, k: int) -> Tuple[MultiIndex, ...]:
    if k < 0 or k > n:
        return ()
    return tuple(MultiIndex(c, n) for c in combinations(range(1, n + 1), k))


def permutation_sign(seq: Tuple[int, ...]) -> int:
    """Sign of the permutation sorting ``seq`` (entries assumed distinct)."""
    sign = 1
    items = list(seq)
    # inversion count parity; the sizes here never exceed a handful of entries
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if items[i] > items[j]:
                sign = -sign
    return sign


def epsilon_exponent(index: MultiIndex) -> int:
    """Sum of the entries of ``index`` minus 1 + 2 + ... + |index|."""
    k = index.degree
    return sum(index.indices) - k * (k + 1) // 2


def hodge_star_basis(index: MultiIndex) -> SignedIndex:
    """Hodge star of dx_I for the Euclidean metric: (-1)^eps(I) dx_{I^c}."""
    sign = -1 if epsilon_exponent(index) % 2 else 1
    return SignedIndex(sign, index.complement())


def wedge_basis(left: MultiIndex, right: MultiIndex) -> SignedIndex:
    """dx_I ^ dx_J as a signed sorted index, or zero when I and J overlap."""
    if left.n != right.n:
        raise ValueError("wedge of indices from different ambient dimensions")
    if set(left.indices) & set(right.indices):
        return ZERO
    merged = left.indices + right.indices
    return SignedIndex(permutation_sign(merged), MultiIndex(tuple(sorted(merged)), left.n))


def contract_basis(j: int, index: MultiIndex) -> SignedIndex:
    """Interior product of the coordinate vector e_j with dx_I."""
    if not 1 <= j <= index.n:
        raise ValueError(f"contraction slot {j} out of range 1..{index.n}")
    if j not in index.indices:
        return ZERO
    pos = index.indices.index(j) + 1
    rest = tuple(i for i in index.indices if i != j)
    return SignedIndex(-1 if (pos - 1) % 2 else 1, MultiIndex(rest, index.n))


def codiff_sign(n: int, k: int) -> int:
    """Sign s with d^* = s * d * on k-forms in dimension n, namely (-1)^(nk+n+1)."""
    if not 0 <= k <= n:
        raise ValueError(f"degree {k} out of range 0..{n}")
    return -1 if (n * k + n + 1) % 2 else 1


_CURRENT_OPS = ("d", "dstar", "green")


def current_op_sign(op: str, n: int, k: int) -> int:
    """Sign alteration applied to the dual operator on currents in D'_{n-k}.

    ``op`` is one of ``"d"``, ``"dstar"`` or ``"green"``; the returned sign is
    (-1)^k, (-1)^(k-1) and +1 respectively.
    """
    if op not in _CURRENT_OPS:
        raise ValueError(f"unknown operator {op!r}; expected one of {_CURRENT_OPS}")
    if not 0 <= k <= n:
        raise ValueError(f"degree {k} out of range 0..{n}")
    if op == "d":
        return -1 if k % 2 else 1
    if op == "dstar":
        return -1 if (k - 1) % 2 else 1
    return 1
