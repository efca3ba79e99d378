"""Balanced Cartesian factorization of unit counts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

from .errors import DimensionMismatch

__all__ = [
    "CartesianGrid",
    "balanced_factorization",
    "balanced_divisible_factorization",
    "check_divisibility",
    "divisors",
]


@dataclass(frozen=True)
class CartesianGrid:
    """Extents of a d-dimensional Cartesian arrangement.

    Grids returned by :func:`balanced_factorization` are non-increasing;
    grids built by the mapping code to fit a hierarchy level may not be.
    """

    dims: tuple[int, ...]

    def __init__(self, dims: Sequence[int]):
        dims = tuple(int(x) for x in dims)
        if not dims or any(x < 1 for x in dims):
            raise ValueError(f"grid extents must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def ones(cls, d: int) -> CartesianGrid:
        return cls((1,) * d)

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def __len__(self) -> int:
        return len(self.dims)

    def __getitem__(self, i: int) -> int:
        return self.dims[i]

    def __iter__(self) -> Iterator[int]:
        return iter(self.dims)

    def __str__(self) -> str:
        return "x".join(str(x) for x in self.dims)


@lru_cache(maxsize=4096)
def divisors(n: int) -> tuple[int, ...]:
    small, large = [], []
    for i in range(1, math.isqrt(n) + 1):
        if n % i == 0:
            small.append(i)
            if i != n // i:
                large.append(n // i)
    return tuple(small + large[::-1])


def _non_increasing_factorizations(n: int, parts: int, cap: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        if n <= cap:
            yield (n,)
        return
    for f in reversed(divisors(n)):
        if f > cap:
            continue
        # f is the largest remaining factor, so f**parts must reach n
        if f**parts < n:
            break
        for rest in _non_increasing_factorizations(n // f, parts - 1, f):
            yield (f,) + rest


def balanced_factorization(n: int, d: int = 3) -> CartesianGrid:
    """Split ``n`` into ``d`` non-increasing factors as evenly as possible.

    "Even" means the smallest gap between the largest and the smallest
    factor; remaining ties go to the lexicographically smallest sequence.

    >>> balanced_factorization(24, 3).dims
    (4, 3, 2)
    """
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    best = min(
        _non_increasing_factorizations(n, d, n),
        key=lambda seq: (seq[0] - seq[-1], seq),
    )
    return CartesianGrid(best)


def _ordered_factorizations(n: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (n,)
        return
    for f in divisors(n):
        for rest in _ordered_factorizations(n // f, parts - 1):
            yield (f,) + rest


def balanced_divisible_factorization(n: int, brick: CartesianGrid | Sequence[int]) -> CartesianGrid | None:
    """Most balanced factorization of ``n`` that ``brick`` tiles exactly.

    Returns :func:`balanced_factorization` when that already divides by
    ``brick``; otherwise the factorization ``brick * g`` (elementwise) with
    the smallest max-min spread, preferring non-increasing results and
    then the lexicographically smallest. ``None`` if ``n`` is not a
    multiple of the brick volume.
    """
    brick = CartesianGrid(brick)
    plain = balanced_factorization(n, brick.ndim)
    if check_divisibility(plain, brick):
        return plain
    if n % brick.size:
        return None

    def key(seq):
        ordered = all(a >= b for a, b in zip(seq, seq[1:]))
        return (max(seq) - min(seq), not ordered, seq)

    candidates = (
        tuple(b * g for b, g in zip(brick.dims, grid))
        for grid in _ordered_factorizations(n // brick.size, brick.ndim)
    )
    return CartesianGrid(min(candidates, key=key))


def check_divisibility(total: CartesianGrid | Sequence[int], brick: CartesianGrid | Sequence[int]) -> bool:
    """True iff every extent of ``total`` is a multiple of the matching ``brick`` extent.

    ``brick`` is padded with trailing ones up to the dimensionality of ``total``.
    """
    total_dims = tuple(total)
    brick_dims = tuple(brick)
    if len(total_dims) < len(brick_dims):
        raise DimensionMismatch(
            f"total grid has {len(total_dims)} dims, brick has {len(brick_dims)}"
        )
    brick_dims = brick_dims + (1,) * (len(total_dims) - len(brick_dims))
    return all(t % b == 0 for t, b in zip(total_dims, brick_dims))
