"""Non-crossing pair partitions NC2(n).

Indices are 1-based throughout this module, matching the usual notation
for pairings of ``{1, ..., n}``. Callers that index numpy arrays subtract
one at the point of use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

from .errors import ValidationError

__all__ = [
    "PairPartition",
    "enumerate_nc2",
    "iter_nc2",
    "count_nc2",
    "decompose_first",
    "reassemble",
    "is_noncrossing",
]


def is_noncrossing(pairs) -> bool:
    """True if no two pairs ``(i, j)``, ``(k, l)`` satisfy ``i < k < j < l``."""
    pairs = [tuple(sorted(p)) for p in pairs]
    for a, (i, j) in enumerate(pairs):
        for k, l in pairs[a + 1:]:
            if i < k < j < l or k < i < l < j:
                return False
    return True


@dataclass(frozen=True)
class PairPartition:
    """A non-crossing perfect matching of ``{1, ..., n}``.

    ``pairs`` is stored sorted by the smaller index, each pair as ``(i, j)``
    with ``i < j``.
    """

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple(sorted(tuple(sorted((int(i), int(j)))) for i, j in self.pairs))
        n = 2 * len(pairs)
        seen = sorted(x for p in pairs for x in p)
        if seen != list(range(1, n + 1)):
            raise ValidationError(f"pairs do not cover 1..{n} exactly once: {pairs}")
        if any(i == j for i, j in pairs):
            raise ValidationError("degenerate pair")
        if not is_noncrossing(pairs):
            raise ValidationError(f"crossing pairs: {pairs}")
        object.__setattr__(self, "pairs", pairs)

    @property
    def n(self) -> int:
        return 2 * len(self.pairs)

    def partner(self, i: int) -> int:
        for a, b in self.pairs:
            if a == i:
                return b
            if b == i:
                return a
        raise KeyError(i)

    def shifted(self, offset: int) -> tuple[tuple[int, int], ...]:
        return tuple((i + offset, j + offset) for i, j in self.pairs)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def _check_n(n) -> int:
    if isinstance(n, bool) or int(n) != n:
        raise ValidationError(f"n must be an integer, got {n!r}")
    n = int(n)
    if n < 0:
        raise ValidationError(f"n must be nonnegative, got {n}")
    return n


@lru_cache(maxsize=None)
def _nc2_raw(n: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    # split on the partner 2k of index 1: {1,2k} u inner(2..2k-1) u outer(2k+1..n)
    if n == 0:
        return ((),)
    if n % 2:
        return ()
    out = []
    for k in range(2, n + 1, 2):
        for inner in _nc2_raw(k - 2):
            inner_s = tuple((i + 1, j + 1) for i, j in inner)
            for outer in _nc2_raw(n - k):
                outer_s = tuple((i + k, j + k) for i, j in outer)
                out.append(((1, k),) + inner_s + outer_s)
    return tuple(out)


def iter_nc2(n: int) -> Iterator[PairPartition]:
    """Lazily yield NC2(n) in the same order as :func:`enumerate_nc2`."""
    for raw in _nc2_raw(_check_n(n)):
        yield PairPartition(raw)


def enumerate_nc2(n: int) -> list[PairPartition]:
    """All non-crossing pair partitions of ``{1, ..., n}``.

    The order is lexicographic in the partner of the smallest unpaired
    index. ``n = 0`` gives the single empty partition and odd ``n`` gives
    an empty list.
    """
    return list(iter_nc2(n))


def count_nc2(n: int) -> int:
    """``|NC2(n)|``: the Catalan number ``C_{n/2}`` for even ``n``, else 0."""
    n = _check_n(n)
    if n % 2:
        return 0
    k = n // 2
    return math.comb(2 * k, k) // (k + 1)


def decompose_first(pi: PairPartition):
    """Split ``pi`` at the block containing 1.

    Returns ``(k, inner, outer)`` where ``k`` is the partner of 1, ``inner``
    is the restriction to ``{2, ..., k-1}`` renumbered from 1 and ``outer``
    the restriction to ``{k+1, ..., n}`` renumbered from 1.
    """
    if not isinstance(pi, PairPartition):
        pi = PairPartition(pi)
    if pi.n == 0:
        raise ValidationError("cannot decompose the empty partition")
    k = pi.partner(1)
    inner, outer = [], []
    for i, j in pi.pairs:
        if i == 1:
            continue
        if j < k:
            inner.append((i - 1, j - 1))
        elif i > k:
            outer.append((i - k, j - k))
        else:
            raise ValidationError(f"pair {(i, j)} crosses {(1, k)}")
    return k, PairPartition(tuple(inner)), PairPartition(tuple(outer))


def reassemble(k: int, inner: PairPartition, outer: PairPartition) -> PairPartition:
    """Inverse of :func:`decompose_first`."""
    if k != inner.n + 2:
        raise ValidationError(f"partner {k} inconsistent with inner size {inner.n}")
    return PairPartition(((1, k),) + inner.shifted(1) + outer.shifted(k))
