"""Permutations in 1-based one-line notation, patterns, signatures and ranking."""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from itertools import combinations, permutations
from math import comb, factorial
from typing import Iterable, Sequence

from .errors import ArityTooLarge, DuplicateCoordinate, LengthMismatch, NotAPermutation, OutOfRange

MAX_ARITY = 8

# A signature is a tuple of booleans, True for an ascent ('u').
UdSignature = tuple


class Perm(tuple):
    """Immutable permutation; ``p[i]`` is the image of position i+1."""

    __slots__ = ()

    def __new__(cls, values: Iterable[int]):
        vals = tuple(int(v) for v in values)
        if sorted(vals) != list(range(1, len(vals) + 1)):
            raise NotAPermutation(f"not a permutation of 1..{len(vals)}: {vals}")
        return tuple.__new__(cls, vals)

    @classmethod
    def _raw(cls, vals) -> "Perm":
        return tuple.__new__(cls, vals)

    @classmethod
    def parse(cls, text: str) -> "Perm":
        try:
            vals = [int(t) for t in text.replace(",", " ").split()]
        except ValueError:
            raise NotAPermutation(f"cannot parse permutation {text!r}") from None
        return cls(vals)

    def __str__(self) -> str:
        return " ".join(map(str, self))

    def __repr__(self) -> str:
        return f"Perm({' '.join(map(str, self))})"

    def __call__(self, i: int) -> int:
        return self[i - 1]


def identity(k: int) -> Perm:
    return Perm._raw(range(1, k + 1))


def decreasing(k: int) -> Perm:
    return Perm._raw(range(k, 0, -1))


def pattern_of(points: Sequence[tuple[float, float]]) -> Perm:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    if len(set(xs)) != len(xs) or len(set(ys)) != len(ys):
        raise DuplicateCoordinate("repeated x or y coordinate")
    by_x = sorted(points, key=lambda p: p[0])
    return standardize([p[1] for p in by_x])


def standardize(seq: Sequence) -> Perm:
    """Order-isomorphic permutation of a sequence of distinct comparables."""
    order = sorted(range(len(seq)), key=seq.__getitem__)
    out = [0] * len(seq)
    for r, i in enumerate(order, 1):
        out[i] = r
    return Perm._raw(out)


def patt(p: Sequence[int], positions: Sequence[int]) -> Perm:
    """Pattern of p restricted to the (1-based, increasing) positions."""
    return standardize([p[j - 1] for j in positions])


def compose(a: Perm, b: Perm) -> Perm:
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} != {len(b)}")
    return Perm._raw(a[v - 1] for v in b)


def inverse(a: Perm) -> Perm:
    out = [0] * len(a)
    for i, v in enumerate(a, 1):
        out[v - 1] = i
    return Perm._raw(out)


def udsign(a: Sequence[int]) -> UdSignature:
    return tuple(a[i + 1] > a[i] for i in range(len(a) - 1))


def udsign_pm(a: Sequence[int]) -> tuple[int, ...]:
    return tuple(1 if b else -1 for b in udsign(a))


def sign_str(s: UdSignature) -> str:
    return "".join("u" if b else "d" for b in s)


def parse_sign(text: str) -> UdSignature:
    return tuple(c == "u" for c in text.strip() if c in "ud")


def sign_index(s: UdSignature) -> int:
    """Dense index of a signature; bit i set for a descent at step i+1."""
    idx = 0
    for i, b in enumerate(s):
        if not b:
            idx |= 1 << i
    return idx


def sign_from_index(k: int, idx: int) -> UdSignature:
    return tuple(not (idx >> i) & 1 for i in range(k - 1))


def rank(a: Sequence[int]) -> int:
    k = len(a)
    r = 0
    for i in range(k):
        smaller = sum(1 for j in range(i + 1, k) if a[j] < a[i])
        r += smaller * factorial(k - 1 - i)
    return r


def unrank(k: int, r: int) -> Perm:
    if not 0 <= r < factorial(k):
        raise OutOfRange(f"rank {r} outside [0, {k}!)")
    pool = list(range(1, k + 1))
    out = []
    for i in range(k, 0, -1):
        f = factorial(i - 1)
        q, r = divmod(r, f)
        out.append(pool.pop(q))
    return Perm._raw(out)


@lru_cache(maxsize=None)
def _all_perms(k: int) -> tuple[Perm, ...]:
    return tuple(Perm._raw(p) for p in permutations(range(1, k + 1)))


def enumerate_perms(k: int) -> tuple[Perm, ...]:
    """All k! permutations in lexicographic order (index = rank)."""
    if k > MAX_ARITY:
        raise ArityTooLarge(f"arity {k} > {MAX_ARITY}")
    if k < 1:
        raise OutOfRange("arity must be at least 1")
    return _all_perms(k)


@lru_cache(maxsize=None)
def rank_table(k: int) -> dict[Perm, int]:
    return {p: i for i, p in enumerate(enumerate_perms(k))}


@lru_cache(maxsize=None)
def sign_class_sizes(k: int) -> tuple[int, ...]:
    """Number of permutations of [k] per signature index."""
    counts = [0] * (1 << max(k - 1, 0))
    for p in enumerate_perms(k):
        counts[sign_index(udsign(p))] += 1
    return tuple(counts)


def pattern_density_in_perm(rho: Sequence[int], tau: Sequence[int]) -> Fraction:
    k, n = len(rho), len(tau)
    if k > n:
        raise LengthMismatch(f"pattern length {k} exceeds {n}")
    rho = tuple(rho)
    hits = sum(1 for J in combinations(range(1, n + 1), k) if patt(tau, J) == rho)
    return Fraction(hits, comb(n, k))
