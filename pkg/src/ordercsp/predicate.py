"""Ordering predicates as Sat bitsets, their relaxations and isomorphism classes."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import factorial
from typing import Iterable, Sequence

from .errors import ArityMismatch, BadIndex, EmptySat, ParseError
from .perm_core import (
    Perm,
    compose,
    decreasing,
    enumerate_perms,
    inverse,
    rank_table,
)


@dataclass(frozen=True)
class Predicate:
    arity: int
    sat: int  # bit r set iff unrank(arity, r) satisfies

    @property
    def full_mask(self) -> int:
        return (1 << factorial(self.arity)) - 1

    def members(self) -> list[Perm]:
        perms = enumerate_perms(self.arity)
        s = self.sat
        return [perms[r] for r in range(len(perms)) if (s >> r) & 1]

    def __contains__(self, p: Sequence[int]) -> bool:
        return bool((self.sat >> rank_table(self.arity)[tuple(p)]) & 1)

    def __len__(self) -> int:
        return bin(self.sat).count("1")

    @property
    def is_empty(self) -> bool:
        return self.sat == 0

    @property
    def is_full(self) -> bool:
        return self.sat == self.full_mask

    @property
    def is_trivial(self) -> bool:
        return self.is_empty or self.is_full

    def __str__(self) -> str:
        body = ", ".join(f"({p})" for p in self.members())
        return f"arity {self.arity}: {{{body}}}"


@dataclass(frozen=True)
class ChainClause:
    positions: tuple[int, ...]

    def __post_init__(self):
        if len(self.positions) < 2 or len(set(self.positions)) != len(self.positions):
            raise BadIndex(f"bad chain {self.positions}")

    def holds(self, p: Sequence[int]) -> bool:
        vals = [p[i - 1] for i in self.positions]
        return all(a < b for a, b in zip(vals, vals[1:]))


@dataclass(frozen=True)
class NotFirstAtom:
    """x_head is not the smallest of {x_head} ∪ others."""

    head: int
    others: frozenset[int]

    def holds(self, p: Sequence[int]) -> bool:
        return p[self.head - 1] > min(p[j - 1] for j in self.others)


@dataclass(frozen=True)
class NotLastAtom:
    """x_head is not the largest of {x_head} ∪ others."""

    head: int
    others: frozenset[int]

    def holds(self, p: Sequence[int]) -> bool:
        return p[self.head - 1] < max(p[j - 1] for j in self.others)


def _mask_of(k: int, test) -> int:
    m = 0
    for r, p in enumerate(enumerate_perms(k)):
        if test(p):
            m |= 1 << r
    return m


def from_sat_list(k: int, perms: Iterable[Sequence[int]]) -> Predicate:
    table = rank_table(k)
    sat = 0
    for p in perms:
        if len(p) != k:
            raise ArityMismatch(f"permutation {tuple(p)} has length {len(p)}, expected {k}")
        bit = 1 << table[tuple(p)]
        if sat & bit:
            warnings.warn(f"duplicate permutation {tuple(p)} ignored", stacklevel=2)
        sat |= bit
    return Predicate(k, sat)


def from_dnf(k: int, clauses: Sequence[Sequence[ChainClause]]) -> Predicate:
    for disj in clauses:
        for ch in disj:
            if any(not 1 <= i <= k for i in ch.positions):
                raise BadIndex(f"chain {ch.positions} outside arity {k}")
    return Predicate(k, _mask_of(k, lambda p: any(all(c.holds(p) for c in d) for d in clauses)))


def always_true(k: int) -> Predicate:
    return Predicate(k, (1 << factorial(k)) - 1)


def always_false(k: int) -> Predicate:
    return Predicate(k, 0)


def _require_nonempty(phi: Predicate) -> None:
    if phi.sat == 0:
        raise EmptySat("predicate has no satisfying permutation")


def is_relaxation(phi: Predicate, phi_prime: Predicate) -> bool:
    if phi.arity != phi_prime.arity:
        raise ArityMismatch(f"{phi.arity} != {phi_prime.arity}")
    return phi.sat & ~phi_prime.sat == 0


@lru_cache(maxsize=None)
def nfirst_atoms(k: int) -> tuple[tuple[NotFirstAtom, int], ...]:
    """All NFirst atoms of arity k with their satisfying masks."""
    out = []
    for h in range(1, k + 1):
        rest = [j for j in range(1, k + 1) if j != h]
        for size in range(1, k):
            for S in combinations(rest, size):
                a = NotFirstAtom(h, frozenset(S))
                out.append((a, _mask_of(k, a.holds)))
    return tuple(out)


@lru_cache(maxsize=None)
def nlast_atoms(k: int) -> tuple[tuple[NotLastAtom, int], ...]:
    out = []
    for h in range(1, k + 1):
        rest = [j for j in range(1, k + 1) if j != h]
        for size in range(1, k):
            for S in combinations(rest, size):
                a = NotLastAtom(h, frozenset(S))
                out.append((a, _mask_of(k, a.holds)))
    return tuple(out)


@lru_cache(maxsize=None)
def pair_atoms(k: int) -> tuple[tuple[tuple[int, int], int], ...]:
    """Ordered pairs (i, j) meaning x_i < x_j, with their masks."""
    out = []
    for i in range(1, k + 1):
        for j in range(1, k + 1):
            if i != j:
                out.append(((i, j), _mask_of(k, lambda p, i=i, j=j: p[i - 1] < p[j - 1])))
    return tuple(out)


def _implied(phi: Predicate, atoms) -> list:
    return [(a, m) for a, m in atoms if phi.sat & ~m == 0]


def implied_nfirst(phi: Predicate) -> list[NotFirstAtom]:
    _require_nonempty(phi)
    return [a for a, _ in _implied(phi, nfirst_atoms(phi.arity))]


def implied_nlast(phi: Predicate) -> list[NotLastAtom]:
    _require_nonempty(phi)
    return [a for a, _ in _implied(phi, nlast_atoms(phi.arity))]


def implied_pairs(phi: Predicate) -> list[tuple[int, int]]:
    _require_nonempty(phi)
    return [a for a, _ in _implied(phi, pair_atoms(phi.arity))]


def _closure(phi: Predicate, atoms) -> Predicate:
    _require_nonempty(phi)
    sat = phi.full_mask
    for _, m in _implied(phi, atoms):
        sat &= m
    return Predicate(phi.arity, sat)


def l_relaxation(phi: Predicate) -> Predicate:
    return _closure(phi, nfirst_atoms(phi.arity))


def r_relaxation(phi: Predicate) -> Predicate:
    return _closure(phi, nlast_atoms(phi.arity))


def eps_relaxation(phi: Predicate) -> Predicate:
    return _closure(phi, pair_atoms(phi.arity))


def relaxation(phi: Predicate, kind: str) -> Predicate:
    kind = kind.upper()
    if kind == "L":
        return l_relaxation(phi)
    if kind == "R":
        return r_relaxation(phi)
    if kind in ("EPS", "E", "EPSILON"):
        return eps_relaxation(phi)
    raise ValueError(f"unknown relaxation kind {kind!r}")


def is_nontrivial_relaxation(phi: Predicate, phi_prime: Predicate) -> bool:
    return phi_prime.sat != phi.sat and not phi_prime.is_full


def is_precedence(phi: Predicate) -> bool:
    return eps_relaxation(phi).sat == phi.sat


def is_not_first(phi: Predicate) -> bool:
    return l_relaxation(phi).sat == phi.sat


def is_not_last(phi: Predicate) -> bool:
    return r_relaxation(phi).sat == phi.sat


def is_tractable(phi: Predicate) -> bool:
    return is_not_first(phi) or is_not_last(phi)


def shuffle(alpha: Sequence[int], beta: Sequence[int], t: int) -> Perm:
    """Keep alpha's values <= t in place; fill the rest above t in beta's relative order."""
    k = len(alpha)
    rest = [i for i in range(k) if alpha[i] > t]
    rest.sort(key=lambda i: beta[i])
    out = list(alpha)
    for r, i in enumerate(rest, t + 1):
        out[i] = r
    return Perm._raw(out)


def is_shuffle_closed(phi: Predicate) -> bool:
    _require_nonempty(phi)
    mem = phi.members()
    for a in mem:
        for b in mem:
            for t in range(1, phi.arity):
                if shuffle(a, b, t) not in phi:
                    return False
    return True


@lru_cache(maxsize=None)
def group_tables(k: int) -> tuple[tuple[int, ...], ...]:
    """Rank permutations for the 2·k! renamings/dualizations.

    Entry g maps rank(σ) to rank(decr^e ∘ σ ∘ β^{-1}). Element 0 is the identity.
    """
    perms = enumerate_perms(k)
    table = rank_table(k)
    dec = decreasing(k)
    out = []
    for dual in (False, True):
        for beta in perms:
            binv = inverse(beta)
            row = []
            for s in perms:
                img = compose(s, binv)
                if dual:
                    img = compose(dec, img)
                row.append(table[img])
            out.append(tuple(row))
    return tuple(out)


def apply_group(k: int, g: int, sat: int) -> int:
    row = group_tables(k)[g]
    out = 0
    r = 0
    while sat:
        if sat & 1:
            out |= 1 << row[r]
        sat >>= 1
        r += 1
    return out


def canonical_form(phi: Predicate) -> tuple[Predicate, int]:
    k = phi.arity
    images = {apply_group(k, g, phi.sat) for g in range(2 * factorial(k))}
    return Predicate(k, min(images)), len(images)


def parse_predicate(text: str) -> Predicate:
    """Parse the 'arity k' / 'sat:' / 'dnf:' text format."""
    k = None
    mode = None
    perms: list[tuple[int, ...]] = []
    disjuncts: list[list[ChainClause]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        low = line.lower()
        if low.startswith("arity"):
            try:
                k = int(line.split()[1])
            except (IndexError, ValueError):
                raise ParseError("bad arity header", lineno) from None
            continue
        if low.rstrip(":") in ("sat", "dnf"):
            mode = low.rstrip(":")
            continue
        if k is None or mode is None:
            raise ParseError("expected 'arity k' and 'sat:'/'dnf:' before data", lineno)
        if mode == "sat":
            try:
                p = Perm.parse(line)
            except ValueError as e:
                raise ParseError(str(e), lineno) from None
            if len(p) != k:
                raise ArityMismatch(f"line {lineno}: permutation length {len(p)} != {k}")
            perms.append(p)
        else:
            chains = []
            for part in line.split("&"):
                try:
                    pos = tuple(int(t) for t in part.split("<"))
                except ValueError:
                    raise ParseError(f"bad chain {part.strip()!r}", lineno) from None
                chains.append(ChainClause(pos))
            disjuncts.append(chains)
    if k is None or mode is None:
        raise ParseError("missing header")
    if mode == "sat":
        return from_sat_list(k, perms)
    return from_dnf(k, disjuncts)


def format_predicate(phi: Predicate) -> str:
    lines = [f"arity {phi.arity}", "sat:"]
    lines += [str(p) for p in phi.members()]
    return "\n".join(lines) + "\n"


BUILTIN = {
    "lt": lambda: from_sat_list(2, [(1, 2)]),
    "btw": lambda: from_sat_list(3, [(1, 2, 3), (3, 2, 1)]),
    "betweenness": lambda: from_sat_list(3, [(1, 2, 3), (3, 2, 1)]),
    "cyclic": lambda: from_sat_list(3, [(1, 2, 3), (2, 3, 1), (3, 1, 2)]),
}


def builtin(name: str) -> Predicate:
    return BUILTIN[name.lower()]()
