"""Permutation flags modulo the signature ideal: shuffles, products, averaging, tagged densities."""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from math import comb, factorial
from typing import Iterable, Sequence

from .errors import InconsistentCommonOrder, InconsistentTag, OrderCspError, ParseError, TypeMismatch
from .idu import IduCombination
from .perm_core import Perm, enumerate_perms, patt, pattern_density_in_perm, sign_str, standardize, udsign

MAX_DEGREE = 6


@dataclass(frozen=True, order=True)
class Flag:
    perm: Perm
    labels: tuple[int, ...]  # increasing 1-based positions

    def __post_init__(self):
        object.__setattr__(self, "perm", Perm(self.perm))
        labs = tuple(sorted(self.labels))
        if len(set(labs)) != len(labs) or any(not 1 <= j <= len(self.perm) for j in labs):
            raise OrderCspError(f"bad labels {self.labels} for {self.perm}")
        object.__setattr__(self, "labels", labs)

    @classmethod
    def parse(cls, text: str) -> "Flag":
        vals, labs = [], []
        for i, tok in enumerate(re.findall(r"\[\s*\d+\s*\]|\d+", text), 1):
            if tok.startswith("["):
                labs.append(i)
                tok = tok.strip("[] ")
            vals.append(int(tok))
        try:
            return cls(Perm(vals), tuple(labs))
        except (ValueError, OrderCspError) as e:
            raise ParseError(f"bad flag {text!r}: {e}") from None

    @property
    def size(self) -> int:
        return len(self.perm)

    @property
    def type(self) -> Perm:
        return patt(self.perm, self.labels)

    def __str__(self) -> str:
        return " ".join(f"[{v}]" if i in self.labels else str(v) for i, v in enumerate(self.perm, 1))


def partv(f: Flag) -> tuple[int, ...]:
    """Gaps cut by the labeled values: (v1-1, v2-v1-1, ..., n-vk)."""
    vals = sorted(f.perm[j - 1] for j in f.labels)
    cuts = [0] + vals + [f.size + 1]
    return tuple(b - a - 1 for a, b in zip(cuts, cuts[1:]))


def quotient_key(f: Flag) -> tuple:
    """(signature, labels, partv): flags agreeing on all three are equal modulo N."""
    return (udsign(f.perm), f.labels, partv(f))


def multinomial(v: Sequence[int]) -> int:
    out = factorial(sum(v))
    for x in v:
        out //= factorial(x)
    return out


class TypedSum:
    """Rational combination of flags of one type, one representative per quotient key."""

    def __init__(self, tau: Sequence[int], terms: Iterable[tuple[Flag, Fraction]] = ()):
        self.type = Perm(tau)
        self._terms: dict[tuple, list] = {}
        for f, c in terms:
            self.add(f, c)

    def add(self, f: Flag, c) -> None:
        if f.type != self.type:
            raise TypeMismatch(f"flag {f} has type {f.type}, expected {self.type}")
        c = Fraction(c)
        key = quotient_key(f)
        slot = self._terms.get(key)
        if slot is None:
            self._terms[key] = [f, c]
        else:
            slot[0] = min(slot[0], f)
            slot[1] += c

    def items(self) -> list[tuple[Flag, Fraction]]:
        return sorted((f, c) for f, c in self._terms.values() if c != 0)

    def coefficients(self) -> dict[tuple, Fraction]:
        return {k: c for k, (_, c) in self._terms.items() if c != 0}

    def copy(self) -> "TypedSum":
        return TypedSum(self.type, self.items())

    def __add__(self, other: "TypedSum") -> "TypedSum":
        out = self.copy()
        for f, c in other.items():
            out.add(f, c)
        return out

    def __neg__(self) -> "TypedSum":
        return TypedSum(self.type, [(f, -c) for f, c in self.items()])

    def __sub__(self, other: "TypedSum") -> "TypedSum":
        return self + (-other)

    def scale(self, c) -> "TypedSum":
        return TypedSum(self.type, [(f, c * x) for f, x in self.items()])

    def __rmul__(self, c) -> "TypedSum":
        return self.scale(c)

    def __mul__(self, other):
        if isinstance(other, TypedSum):
            out = TypedSum(self.type)
            for f1, c1 in self.items():
                for f2, c2 in other.items():
                    out = out + product_mod_N(f1, f2).scale(c1 * c2)
            return out
        return self.scale(other)

    def __eq__(self, other) -> bool:
        return isinstance(other, TypedSum) and self.type == other.type and (
            self.coefficients() == other.coefficients()
        )

    def __str__(self) -> str:
        if not self._terms or not self.items():
            return "0"
        return " + ".join(f"{c} * ({f})" for f, c in self.items())

    def by_signature(self) -> dict[str, Fraction]:
        """Type-∅ view: signature string -> coefficient."""
        return {sign_str(k[0]): c for k, c in self.coefficients().items()}


def flag_sum(f: Flag, c=1) -> TypedSum:
    return TypedSum(f.type, [(f, c)])


def y_shuffles(f1: Flag, f2: Flag) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    if f1.type != f2.type:
        raise TypeMismatch(f"types {f1.type} and {f2.type} differ")
    k = len(f1.labels)
    n1, n2 = f1.size, f2.size
    n = n1 + n2 - k
    out = []
    for xs in combinations(range(1, n + 1), n1):
        X = tuple(xs[v - 1] for v in f1.perm)
        common = [X[j - 1] for j in f1.labels]
        ys = sorted(set(range(1, n + 1)) - set(xs) | set(common))
        Y = tuple(ys[v - 1] for v in f2.perm)
        if [Y[j - 1] for j in f2.labels] == common:
            out.append((X, Y))
    return out


def x_shuffles(X: Sequence[int], Y: Sequence[int]) -> list[Flag]:
    common = set(X) & set(Y)
    cx = [v for v in X if v in common]
    cy = [v for v in Y if v in common]
    if cx != cy:
        raise InconsistentCommonOrder("common elements appear in different orders")
    out: list[Flag] = []

    def rec(i: int, j: int, acc: list[int]) -> None:
        if i == len(X) and j == len(Y):
            z = standardize(acc)
            labs = tuple(p for p, v in enumerate(acc, 1) if v in common)
            out.append(Flag(z, labs))
            return
        xh = X[i] if i < len(X) else None
        yh = Y[j] if j < len(Y) else None
        if xh is not None and xh not in common:
            rec(i + 1, j, acc + [xh])
        if yh is not None and yh not in common:
            rec(i, j + 1, acc + [yh])
        if xh is not None and xh == yh:
            rec(i + 1, j + 1, acc + [xh])

    rec(0, 0, [])
    return out


def product_mod_N(f1: Flag, f2: Flag) -> TypedSum:
    if f1.size + f2.size - len(f1.labels) > MAX_DEGREE:
        raise OrderCspError(f"product degree exceeds {MAX_DEGREE}")
    shuffles = y_shuffles(f1, f2)
    X, Y = shuffles[0]
    p1, p2 = partv(f1), partv(f2)
    c = Fraction(multinomial(p1) * multinomial(p2), multinomial([a + b for a, b in zip(p1, p2)]))
    out = TypedSum(f1.type)
    for z in x_shuffles(X, Y):
        out.add(z, c)
    return out


EMPTY = Perm(())


def average(ts: TypedSum) -> TypedSum:
    out = TypedSum(EMPTY)
    k = len(ts.type)
    for f, c in ts.items():
        out.add(Flag(f.perm, ()), c / comb(f.size, k))
    return out


@lru_cache(maxsize=None)
def _constant_terms(n: int) -> tuple[tuple[Flag, int], ...]:
    return tuple((Flag(p, ()), 1) for p in enumerate_perms(n))


def express_constant(c, n: int) -> TypedSum:
    if n > MAX_DEGREE:
        raise OrderCspError(f"degree {n} exceeds {MAX_DEGREE}")
    c = Fraction(c)
    out = TypedSum(EMPTY)
    if c == 0:
        return out
    for f, _ in _constant_terms(n):
        out.add(f, c)
    return out


def lift(ts: TypedSum, n: int) -> TypedSum:
    """Rewrite a type-∅ sum at degree n via d(ρ) = Σ_τ d(ρ, τ) d(τ)."""
    if len(ts.type):
        raise TypeMismatch("lift is defined for type ∅ only")
    out = TypedSum(EMPTY)
    targets = enumerate_perms(n)
    for f, c in ts.items():
        if f.size > n:
            raise OrderCspError("cannot lift to a smaller degree")
        for t in targets:
            d = pattern_density_in_perm(f.perm, t)
            if d:
                out.add(Flag(t, ()), c * d)
    return out


def signature_class(sig: str) -> Flag:
    """Lexicographically smallest unlabeled permutation with the given signature."""
    n = len(sig) + 1
    want = tuple(ch == "u" for ch in sig)
    for p in enumerate_perms(n):
        if udsign(p) == want:
            return Flag(p, ())
    raise OrderCspError(f"no permutation with signature {sig}")


def from_signatures(coeffs: dict[str, Fraction]) -> TypedSum:
    out = TypedSum(EMPTY)
    for s, c in coeffs.items():
        out.add(signature_class(s), c)
    return out


def sos_square() -> TypedSum:
    """⟦((u.u) - (d.d))²⟧ with (u.u) = (1 [2] 3) and (d.d) = (3 [2] 1)."""
    diff = flag_sum(Flag.parse("1 [2] 3")) - flag_sum(Flag.parse("3 [2] 1"))
    return average(diff * diff)


@lru_cache(maxsize=None)
def uu_dd_lower_bound() -> Fraction:
    """The constant c with (uu) + (dd) >= c, read off the sum-of-squares identity.

    ⟦((u.u)-(d.d))²⟧ = a((uu)+(dd)) - b·1 exactly at degree 5 gives c = b/a.
    """
    sq = sos_square().by_signature()
    uu_dd = lift(from_signatures({"uu": 1, "dd": 1}), 5).by_signature()
    one = express_constant(1, 5).by_signature()
    keys = sorted(set(sq) | set(uu_dd) | set(one))
    # two equations pin a and b; every other coordinate must then agree
    a = b = None
    for s1, s2 in combinations(keys, 2):
        p1, q1, r1 = uu_dd.get(s1, 0), one.get(s1, 0), sq.get(s1, 0)
        p2, q2, r2 = uu_dd.get(s2, 0), one.get(s2, 0), sq.get(s2, 0)
        det = -p1 * q2 + p2 * q1
        if det:
            a = Fraction(-r1 * q2 + r2 * q1, det)
            b = Fraction(p1 * r2 - p2 * r1, det)
            break
    if a is None or any(a * uu_dd.get(s, 0) - b * one.get(s, 0) != sq.get(s, 0) for s in keys):
        raise OrderCspError("square is not of the form a((uu)+(dd)) - b")
    if a <= 0:
        raise OrderCspError("identity does not yield a lower bound")
    return b / a


def _block_offsets(combo: IduCombination) -> list:
    offs, acc = [], 0
    for w, _ in combo.blocks:
        offs.append(acc)
        acc = acc + w
    return offs


def tag_points(combo: IduCombination, S: Sequence[tuple[int, Fraction]]) -> list[tuple[Fraction, Fraction, int]]:
    """Points (x, y, block) of the transposed combination for tags (block, y); blocks 1-based."""
    offs = _block_offsets(combo)
    pts = []
    for b, y in S:
        if not 1 <= b <= len(combo.blocks):
            raise InconsistentTag(f"block {b} out of range")
        w, kind = combo.blocks[b - 1]
        if kind == "U":
            raise InconsistentTag("tagged densities need ID-only combinations")
        if not 0 < y < 1 or w == 0:
            raise InconsistentTag("tag must lie strictly inside a nonempty block")
        x = offs[b - 1] + (w * y if kind == "I" else w * (1 - y))
        pts.append((x, Fraction(y), b))
    if len({p[0] for p in pts}) != len(pts) or len({p[1] for p in pts}) != len(pts):
        raise InconsistentTag("tags must have distinct coordinates")
    return sorted(pts)


def density_in_tagged_combo(flag: Flag, combo: IduCombination, S: Sequence[tuple[int, Fraction]]) -> Fraction:
    """Probability that n-k fresh points, with the tagged ones, form the flag."""
    if combo.has_uniform:
        raise InconsistentTag("U blocks are not supported")
    k = len(flag.labels)
    if len(S) != k:
        raise InconsistentTag("need one tag per label")
    pts = tag_points(combo, S)
    if standardize([p[1] for p in pts]) != flag.type:
        raise InconsistentTag("tags are not order-isomorphic to the flag type")
    ys = sorted(p[1] for p in pts)
    cuts = [Fraction(0)] + ys + [Fraction(1)]
    z = [b - a for a, b in zip(cuts, cuts[1:])]
    dv = partv(flag)
    lead = Fraction(multinomial(dv))
    for zi, di in zip(z, dv):
        lead *= zi**di
    if lead == 0:
        return Fraction(0)
    g = {j: p[2] for j, p in zip(flag.labels, pts)}
    sig = udsign(flag.perm)
    n = flag.size
    blocks = combo.blocks
    # weakly increasing block labels f over positions; runs must match the block kind
    total = Fraction(0)

    def rec(pos: int, prev: int, acc: Fraction) -> None:
        nonlocal total
        if pos > n:
            total += acc
            return
        choices = [g[pos]] if pos in g else range(max(prev, 1), len(blocks) + 1)
        for b in choices:
            if b < prev:
                continue
            w, kind = blocks[b - 1]
            if w == 0:
                continue
            if b == prev and pos > 1:
                up = sig[pos - 2]
                if (kind == "I" and not up) or (kind == "D" and up):
                    continue
            rec(pos + 1, b, acc if pos in g else acc * w)

    rec(1, 0, Fraction(1))
    return lead * total


def parse_typed_sum(text: str) -> TypedSum:
    """Parse 'c1 * flag1 + c2 * flag2' (flags in bracket notation, optionally parenthesized)."""
    terms = []
    for part in re.split(r"\s\+\s|\s(?=-\s*\d)", text.strip()):
        part = part.strip()
        if not part:
            continue
        if "*" in part:
            c, f = part.split("*", 1)
            coef = Fraction(c.replace(" ", ""))
        else:
            coef, f = Fraction(1), part
        terms.append((Flag.parse(f.strip().strip("()")), coef))
    if not terms:
        raise ParseError("empty sum")
    return TypedSum(terms[0][0].type, terms)
