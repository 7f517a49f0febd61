"""IDU up-combinations: exact pattern densities, signature profiles, the p objective, sampling."""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import permutations, product
from math import factorial
from numbers import Rational
from typing import Sequence, Union

import numpy as np

from .errors import EmptySat, NotARelaxation, OrderCspError, ParseError, TooLarge
from .perm_core import (
    Perm,
    UdSignature,
    compose,
    inverse,
    parse_sign,
    sign_class_sizes,
    sign_from_index,
    sign_index,
    sign_str,
    standardize,
    udsign,
)
from .predicate import Predicate, is_relaxation

KINDS = ("I", "D", "U")
Scalar = Union[Fraction, float, int]


def parse_scalar(text: str) -> Fraction:
    text = text.strip()
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"bad number {text!r}") from None


def _norm(w):
    return Fraction(w) if isinstance(w, int) else w


@dataclass(frozen=True)
class IduCombination:
    """Blocks stacked bottom to top: the first block receives the smallest values."""

    blocks: tuple[tuple[Scalar, str], ...]
    check: bool = True

    def __post_init__(self):
        object.__setattr__(
            self, "blocks", tuple((_norm(w), kind.upper()) for w, kind in self.blocks)
        )
        if not self.blocks:
            raise OrderCspError("combination needs at least one block")
        for w, kind in self.blocks:
            if kind not in KINDS:
                raise OrderCspError(f"unknown block kind {kind!r}")
            if w < 0:
                raise OrderCspError(f"negative weight {w}")
        if self.check:
            total = sum(w for w, _ in self.blocks)
            if self.exact:
                if total != 1:
                    raise OrderCspError(f"weights sum to {total}, not 1")
            elif abs(total - 1) > 1e-12:
                raise OrderCspError(f"weights sum to {total}, not 1")

    @classmethod
    def of(cls, *pairs) -> "IduCombination":
        """IduCombination.of((Fraction(1, 2), "I"), (Fraction(1, 2), "D"))"""
        return cls(tuple(pairs))

    @classmethod
    def parse(cls, text: str) -> "IduCombination":
        blocks = []
        for term in text.split("+"):
            parts = term.split()
            if len(parts) != 2:
                raise ParseError(f"bad block {term.strip()!r}; expected 'weight KIND'")
            kind = parts[1].upper()
            if kind not in KINDS:
                raise ParseError(f"unknown block kind {parts[1]!r}")
            blocks.append((parse_scalar(parts[0]), kind))
        try:
            return cls(tuple(blocks))
        except OrderCspError as e:
            raise ParseError(str(e)) from None

    @property
    def weights(self) -> tuple:
        return tuple(w for w, _ in self.blocks)

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(kind for _, kind in self.blocks)

    @property
    def exact(self) -> bool:
        return all(isinstance(w, Rational) for w, _ in self.blocks)

    @property
    def has_uniform(self) -> bool:
        return any(kind == "U" and w != 0 for w, kind in self.blocks)

    def to_float(self) -> "IduCombination":
        return IduCombination(tuple((float(w), kd) for w, kd in self.blocks), check=False)

    def __str__(self) -> str:
        return " + ".join(f"{w} {kind}" for w, kind in self.blocks)


@dataclass(frozen=True)
class Mixture:
    components: tuple[tuple[Scalar, IduCombination], ...]

    def __post_init__(self):
        if not self.components:
            raise OrderCspError("mixture needs at least one component")
        object.__setattr__(self, "components", tuple((_norm(p), c) for p, c in self.components))
        total = sum(p for p, _ in self.components)
        if any(p < 0 for p, _ in self.components):
            raise OrderCspError("negative mixture probability")
        exact = all(isinstance(p, Rational) for p, _ in self.components)
        if (exact and total != 1) or (not exact and abs(total - 1) > 1e-12):
            raise OrderCspError(f"mixture probabilities sum to {total}")

    @classmethod
    def single(cls, combo: IduCombination) -> "Mixture":
        return cls(((Fraction(1) if combo.exact else 1.0, combo),))

    @classmethod
    def parse(cls, text: str) -> "Mixture":
        if "*" not in text:
            return cls.single(IduCombination.parse(text))
        comps = []
        for part in text.split(";"):
            m = re.fullmatch(r"\s*([^*]+)\*\s*\((.*)\)\s*", part)
            if not m:
                raise ParseError(f"bad mixture component {part.strip()!r}")
            comps.append((parse_scalar(m.group(1)), IduCombination.parse(m.group(2))))
        try:
            return cls(tuple(comps))
        except OrderCspError as e:
            raise ParseError(str(e)) from None

    @property
    def exact(self) -> bool:
        return all(isinstance(p, Rational) for p, _ in self.components) and all(
            c.exact for _, c in self.components
        )

    @property
    def has_uniform(self) -> bool:
        return any(c.has_uniform for _, c in self.components)

    def __str__(self) -> str:
        if len(self.components) == 1:
            return str(self.components[0][1])
        return " ; ".join(f"{p} * ({c})" for p, c in self.components)


def as_mixture(R: IduCombination | Mixture) -> Mixture:
    return R if isinstance(R, Mixture) else Mixture.single(R)


def _kpoly_sig(sig: Sequence[bool], combo: IduCombination):
    """Sum over weakly increasing block labelings of positions, runs checked against sig.

    f[i][b]: total weight of labelings of the first i positions whose last run sits in
    block b (b = 0 is the empty start).
    """
    k = len(sig) + 1
    blocks = combo.blocks
    B = len(blocks)
    zero = 0 * blocks[0][0]
    f = [[zero] * (B + 1) for _ in range(k + 1)]
    f[0][0] = zero + 1
    for i in range(k):
        for b in range(B + 1):
            fib = f[i][b]
            if not fib:
                continue
            for bp in range(b + 1, B + 1):
                w, kind = blocks[bp - 1]
                if not w:
                    continue
                wp = zero + 1
                for j in range(i + 1, k + 1):
                    if j - 1 > i:
                        up = sig[j - 2]
                        if (kind == "I" and not up) or (kind == "D" and up):
                            break
                    wp = wp * w
                    term = fib * wp
                    if kind == "U":
                        term = term / factorial(j - i)
                    f[j][bp] += term
    return sum(f[k][1:], zero)


def k_poly(pi: Sequence[int], combo: IduCombination):
    """Generating function of pi-partition functions evaluated at the block weights."""
    return _kpoly_sig(udsign(pi), combo)


def density(rho: Sequence[int], combo: IduCombination | Mixture):
    if isinstance(combo, Mixture):
        return sum(p * density(rho, c) for p, c in combo.components)
    return k_poly(inverse(Perm(rho)), combo)


class SignatureProfile:
    """Density of any pattern ρ, keyed by udsign(ρ^{-1})."""

    def __init__(self, k: int, values: Sequence):
        self.k = k
        self.values = tuple(values)

    def __getitem__(self, s) -> Scalar:
        if isinstance(s, int):
            return self.values[s]
        if isinstance(s, str):
            s = parse_sign(s)
        return self.values[sign_index(s)]

    def items(self):
        for i, v in enumerate(self.values):
            yield sign_from_index(self.k, i), v

    def total(self):
        return sum(c * v for c, v in zip(sign_class_sizes(self.k), self.values))

    def __repr__(self) -> str:
        body = ", ".join(f"{sign_str(s)}: {v}" for s, v in self.items())
        return f"SignatureProfile(k={self.k}, {{{body}}})"


def signature_profile(k: int, R: IduCombination | Mixture) -> SignatureProfile:
    mix = as_mixture(R)
    ns = 1 << (k - 1)
    vals = None
    for p, combo in mix.components:
        comp = [_kpoly_sig(sign_from_index(k, s), combo) for s in range(ns)]
        vals = [p * v for v in comp] if vals is None else [a + p * v for a, v in zip(vals, comp)]
    return SignatureProfile(k, vals)


@lru_cache(maxsize=4096)
def _rows_cached(k: int, sat: int, sat_prime: int) -> tuple[tuple[Perm, tuple[int, ...]], ...]:
    phi, phi_p = Predicate(k, sat), Predicate(k, sat_prime)
    mem = [(s, inverse(s)) for s in phi.members()]
    ns = 1 << (k - 1)
    rows = []
    for tau in phi_p.members():
        counts = [0] * ns
        for _, sinv in mem:
            counts[sign_index(udsign(compose(tau, sinv)))] += 1
        rows.append((tau, tuple(counts)))
    return tuple(rows)


def objective_rows(phi: Predicate, phi_prime: Predicate):
    """Per τ in Sat(φ'), how many σ in Sat(φ) have udsign(τσ^{-1}) = s, for each s."""
    if not is_relaxation(phi, phi_prime):
        raise NotARelaxation("Sat(phi) is not contained in Sat(phi')")
    if phi_prime.sat == 0 or phi.sat == 0:
        raise EmptySat("empty Sat")
    return _rows_cached(phi.arity, phi.sat, phi_prime.sat)


def p_value_detail(phi: Predicate, phi_prime: Predicate, R) -> tuple[Scalar, Perm]:
    rows = objective_rows(phi, phi_prime)
    prof = signature_profile(phi.arity, R).values
    best = None
    arg = None
    for tau, counts in rows:
        v = sum(c * x for c, x in zip(counts, prof) if c)
        if best is None or v < best:
            best, arg = v, tau
    return best, arg


def p_value(phi: Predicate, phi_prime: Predicate, R) -> Scalar:
    return p_value_detail(phi, phi_prime, R)[0]


def alpha_random(phi: Predicate) -> Fraction:
    return Fraction(len(phi), factorial(phi.arity))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _float_probs(ws) -> np.ndarray:
    p = np.array([float(w) for w in ws], dtype=np.float64)
    return p / p.sum()


def sample_with(rng: np.random.Generator, R: IduCombination | Mixture, n: int) -> Perm:
    mix = as_mixture(R)
    if len(mix.components) == 1:
        combo = mix.components[0][1]
    else:
        combo = mix.components[int(rng.choice(len(mix.components), p=_float_probs(p for p, _ in mix.components)))][1]
    B = len(combo.blocks)
    labels = rng.choice(B, size=n, p=_float_probs(combo.weights))
    order: list[int] = []
    for b in range(B):
        members = [i for i in range(n) if labels[i] == b]
        kind = combo.blocks[b][1]
        if kind == "D":
            members.reverse()
        elif kind == "U" and len(members) > 1:
            members = [members[j] for j in rng.permutation(len(members))]
        order.extend(members)
    out = [0] * n
    for r, i in enumerate(order, 1):
        out[i] = r
    return Perm._raw(out)


def sample(R: IduCombination | Mixture, n: int, seed: int) -> Perm:
    if n < 1:
        raise OrderCspError("n must be positive")
    return sample_with(make_rng(seed), R, n)


def restricted_density_exact(rho: Sequence[int], combo: IduCombination, n: int, J) -> Fraction:
    """P(patt(σ_n, J) = ρ), by enumerating every block assignment of [n]."""
    if n > 8:
        raise TooLarge(f"n = {n} exceeds 8")
    J = sorted(J)
    if len(J) != len(rho) or any(not 1 <= j <= n for j in J):
        raise OrderCspError("J must be a subset of [n] of size |rho|")
    rho = tuple(rho)
    live = [b for b, (w, _) in enumerate(combo.blocks) if w]
    total = 0 * combo.blocks[0][0]
    for labels in product(live, repeat=n):
        w = 1
        for b in labels:
            w = w * combo.blocks[b][0]
        # within-block ordering of J's elements; U blocks contribute every order equally
        groups = {}
        for j in J:
            groups.setdefault(labels[j - 1], []).append(j)
        u_groups = [b for b in groups if combo.blocks[b][1] == "U"]
        orders = [permutations(groups[b]) for b in u_groups]
        n_orders = 1
        for b in u_groups:
            n_orders *= factorial(len(groups[b]))
        hits = 0
        for choice in product(*orders):
            seq = []
            u_map = dict(zip(u_groups, choice))
            for b in sorted(groups):
                kind = combo.blocks[b][1]
                members = groups[b]
                if kind == "D":
                    members = members[::-1]
                elif kind == "U":
                    members = list(u_map[b])
                seq.extend(members)
            value = {j: r for r, j in enumerate(seq)}
            if standardize([value[j] for j in J]) == rho:
                hits += 1
        if hits:
            total += w * Fraction(hits, n_orders) if isinstance(w, Rational) else w * hits / n_orders
    return total
