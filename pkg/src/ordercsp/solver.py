"""Instances, relaxed solving (Not-First, Not-Last, precedence), IDU rounding and derandomization."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations, product
from typing import Sequence

import numpy as np

from .errors import (
    ArityMismatch,
    DuplicateIndexInTuple,
    HasUniformBlock,
    OrderCspError,
    ParseError,
    TooLarge,
    TooLargeForExact,
    Unsatisfiable,
)
from .idu import IduCombination, Mixture, as_mixture, density, p_value, sample
from .perm_core import Perm, compose, inverse, standardize
from .predicate import (
    BUILTIN,
    Predicate,
    implied_nfirst,
    implied_nlast,
    implied_pairs,
    parse_predicate,
    relaxation,
)

Ordering = Perm  # variable i gets position ordering(i)


@dataclass
class Instance:
    n: int
    constraints: list[tuple[str, tuple[int, ...]]]
    predicates: dict[str, Predicate] = field(default_factory=dict)

    def predicate(self, name: str) -> Predicate:
        return self.predicates[name]

    @property
    def m(self) -> int:
        return len(self.constraints)


def parse_instance(text: str) -> Instance:
    n = None
    preds: dict[str, Predicate] = {}
    cons: list[tuple[str, tuple[int, ...]]] = []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        lineno = i + 1
        line = lines[i].strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        head, *rest = line.split()
        if head == "vars":
            try:
                n = int(rest[0])
            except (IndexError, ValueError):
                raise ParseError("expected 'vars n'", lineno) from None
            if n < 0:
                raise ParseError("negative variable count", lineno)
            continue
        if head == "pred":
            if len(rest) != 1:
                raise ParseError("expected 'pred NAME'", lineno)
            body = []
            while i < len(lines) and lines[i].strip() != "end":
                body.append(lines[i])
                i += 1
            if i == len(lines):
                raise ParseError(f"pred {rest[0]} lacks 'end'", lineno)
            i += 1
            try:
                preds[rest[0]] = parse_predicate("\n".join(body))
            except ParseError as e:
                raise ParseError(f"in pred {rest[0]}: {e}", lineno) from None
            continue
        if n is None:
            raise ParseError("'vars n' must come first", lineno)
        if head not in preds:
            if head.lower() in BUILTIN:
                preds[head] = BUILTIN[head.lower()]()
            else:
                raise ParseError(f"unknown predicate {head!r}", lineno)
        try:
            tup = tuple(int(t) for t in rest)
        except ValueError:
            raise ParseError("non-integer variable index", lineno) from None
        if len(tup) != preds[head].arity:
            raise ArityMismatch(f"line {lineno}: {head} needs {preds[head].arity} variables")
        if len(set(tup)) != len(tup):
            raise DuplicateIndexInTuple(f"line {lineno}: repeated variable in {tup}")
        if any(not 1 <= v <= n for v in tup):
            raise ParseError(f"variable outside 1..{n}", lineno)
        cons.append((head, tup))
    if n is None:
        raise ParseError("missing 'vars n'")
    return Instance(n, cons, preds)


def format_instance(inst: Instance) -> str:
    out = [f"vars {inst.n}"]
    for name, phi in inst.predicates.items():
        if name.lower() in BUILTIN and BUILTIN[name.lower()]() == phi:
            continue
        out.append(f"pred {name}")
        out.append(f"arity {phi.arity}")
        out.append("sat:")
        out += [str(p) for p in phi.members()]
        out.append("end")
    out += [f"{name} {' '.join(map(str, t))}" for name, t in inst.constraints]
    return "\n".join(out) + "\n"


@dataclass
class RelaxedInstance:
    n: int
    kind: str  # "L", "R" or "EPS"
    constraints: list[tuple[Predicate, tuple[int, ...]]]  # relaxed predicate per constraint
    atoms: list  # (head, frozenset) for L/R, (u, v) edges for EPS


class _Unsat:
    def __repr__(self) -> str:
        return "Unsat"

    def __bool__(self) -> bool:
        return False


Unsat = _Unsat()


def relax(inst: Instance, kind: str) -> RelaxedInstance:
    kind = kind.upper()
    if kind in ("E", "EPSILON"):
        kind = "EPS"
    if kind not in ("L", "R", "EPS"):
        raise OrderCspError(f"unknown relaxation {kind!r}")
    cache: dict[str, tuple[Predicate, list]] = {}
    cons, atoms = [], []
    for name, tup in inst.constraints:
        if name not in cache:
            phi = inst.predicate(name)
            rel = relaxation(phi, kind)
            if kind == "L":
                local = [(a.head, a.others) for a in implied_nfirst(phi)]
            elif kind == "R":
                local = [(a.head, a.others) for a in implied_nlast(phi)]
            else:
                local = implied_pairs(phi)
            cache[name] = (rel, local)
        rel, local = cache[name]
        cons.append((rel, tup))
        if kind == "EPS":
            atoms += [(tup[i - 1], tup[j - 1]) for i, j in local]
        else:
            atoms += [(tup[h - 1], frozenset(tup[j - 1] for j in S)) for h, S in local]
    return RelaxedInstance(inst.n, kind, cons, atoms)


def _greedy_fill(n: int, atoms) -> list[int] | None:
    """Order variables so that each atom's head comes after some member of its set."""
    blocked = [0] * (n + 1)
    watch: dict[int, list[int]] = {}
    done = [False] * len(atoms)
    for a, (h, S) in enumerate(atoms):
        blocked[h] += 1
        for u in S:
            watch.setdefault(u, []).append(a)
    placed = [False] * (n + 1)
    heap = [v for v in range(1, n + 1) if blocked[v] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        if placed[v]:
            continue
        placed[v] = True
        order.append(v)
        for a in watch.get(v, ()):
            if not done[a]:
                done[a] = True
                h = atoms[a][0]
                blocked[h] -= 1
                if blocked[h] == 0 and not placed[h]:
                    heapq.heappush(heap, h)
    return order if len(order) == n else None


def _order_to_perm(order: Sequence[int]) -> Perm:
    pos = [0] * len(order)
    for p, v in enumerate(order, 1):
        pos[v - 1] = p
    return Perm._raw(pos)


def solve_not_first(rel: RelaxedInstance):
    order = _greedy_fill(rel.n, rel.atoms)
    return Unsat if order is None else _order_to_perm(order)


def solve_not_last(rel: RelaxedInstance):
    order = _greedy_fill(rel.n, rel.atoms)
    return Unsat if order is None else _order_to_perm(order[::-1])


def _weights(n: int, edges) -> np.ndarray:
    W = np.zeros((n, n), dtype=np.int64)
    for u, v in edges:
        if u != v:
            W[u - 1, v - 1] += 1
    return W


def fas_cost(order: Sequence[int], edges) -> int:
    pos = {v: i for i, v in enumerate(order)}
    return sum(1 for u, v in edges if pos[u] > pos[v])


def topological_order(n: int, edges) -> list[int] | None:
    indeg = [0] * (n + 1)
    succ: dict[int, list[int]] = {}
    for u, v in edges:
        indeg[v] += 1
        succ.setdefault(u, []).append(v)
    heap = [v for v in range(1, n + 1) if indeg[v] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        u = heapq.heappop(heap)
        order.append(u)
        for v in succ.get(u, ()):
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, v)
    return order if len(order) == n else None


def fas_exact(n: int, edges) -> tuple[list[int], int]:
    """Ordering with the fewest backward edges, by DP over the set placed first."""
    if n > 18:
        raise TooLargeForExact(f"n = {n} exceeds 18")
    if n == 0:
        return [], 0
    W = _weights(n, edges)
    full = 1 << n
    # back[v][S] = edges v -> S, i.e. violated when v is placed after S
    back = np.zeros((n, full), dtype=np.int64)
    for b in range(n):
        lo, hi = 1 << b, 1 << (b + 1)
        back[:, lo:hi] = back[:, 0:lo] + W[:, b : b + 1]
    INF = np.iinfo(np.int64).max // 4
    dp = np.full(full, INF, dtype=np.int64)
    last = np.full(full, -1, dtype=np.int64)
    dp[0] = 0
    idx = np.arange(full, dtype=np.int64)
    pop = np.zeros(full, dtype=np.int64)
    for b in range(n):
        pop += (idx >> b) & 1
    for layer in range(1, n + 1):
        sets = idx[pop == layer]
        for v in range(n):
            bit = 1 << v
            sel = sets[(sets & bit) != 0]
            prev = sel ^ bit
            cand = dp[prev] + back[v, prev]
            better = cand < dp[sel]
            dp[sel[better]] = cand[better]
            last[sel[better]] = v
    order = []
    S = full - 1
    while S:
        v = int(last[S])
        order.append(v + 1)
        S ^= 1 << v
    order.reverse()
    return order, int(dp[full - 1])


def _eades_order(W: np.ndarray) -> list[int]:
    """Eades-Lin-Smyth: peel sinks to the back, sources to the front, else max out-in."""
    n = W.shape[0]
    alive = set(range(n))
    front: list[int] = []
    back: list[int] = []
    while alive:
        changed = True
        while changed:
            changed = False
            for v in sorted(alive):
                if not any(W[v, u] for u in alive if u != v):
                    back.append(v)
                    alive.discard(v)
                    changed = True
            for v in sorted(alive):
                if not any(W[u, v] for u in alive if u != v):
                    front.append(v)
                    alive.discard(v)
                    changed = True
        if alive:
            v = max(sorted(alive), key=lambda v: sum(int(W[v, u]) - int(W[u, v]) for u in alive))
            front.append(v)
            alive.discard(v)
    return front + back[::-1]


def fas_greedy(n: int, edges) -> tuple[list[int], int]:
    """Two starts (Eades-Lin-Smyth and insertion by net out-degree), each sifted until stable."""
    W = _weights(n, edges)
    net = W.sum(axis=1) - W.sum(axis=0)
    seq = sorted(range(n), key=lambda v: (-net[v], v))

    def best_slot(order: list[int], v: int) -> tuple[int, int]:
        # cost of v at slot s = edges v->before + edges after->v
        before = 0
        after = sum(int(W[u, v]) for u in order)
        best, best_s = after, 0
        for s, u in enumerate(order, 1):
            before += int(W[v, u])
            after -= int(W[u, v])
            c = before + after
            if c < best:
                best, best_s = c, s
        return best_s, best

    def sift(order: list[int]) -> list[int]:
        improved = True
        while improved:
            improved = False
            for v in list(order):
                cur = order.index(v)
                rest = order[:cur] + order[cur + 1 :]
                s, c_new = best_slot(rest, v)
                before = sum(int(W[v, u]) for u in order[:cur]) + sum(int(W[u, v]) for u in order[cur + 1 :])
                if c_new < before:
                    order = rest[:s] + [v] + rest[s:]
                    improved = True
        return order

    inserted: list[int] = []
    for v in seq:
        s, _ = best_slot(inserted, v)
        inserted.insert(s, v)
    best = None
    for start in (_eades_order(W), inserted):
        out = [v + 1 for v in sift(start)]
        cand = (fas_cost(out, edges), out)
        if best is None or cand[0] < best[0]:
            best = cand
    return best[1], best[0]


def solve_precedence(rel: RelaxedInstance, mode: str = "exact") -> Perm:
    topo = topological_order(rel.n, rel.atoms)
    if topo is not None:
        return _order_to_perm(topo)
    if mode == "exact":
        order, _ = fas_exact(rel.n, rel.atoms)
    elif mode == "greedy":
        order, _ = fas_greedy(rel.n, rel.atoms)
    else:
        raise OrderCspError(f"unknown mode {mode!r}")
    return _order_to_perm(order)


def round_ordering(pi: Perm, R: IduCombination | Mixture, seed: int) -> Perm:
    return compose(sample(R, len(pi), seed), pi)


round = round_ordering  # noqa: A001 - public name of the rounding step


def satisfied(phi: Predicate, tup: Sequence[int], ordering: Sequence[int]) -> bool:
    return standardize([ordering[v - 1] for v in tup]) in phi


def evaluate(inst: Instance, ordering: Sequence[int]) -> tuple[int, Fraction]:
    if inst.m == 0:
        return 0, Fraction(1)
    cnt = sum(1 for name, tup in inst.constraints if satisfied(inst.predicate(name), tup, ordering))
    return cnt, Fraction(cnt, inst.m)


def evaluate_relaxed(rel: RelaxedInstance, ordering: Sequence[int]) -> Fraction:
    if not rel.constraints:
        return Fraction(1)
    cnt = sum(1 for phi, tup in rel.constraints if satisfied(phi, tup, ordering))
    return Fraction(cnt, len(rel.constraints))


def expected_satisfied(pi: Sequence[int], inst: Instance, R) -> Fraction:
    """Σ over constraints of P(satisfied) after rounding pi with R, from pattern densities."""
    total = 0
    cache: dict = {}
    for name, tup in inst.constraints:
        phi = inst.predicate(name)
        tau = standardize([pi[v - 1] for v in tup])
        key = (name, tau)
        if key not in cache:
            tinv = inverse(tau)
            cache[key] = sum(density(compose(s, tinv), R) for s in phi.members())
        total += cache[key]
    return total


def _block_keys(labels: Sequence[int], positions: Sequence[int], kinds: Sequence[str]) -> list:
    return [(labels[i], p if kinds[labels[i]] == "I" else -p) for i, p in enumerate(positions)]


def _cond_prob(phi: Predicate, positions: Sequence[int], fixed: dict, combo: IduCombination):
    """P(constraint satisfied | block labels in ``fixed``) for one ID combination."""
    kinds = combo.kinds
    live = [b for b, w in enumerate(combo.weights) if w]
    free = [i for i, p in enumerate(positions) if p not in fixed]
    zero = 0 * combo.weights[0]
    acc = zero
    for choice in product(live, repeat=len(free)):
        labels = [fixed.get(p) for p in positions]
        w = zero + 1
        for i, b in zip(free, choice):
            labels[i] = b
            w = w * combo.weights[b]
        if standardize(_block_keys(labels, positions, kinds)) in phi:
            acc += w
    return acc


def _labels_to_sigma(labels: Sequence[int], kinds: Sequence[str]) -> Perm:
    n = len(labels)
    keys = [(labels[p - 1], p if kinds[labels[p - 1]] == "I" else -p) for p in range(1, n + 1)]
    return standardize(keys)


def derandomize(pi: Perm, inst: Instance, R: IduCombination | Mixture) -> Perm:
    """Conditional expectations: pick the component, then each position's block in order."""
    mix = as_mixture(R)
    if mix.has_uniform:
        raise HasUniformBlock("derandomization needs ID-only combinations")
    n = len(pi)
    cons = [(inst.predicate(name), [pi[v - 1] for v in tup]) for name, tup in inst.constraints]
    best = None
    for ci, (p, combo) in enumerate(mix.components):
        if p == 0:
            continue
        val = sum((_cond_prob(phi, pos, {}, combo) for phi, pos in cons), 0 * combo.weights[0])
        if best is None or val > best[0]:
            best = (val, ci)
    combo = mix.components[best[1]][1]
    by_pos: dict[int, list[int]] = {}
    for c, (_, pos) in enumerate(cons):
        for p in pos:
            by_pos.setdefault(p, []).append(c)
    fixed: dict[int, int] = {}
    live = [b for b, w in enumerate(combo.weights) if w]
    for p in range(1, n + 1):
        touched = by_pos.get(p, [])
        if not touched:
            fixed[p] = live[0]
            continue
        best_b, best_v = None, None
        for b in live:
            fixed[p] = b
            v = sum(_cond_prob(cons[c][0], cons[c][1], fixed, combo) for c in touched)
            if best_v is None or v > best_v:
                best_b, best_v = b, v
        fixed[p] = best_b
    sigma = _labels_to_sigma([fixed[p] for p in range(1, n + 1)], combo.kinds)
    return compose(sigma, pi)


def brute_force_best(inst: Instance) -> tuple[Perm, Fraction]:
    if inst.n > 10:
        raise TooLarge(f"n = {inst.n} exceeds 10")
    if inst.m == 0:
        return Perm._raw(range(1, inst.n + 1)), Fraction(1)
    best = None
    for p in permutations(range(1, inst.n + 1)):
        cnt = evaluate(inst, p)[0]
        if best is None or cnt > best[0]:
            best = (cnt, p)
            if cnt == inst.m:
                break
    return Perm._raw(best[1]), Fraction(best[0], inst.m)


def certified_p(inst: Instance, kind: str, R):
    """Worst p(φ'→φ, R) over the predicates used by the instance."""
    names = sorted({name for name, _ in inst.constraints})
    if not names:
        return None
    return min(p_value(inst.predicate(nm), relaxation(inst.predicate(nm), kind), R) for nm in names)


def pipeline(inst: Instance, relax_kind: str, R, seed: int | None = None, derandomize_flag: bool = False,
             fas_mode: str | None = None):
    rel = relax(inst, relax_kind)
    if rel.kind == "L":
        pi = solve_not_first(rel)
    elif rel.kind == "R":
        pi = solve_not_last(rel)
    else:
        pi = solve_precedence(rel, fas_mode or ("exact" if inst.n <= 18 else "greedy"))
    if pi is Unsat:
        raise Unsatisfiable(f"the {rel.kind}-relaxed instance has no solution")
    s_relax = evaluate_relaxed(rel, pi)
    if derandomize_flag:
        final = derandomize(pi, inst, R)
    else:
        if seed is None:
            raise OrderCspError("randomized rounding needs a seed")
        final = round_ordering(pi, R, seed)
    _, frac = evaluate(inst, final)
    p = certified_p(inst, rel.kind, R)
    report = {
        "s_relax": str(s_relax),
        "fraction_final": str(frac),
        "p_certified": None if p is None else str(p),
        "seed": seed,
        "mode": f"{rel.kind}/{'derandomized' if derandomize_flag else 'randomized'}",
    }
    return final, report
