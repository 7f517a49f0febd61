"""Search for good IDU mixtures, certify them exactly, and the first-order sufficient condition."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import factorial
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from . import __version__, kernels
from .errors import ArityUnsupported, DegenerateMixture
from .idu import (
    IduCombination,
    Mixture,
    alpha_random,
    as_mixture,
    make_rng,
    objective_rows,
    p_value_detail,
)
from .perm_core import Perm, compose, inverse, sign_class_sizes, sign_index, udsign_pm
from .predicate import Predicate, format_predicate

KIND_CODE = {"I": 0, "D": 1, "U": 2}


# ---------------------------------------------------------------- v-vectors and LP


def v_vectors(phi: Predicate, phi_prime: Predicate) -> dict[Perm, tuple[int, ...]]:
    objective_rows(phi, phi_prime)  # validates the pair
    k = phi.arity
    sinv = [inverse(s) for s in phi.members()]
    out = {}
    for tau in phi_prime.members():
        acc = [0] * (k - 1)
        for si in sinv:
            for i, b in enumerate(udsign_pm(compose(tau, si))):
                acc[i] += b
        out[tau] = tuple(acc)
    return out


@dataclass(frozen=True)
class Witness:
    y: tuple[Fraction, ...]
    margin: Fraction  # min over τ of <y, v(φ, τ)>


class _Infeasible:
    def __repr__(self) -> str:
        return "Infeasible"

    def __bool__(self) -> bool:
        return False


Infeasible = _Infeasible()


def _solve_exact(A: list[list[Fraction]], b: list[Fraction]) -> list[Fraction] | None:
    """Gauss-Jordan over the rationals; None when singular."""
    n = len(A)
    M = [list(row) + [rhs] for row, rhs in zip(A, b)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            return None
        M[col], M[piv] = M[piv], M[col]
        inv = 1 / M[col][col]
        M[col] = [x * inv for x in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [a - f * c for a, c in zip(M[r], M[col])]
    return [M[r][n] for r in range(n)]


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _affine_min(S: list[tuple[Fraction, ...]]) -> list[Fraction] | None:
    """Barycentric coefficients of the min-norm point of aff(S)."""
    m = len(S)
    A = [[_dot(S[i], S[j]) for j in range(m)] + [Fraction(1)] for i in range(m)]
    A.append([Fraction(1)] * m + [Fraction(0)])
    sol = _solve_exact(A, [Fraction(0)] * m + [Fraction(1)])
    return None if sol is None else sol[:m]


def min_norm_point(vectors: Sequence[Sequence[int]]) -> tuple[Fraction, ...]:
    """Exact point of conv(vectors) closest to the origin (Wolfe's algorithm over Q)."""
    pts = sorted({tuple(Fraction(x) for x in v) for v in vectors})
    d = len(pts[0])
    S = [min(pts, key=lambda v: (_dot(v, v), v))]
    lam = [Fraction(1)]
    x = S[0]
    while True:
        xx = _dot(x, x)
        if xx == 0:
            break
        v = min(pts, key=lambda p: (_dot(x, p), p))
        if _dot(x, v) >= xx or v in S:
            break
        S.append(v)
        lam.append(Fraction(0))
        while True:
            alpha = _affine_min(S)
            if alpha is None:  # cannot happen for affinely independent S
                raise ArithmeticError("degenerate corral")
            if all(a > 0 for a in alpha):
                lam = alpha
                break
            theta = min(l / (l - a) if l != a else Fraction(0) for l, a in zip(lam, alpha) if a <= 0)
            lam = [(1 - theta) * l + theta * a for l, a in zip(lam, alpha)]
            keep = [i for i, l in enumerate(lam) if l > 0]
            S = [S[i] for i in keep]
            lam = [lam[i] for i in keep]
        x = tuple(sum(l * s[i] for l, s in zip(lam, S)) for i in range(d))
    return x


def min_norm_point_faces(vectors: Sequence[Sequence[int]]) -> tuple[Fraction, ...]:
    """Exact min-norm point by brute force over faces (slow reference).

    The minimizer lies in the relative interior of a face spanned by at most d+1
    affinely independent points, so every such subset is tried.
    """
    pts = sorted({tuple(Fraction(x) for x in v) for v in vectors})
    d = len(pts[0])
    best = None
    best_norm = None
    for size in range(1, min(d + 1, len(pts)) + 1):
        for S in combinations(pts, size):
            v0 = S[0]
            dirs = [[a - b for a, b in zip(v, v0)] for v in S[1:]]
            if dirs:
                G = [[_dot(di, dj) for dj in dirs] for di in dirs]
                rhs = [-_dot(v0, dj) for dj in dirs]
                mu = _solve_exact(G, rhs)
                if mu is None:
                    continue
            else:
                mu = []
            lam0 = 1 - sum(mu)
            if lam0 < 0 or any(m < 0 for m in mu):
                continue
            p = tuple(v0[i] + sum(m * di[i] for m, di in zip(mu, dirs)) for i in range(d))
            nrm = _dot(p, p)
            if best_norm is None or nrm < best_norm or (nrm == best_norm and p < best):
                best, best_norm = p, nrm
    return best


def sufficient_condition(phi: Predicate, phi_prime: Predicate):
    """A rational y with <y, v(φ,τ)> > 0 for every τ ∈ Sat(φ'), or Infeasible.

    y is the min-norm point of conv{v}, which maximizes the worst margin among
    directions of the same length.
    """
    vecs = list(v_vectors(phi, phi_prime).values())
    return witness_for(vecs)


def witness_for(vecs: Sequence[Sequence[int]]):
    p = min_norm_point(vecs)
    if all(x == 0 for x in p):
        return Infeasible
    return Witness(p, min(_dot(p, v) for v in vecs))


def perturbation_mixture(y: Sequence, eps: Fraction, xs: Sequence[Fraction] | None = None) -> Mixture:
    """First-order perturbation of U steering the density change along y.

    Mixes A(x, eps) = U ⊕ I ⊕ U and B(x, eps) = U ⊕ D ⊕ U, with the middle block of
    relative size eps, at k-1 distinct cut points x.
    """
    k = len(y) + 1
    eps = Fraction(eps)
    if xs is None:
        xs = [Fraction(i, k) for i in range(1, k)]
    M = [
        [
            Fraction(x ** (b - 1) * (1 - x) ** (k - 1 - b), factorial(b - 1) * factorial(k - 1 - b))
            for x in xs
        ]
        for b in range(1, k)
    ]
    z = _solve_exact(M, [Fraction(v) for v in y])
    if z is None:
        raise DegenerateMixture("cut points must be distinct")
    total = sum(abs(v) for v in z)
    if total == 0:
        raise DegenerateMixture("zero direction")
    comps = []
    s = 1 + eps
    for x, zi in zip(xs, z):
        if zi == 0:
            continue
        mid = "I" if zi > 0 else "D"
        combo = IduCombination(((x / s, "U"), (eps / s, mid), ((1 - x) / s, "U")))
        comps.append((abs(zi) / total, combo))
    return Mixture(tuple(comps))


# ---------------------------------------------------------------- float search


@dataclass
class SearchConfig:
    max_blocks: int = 6
    max_components: int | None = None
    restarts: int = 64
    seed: int = 0
    tol: float = 1e-9
    max_iter: int = 4000
    polish_rounds: int = 2


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    r = idx[cond][-1]
    theta = css[r - 1] / r
    w = np.maximum(v - theta, 0.0)
    return w / w.sum()


class FloatObjective:
    """p(φ'→φ, ·) in floats for a fixed block structure."""

    def __init__(self, phi: Predicate, phi_prime: Predicate):
        self.k = phi.arity
        rows = objective_rows(phi, phi_prime)
        self.taus = [t for t, _ in rows]
        self.C = np.array([c for _, c in rows], dtype=np.float64)

    def profile(self, kinds: Sequence[str], w: Sequence[float]) -> np.ndarray:
        return kernels.profile_float(
            self.k,
            np.array([KIND_CODE[x] for x in kinds], dtype=np.int32),
            np.asarray(w, dtype=np.float64),
        )

    def value(self, structure, probs, weights) -> float:
        prof = np.zeros(self.C.shape[1])
        for kinds, p, w in zip(structure, probs, weights):
            if p > 0:
                prof += p * self.profile(kinds, w)
        return float(np.min(self.C @ prof))

    def value_mixture(self, mix: Mixture) -> float:
        mix = as_mixture(mix)
        return self.value(
            [c.kinds for _, c in mix.components],
            [float(p) for p, _ in mix.components],
            [[float(w) for w in c.weights] for _, c in mix.components],
        )


def _split(x: np.ndarray, structure) -> tuple[np.ndarray, list[np.ndarray]]:
    m = len(structure)
    if m == 1:
        probs = np.ones(1)
        off = 0
    else:
        probs = project_simplex(x[:m])
        off = m
    weights = []
    for kinds in structure:
        b = len(kinds)
        weights.append(project_simplex(x[off : off + b]))
        off += b
    return probs, weights


def _local_search(obj: FloatObjective, structure, x0: np.ndarray, cfg: SearchConfig):
    def f(x):
        probs, weights = _split(x, structure)
        return -obj.value(structure, probs, weights)

    x = x0
    best = f(x)
    # restarting Nelder–Mead from its own output escapes collapsed simplices
    for r in range(1 + cfg.polish_rounds):
        res = minimize(
            f,
            x,
            method="Nelder-Mead",
            options={"maxfev": cfg.max_iter, "xatol": cfg.tol, "fatol": cfg.tol, "adaptive": True},
        )
        improved = res.fun < best - cfg.tol
        if res.fun <= best:
            x, best = res.x, res.fun
        if r > 0 and not improved:
            break
    probs, weights = _split(x, structure)
    return -best, probs, weights


def _seed_structures(k: int, cfg: SearchConfig, rng: np.random.Generator):
    fixed = [
        [("I", "D")],
        [("D", "I", "D")],
        [("I", "U", "I")],
        [("U",)],
        [("D", "I")],
        [("I", "D", "I")],
        [("I", "I", "I")],
        [("D", "D", "D")],
        [("I", "I")],
        [("I", "D"), ("D", "I")],
    ]
    out = []
    for st in fixed:
        if all(len(c) <= cfg.max_blocks for c in st) and len(st) <= _max_components(k, cfg):
            out.append((st, None))
    while len(out) < cfg.restarts:
        m = int(rng.integers(1, min(2, _max_components(k, cfg)) + 1))
        st = []
        for _ in range(m):
            b = int(rng.integers(1, cfg.max_blocks + 1))
            st.append(tuple(str(c) for c in rng.choice(["I", "D", "U"], size=b)))
        out.append((st, None))
    return out[: max(cfg.restarts, 1)]


def _max_components(k: int, cfg: SearchConfig) -> int:
    return cfg.max_components if cfg.max_components is not None else 2 ** (k - 1)


def _initial_point(structure, rng, start: Mixture | None) -> np.ndarray:
    if start is not None:
        probs = [float(p) for p, _ in start.components]
        ws = [float(w) for _, c in start.components for w in c.weights]
        return np.array((probs if len(structure) > 1 else []) + ws)
    parts = []
    if len(structure) > 1:
        parts.append(rng.dirichlet(np.ones(len(structure))))
    for kinds in structure:
        parts.append(rng.dirichlet(np.ones(len(kinds))))
    return np.concatenate(parts)


def _mixture_from(structure, probs, weights, merge_tol: float = 1e-7) -> Mixture:
    """Drop empty blocks and components; merge components that coincide up to merge_tol."""
    comps: list[list] = []
    for kinds, p, w in zip(structure, probs, weights):
        if p <= 0:
            continue
        blocks = tuple((float(x), kd) for x, kd in zip(w, kinds) if x > 0)
        tot = sum(x for x, _ in blocks)
        blocks = tuple((x / tot, kd) for x, kd in blocks)
        for slot in comps:
            other = slot[1]
            if [kd for _, kd in other] == [kd for _, kd in blocks] and all(
                abs(a - b) <= merge_tol for (a, _), (b, _) in zip(other, blocks)
            ):
                slot[0] += float(p)
                break
        else:
            comps.append([float(p), blocks])
    tot = sum(p for p, _ in comps)
    return Mixture(tuple((p / tot, IduCombination(b, check=False)) for p, b in comps))


def _mixture_key(mix: Mixture):
    return tuple((round(p, 12), c.kinds, tuple(round(w, 12) for w in c.weights)) for p, c in mix.components)


def optimize_p(phi: Predicate, phi_prime: Predicate, config: SearchConfig | None = None,
               extra_starts: Sequence[Mixture] = ()) -> tuple[Mixture, float]:
    """Multi-start Nelder–Mead over block weights and component probabilities."""
    cfg = config or SearchConfig()
    obj = FloatObjective(phi, phi_prime)
    rng = make_rng(cfg.seed)
    starts = _seed_structures(phi.arity, cfg, rng)
    for mix in extra_starts:
        mix = as_mixture(mix)
        starts.insert(0, ([c.kinds for _, c in mix.components], mix))
    best = None
    for structure, start in starts:
        x0 = _initial_point(structure, rng, start)
        val, probs, weights = _local_search(obj, structure, x0, cfg)
        mix = _mixture_from(structure, probs, weights)
        val = obj.value_mixture(mix)
        cand = (val, mix)
        if best is None or val > best[0] + cfg.tol or (
            abs(val - best[0]) <= cfg.tol and _mixture_key(mix) < _mixture_key(best[1])
        ):
            best = cand
    return best[1], best[0]


# ---------------------------------------------------------------- certification


@dataclass
class Certificate:
    phi: Predicate
    phi_prime: Predicate
    mixture: Mixture
    p: Fraction
    argmin_tau: Perm
    version: str = field(default=__version__)

    def to_json(self) -> str:
        comps = [
            {"prob": str(p), "blocks": [{"weight": str(w), "kind": kd} for w, kd in c.blocks]}
            for p, c in self.mixture.components
        ]
        doc = {
            "phi": {"arity": self.phi.arity, "sat": [str(s) for s in self.phi.members()]},
            "phi_prime": {"arity": self.phi_prime.arity, "sat": [str(s) for s in self.phi_prime.members()]},
            "mixture": comps,
            "mixture_text": str(self.mixture),
            "p": str(self.p),
            "p_float": float(self.p),
            "argmin_tau": str(self.argmin_tau),
            "version": self.version,
        }
        return json.dumps(doc, indent=2)

    def recheck(self) -> bool:
        return p_value_detail(self.phi, self.phi_prime, self.mixture)[0] == self.p


def rationalize(x, max_den: int = 10**6) -> Fraction:
    return Fraction(x).limit_denominator(max_den)


def _renormalize(vals: list[Fraction]) -> list[Fraction]:
    tot = sum(vals)
    if tot == 0:
        raise DegenerateMixture("all weights rounded to zero")
    return [v / tot for v in vals]


def exact_mixture(mixture, max_den: int = 10**6) -> Mixture:
    """Round every weight to a nearby rational and renormalize exactly."""
    mix = as_mixture(mixture)
    probs = _renormalize([rationalize(p, max_den) for p, _ in mix.components])
    comps = []
    for p, (_, c) in zip(probs, mix.components):
        if p == 0:
            continue
        ws = _renormalize([rationalize(w, max_den) for w in c.weights])
        comps.append((p, IduCombination(tuple(zip(ws, c.kinds)))))
    return Mixture(tuple(comps))


def certify(phi: Predicate, phi_prime: Predicate, mixture_float, max_den: int = 10**6) -> Certificate:
    for p, c in as_mixture(mixture_float).components:
        if not 0 <= p <= 1 or any(not 0 <= w <= 1 for w in c.weights):
            raise DegenerateMixture("weights must lie in [0, 1]")
    mix = exact_mixture(mixture_float, max_den)
    p, tau = p_value_detail(phi, phi_prime, mix)
    return Certificate(phi, phi_prime, mix, p, tau)


# ---------------------------------------------------------------- arity-3 upper bound


class _Unknown:
    def __repr__(self) -> str:
        return "Unknown"

    def __bool__(self) -> bool:
        return False


Unknown = _Unknown()


def _lp_max_exact(c, A_ub, b_ub, A_eq, b_eq):
    """max c·x s.t. A_ub x <= b_ub, A_eq x = b_eq, by enumerating basic solutions.

    Only for tiny, bounded problems.
    """
    n = len(c)
    need = n - len(A_eq)
    best = None
    for rows in combinations(range(len(A_ub)), need):
        A = [list(A_ub[r]) for r in rows] + [list(a) for a in A_eq]
        b = [b_ub[r] for r in rows] + list(b_eq)
        x = _solve_exact(A, b)
        if x is None:
            continue
        if any(_dot(a, x) > bb for a, bb in zip(A_ub, b_ub)):
            continue
        val = _dot(c, x)
        if best is None or val > best:
            best = val
    return best


def upper_bound_exhausted(phi: Predicate, phi_prime: Predicate):
    """Proven upper bound on p(φ'→φ, R) over all strong IDU R, arity 3 only.

    Any such R has a signature profile x >= 0 with Σ count_s x_s = 1 and, by the
    flag-algebra identity, x_uu + x_dd >= 1/3. Maximizing the min over τ on that
    polytope bounds p; pairs of rows summing inside the simplex give 1/2.
    """
    from .flags import uu_dd_lower_bound

    if phi.arity != 3:
        raise ArityUnsupported("upper bound implemented for arity 3 only")
    rows = [cnt for _, cnt in objective_rows(phi, phi_prime)]
    sizes = sign_class_sizes(3)
    uu, dd = sign_index((True, True)), sign_index((False, False))
    lb = uu_dd_lower_bound()
    ns = len(sizes)
    # variables: x_0..x_3, t ; maximize t
    c = [Fraction(0)] * ns + [Fraction(1)]
    A_ub, b_ub = [], []
    for r in rows:
        A_ub.append([-Fraction(v) for v in r] + [Fraction(1)])
        b_ub.append(Fraction(0))
    for i in range(ns):
        A_ub.append([Fraction(-1 if j == i else 0) for j in range(ns)] + [Fraction(0)])
        b_ub.append(Fraction(0))
    A_ub.append([Fraction(-1 if j in (uu, dd) else 0) for j in range(ns)] + [Fraction(0)])
    b_ub.append(-lb)
    A_eq = [[Fraction(s) for s in sizes] + [Fraction(0)]]
    b_eq = [Fraction(1)]
    bound = _lp_max_exact(c, A_ub, b_ub, A_eq, b_eq)
    if bound is None or bound >= 1:
        return Unknown
    return bound


def describe_pair(phi: Predicate, phi_prime: Predicate) -> str:
    return format_predicate(phi) + "relaxed to\n" + format_predicate(phi_prime)


__all__ = [
    "Certificate",
    "Infeasible",
    "SearchConfig",
    "Unknown",
    "Witness",
    "alpha_random",
    "certify",
    "optimize_p",
    "perturbation_mixture",
    "sufficient_condition",
    "upper_bound_exhausted",
    "v_vectors",
]
