from fractions import Fraction
from itertools import combinations, permutations, product
from math import factorial
import random

import pytest
from hypothesis import given, strategies as st

from conftest import rational_combos
from ordercsp.errors import InconsistentCommonOrder, InconsistentTag, TypeMismatch
from ordercsp.flags import (
    EMPTY,
    Flag,
    TypedSum,
    average,
    density_in_tagged_combo,
    express_constant,
    flag_sum,
    from_signatures,
    lift,
    partv,
    product_mod_N,
    quotient_key,
    signature_class,
    sos_square,
    tag_points,
    uu_dd_lower_bound,
    x_shuffles,
    y_shuffles,
)
from ordercsp.idu import IduCombination, density, k_poly
from ordercsp.perm_core import enumerate_perms, inverse, patt, sign_class_sizes, sign_str, standardize


F = Flag.parse


def flags_of_type(tau, n):
    k = len(tau)
    out = []
    for p in enumerate_perms(n):
        for J in combinations(range(1, n + 1), k):
            if patt(p, J) == tau:
                out.append(Flag(p, J))
    return out


# ---------------------------------------------------------------- oracles


def star_product(f1: Flag, f2: Flag) -> dict:
    """Flag product straight from the random-split definition (no shuffles)."""
    tau = f1.type
    k = len(tau)
    n = f1.size + f2.size - k
    out = {}
    for g in flags_of_type(tau, n):
        free = [i for i in range(1, n + 1) if i not in g.labels]
        hits = total = 0
        for A in combinations(free, f1.size - k):
            B = [i for i in free if i not in A]
            total += 1
            ok = True
            for part, f in ((A, f1), (B, f2)):
                pos = sorted(set(part) | set(g.labels))
                sub = Flag(patt(g.perm, pos), tuple(pos.index(j) + 1 for j in g.labels))
                ok &= sub == f
            hits += ok
        if hits:
            out[g] = Fraction(hits, total)
    return out


def as_typed(tau, d: dict) -> TypedSum:
    return TypedSum(tau, d.items())


def tagged_law(combo: IduCombination, S, n: int) -> dict:
    """Exact law of (pattern, tagged positions) by enumerating block, y-cell and y-order of fresh points.

    Fresh points: block b with prob w_b, y uniform; inside block b the x-order follows y (I) or reverses it (D).
    """
    pts = tag_points(combo, S)  # (x, y, block) sorted by x
    k = len(pts)
    m = n - k
    tys = sorted(p[1] for p in pts)
    cuts = [Fraction(0)] + tys + [Fraction(1)]
    z = [b - a for a, b in zip(cuts, cuts[1:])]
    nb = len(combo.blocks)
    law = {}
    for blocks in product(range(nb), repeat=m):
        wb = Fraction(1)
        for b in blocks:
            wb *= combo.blocks[b][0]
        if wb == 0:
            continue
        for cells in product(range(k + 1), repeat=m):
            wc = Fraction(1)
            for c in cells:
                wc *= z[c]
            if wc == 0:
                continue
            denom = 1
            for c in range(k + 1):
                denom *= factorial(cells.count(c))
            for order in permutations(range(m)):
                if any(cells[order[i]] > cells[order[i + 1]] for i in range(m - 1)):
                    continue
                # global y ranks: walk cells, tags sit between them
                yrank = {}
                r = 0
                for c in range(k + 1):
                    for i in order:
                        if cells[i] == c:
                            r += 1
                            yrank[("f", i)] = r
                    if c < k:
                        r += 1
                        yrank[("t", tys[c])] = r
                items = [(("f", i), blocks[i]) for i in range(m)]
                items += [(("t", p[1]), p[2] - 1) for p in pts]

                def xkey(it):
                    key, b = it
                    yr = yrank[key]
                    return (b, yr if combo.blocks[b][1] == "I" else -yr)

                seq = sorted(items, key=xkey)
                perm = tuple(yrank[key] for key, _ in seq)
                labs = tuple(i for i, (key, _) in enumerate(seq, 1) if key[0] == "t")
                f = Flag(perm, labs)
                law[f] = law.get(f, 0) + wb * wc / denom
    return law


def random_id_combo(rng: random.Random, blocks=3):
    raw = [rng.randint(1, 6) for _ in range(blocks)]
    tot = sum(raw)
    return IduCombination(tuple((Fraction(r, tot), rng.choice("ID")) for r in raw))


def random_tags(rng: random.Random, combo: IduCombination, tau):
    """Tags whose y-order (sorted by x) realizes tau."""
    while True:
        S = [(rng.randint(1, len(combo.blocks)), Fraction(rng.randint(1, 29), 30)) for _ in tau]
        try:
            pts = tag_points(combo, S)
        except InconsistentTag:
            continue
        if standardize([p[1] for p in pts]) == tau:
            return S


# ---------------------------------------------------------------- shuffles


def test_y_shuffles_worked_example():
    assert len(y_shuffles(F("1 3 [2] 5 [4]"), F("1 [2] [3]"))) == 2


def test_y_shuffles_trivial():
    t = F("[2] [1] [3]")
    assert y_shuffles(t, t) == [((2, 1, 3), (2, 1, 3))]
    assert len(y_shuffles(F("1"), F("1"))) == 2


def test_y_shuffles_type_mismatch():
    with pytest.raises(TypeMismatch):
        y_shuffles(F("1 [2]"), F("[1] [2]"))


def test_y_shuffles_brute_force():
    f1, f2 = F("2 [1] 3"), F("[1] 3 2")
    n = f1.size + f2.size - 1
    brute = set()
    # X, Y subsequences of [n] realizing f1, f2 with common values exactly at the labels
    for xs in combinations(range(1, n + 1), f1.size):
        for ys in combinations(range(1, n + 1), f2.size):
            if len(set(xs) | set(ys)) != n:
                continue
            X = tuple(xs[v - 1] for v in f1.perm)
            Y = tuple(ys[v - 1] for v in f2.perm)
            cx = [X[j - 1] for j in f1.labels]
            cy = [Y[j - 1] for j in f2.labels]
            if cx == cy and set(xs) & set(ys) == set(cx):
                brute.add((X, Y))
    assert set(y_shuffles(f1, f2)) == brute


def test_x_shuffles_worked_example():
    got = x_shuffles((2, 4, 3, 6, 5), (1, 3, 5))
    assert sorted(map(str, got)) == sorted(
        ["1 2 4 [3] 6 [5]", "2 1 4 [3] 6 [5]", "2 4 1 [3] 6 [5]"]
    )


def test_x_shuffles_trivial():
    assert len(x_shuffles((2, 1, 3), (2, 1, 3))) == 1
    assert sorted(str(f) for f in x_shuffles((1,), (2,))) == ["1 2", "2 1"]


def test_x_shuffles_inconsistent():
    with pytest.raises(InconsistentCommonOrder):
        x_shuffles((1, 2, 3), (2, 1))


# ---------------------------------------------------------------- products


def test_unit():
    f = F("2 [1] 4 3")
    unit = F("[1]")
    assert product_mod_N(f, unit) == flag_sum(f)


def test_single_points_product():
    # coefficient c = M(1)M(1)/M(2) = 1, matching the random-split definition
    got = product_mod_N(F("1"), F("1"))
    assert got == TypedSum(EMPTY, [(F("1 2"), 1), (F("2 1"), 1)])
    assert as_typed(EMPTY, star_product(F("1"), F("1"))) == got


def test_uu_dd_product_terms():
    prod = product_mod_N(F("1 [2] 3"), F("3 [2] 1"))
    # both inputs have partv (1, 1), so every term is a 5-point flag with partv (2, 2)
    assert all(partv(f) == (2, 2) for f, _ in prod.items())
    sq = flag_sum(F("1 [2] 3")) - flag_sum(F("3 [2] 1"))
    sq = sq * sq
    want = {"dddd": 1, "dddu": 1, "dudu": -2, "duud": -1, "duuu": 1,
            "uddd": 1, "uddu": -1, "udud": -2, "uuud": 1, "uuuu": 1}
    assert {sign_str(k[0]): c for k, c in sq.coefficients().items()} == {
        s: Fraction(2, 3) * c for s, c in want.items()
    }
    assert all(k[1:] == ((3,), (2, 2)) for k in sq.coefficients())


SMALL_TYPE1 = [f for n in (1, 2, 3) for f in flags_of_type((1,), n)]


@pytest.mark.parametrize("f1", SMALL_TYPE1, ids=str)
def test_product_matches_star_definition(f1):
    for f2 in SMALL_TYPE1:
        assert product_mod_N(f1, f2) == as_typed((1,), star_product(f1, f2))


def test_product_matches_star_type_empty_and_12():
    for tau, sizes in (((), (1, 2, 3)), ((1, 2), (2, 3))):
        fl = [f for n in sizes for f in flags_of_type(tau, n)]
        for f1 in fl:
            for f2 in fl:
                assert product_mod_N(f1, f2) == as_typed(tau, star_product(f1, f2)), (f1, f2)


def test_partv_additivity():
    for f1 in SMALL_TYPE1:
        for f2 in SMALL_TYPE1:
            want = tuple(a + b for a, b in zip(partv(f1), partv(f2)))
            assert all(partv(f) == want for f, _ in product_mod_N(f1, f2).items())


def test_ideal_property_type1():
    # key-equivalent flags multiply to equal typed sums against any third flag
    for a in SMALL_TYPE1:
        for b in SMALL_TYPE1:
            if a == b or quotient_key(a) != quotient_key(b):
                continue
            for c in SMALL_TYPE1:
                assert product_mod_N(a, c) == product_mod_N(b, c)


# ---------------------------------------------------------------- averaging and constants


def test_average_examples():
    assert average(flag_sum(F("1 [2] 3"))) == TypedSum(EMPTY, [(F("1 2 3"), Fraction(1, 3))])
    assert average(TypedSum((1,))) == TypedSum(EMPTY)


def test_sos_identity():
    lhs = sos_square()
    rhs = lift(from_signatures({"uu": Fraction(1, 5), "dd": Fraction(1, 5)}), 5) - express_constant(
        Fraction(1, 15), 5
    )
    assert lhs == rhs
    assert uu_dd_lower_bound() == Fraction(1, 3)


def test_express_constant():
    assert express_constant(1, 2).by_signature() == {"u": 1, "d": 1}
    assert express_constant(0, 4) == TypedSum(EMPTY)
    by_sig = express_constant(1, 4).by_signature()
    # one representative per signature, weight = class size
    lifted = TypedSum(EMPTY)
    for p in enumerate_perms(4):
        lifted.add(Flag(p, ()), 1)
    assert sorted(lifted.coefficients().values()) == sorted(by_sig.values())
    assert sorted(by_sig.values()) == sorted(sign_class_sizes(4))
    assert list(sign_class_sizes(4)) == [1, 3, 5, 3, 3, 5, 3, 1]


def test_signature_class():
    assert signature_class("ud") == F("1 3 2")
    assert signature_class("") == F("1")


# ---------------------------------------------------------------- tagged densities


@given(rational_combos(max_blocks=3, kinds="ID"), st.sampled_from(list(enumerate_perms(3)) + list(enumerate_perms(4))))
def test_tagged_type_empty_is_transposed_density(combo, p):
    f = Flag(p, ())
    got = density_in_tagged_combo(f, combo, [])
    assert got == k_poly(p, combo) == density(inverse(p), combo)


def test_tagged_single_block():
    C = IduCombination.parse("1 I")
    S = [(1, Fraction(1, 3))]
    # identity with label at position 2: one fresh point below, one above
    assert density_in_tagged_combo(F("1 [2] 3"), C, S) == 2 * Fraction(1, 3) * Fraction(2, 3)
    assert density_in_tagged_combo(F("2 [1] 3"), C, S) == 0
    assert density_in_tagged_combo(F("[1] 2 3"), C, S) == Fraction(2, 3) ** 2


def test_tagged_law_sums_to_one():
    rng = random.Random(7)
    for _ in range(5):
        C = random_id_combo(rng)
        S = random_tags(rng, C, (1,))
        tot = sum(density_in_tagged_combo(f, C, S) for f in flags_of_type((1,), 3))
        assert tot == 1


@pytest.mark.parametrize("tau,n", [((1,), 3), ((1,), 4), ((1, 2), 4), ((2, 1), 4), ((2, 1, 3), 5)])
def test_tagged_matches_enumeration_oracle(tau, n):
    rng = random.Random(hash((tau, n)) & 0xFFFF)
    for _ in range(3):
        C = random_id_combo(rng)
        S = random_tags(rng, C, tau)
        law = tagged_law(C, S, n)
        assert sum(law.values()) == 1
        for f in flags_of_type(tau, n):
            assert density_in_tagged_combo(f, C, S) == law.get(f, 0), (str(f), C, S)


def test_tagged_errors():
    C = IduCombination.parse("1/2 I + 1/2 D")
    with pytest.raises(InconsistentTag):
        density_in_tagged_combo(F("1 [2] 3"), C, [])
    with pytest.raises(InconsistentTag):
        density_in_tagged_combo(F("1 [2] 3"), C, [(3, Fraction(1, 2))])
    with pytest.raises(InconsistentTag):
        density_in_tagged_combo(F("1 [2] 3"), IduCombination.parse("1 U"), [(1, Fraction(1, 2))])
    with pytest.raises(InconsistentTag):
        density_in_tagged_combo(F("[1] 2 [3]"), C, [(1, Fraction(1, 2)), (1, Fraction(1, 2))])


def typed_density(ts: TypedSum, C, S) -> Fraction:
    return sum(c * density_in_tagged_combo(f, C, S) for f, c in ts.items())


def test_homomorphism_on_tagged_combos():
    rng = random.Random(2024)
    cases = [((1,), 3), ((1,), 2), ((2, 1), 3), ((), 2)]
    for tau, maxn in cases:
        pool = [f for n in range(max(1, len(tau)), maxn + 1) for f in flags_of_type(tau, n)]
        for _ in range(40):
            f1, f2 = rng.choice(pool), rng.choice(pool)
            if f1.size + f2.size - len(tau) > 5:
                continue
            C = random_id_combo(rng)
            S = random_tags(rng, C, tau)
            d1 = density_in_tagged_combo(f1, C, S)
            d2 = density_in_tagged_combo(f2, C, S)
            assert typed_density(product_mod_N(f1, f2), C, S) == d1 * d2
            # the plain definition agrees as well, independently of the quotient
            star = star_product(f1, f2)
            assert sum(c * density_in_tagged_combo(f, C, S) for f, c in star.items()) == d1 * d2


def test_uu_dd_nonnegative_on_random_combos():
    rng = random.Random(99)
    uu, dd = F("1 2 3").perm, F("3 2 1").perm
    for _ in range(1000):
        C = random_id_combo(rng, blocks=rng.randint(1, 5))
        assert density(uu, C) + density(dd, C) - Fraction(1, 3) >= 0
