import json
import random
from fractions import Fraction

import pytest

from ordercsp import classify
from ordercsp.classify import (
    COLUMNS,
    census,
    comparable,
    export,
    load,
    sampled_sweep,
    summarize,
    sweep,
)
from ordercsp.errors import ArityUnsupported, OrderCspError
from ordercsp.optimize import SearchConfig
from ordercsp.predicate import (
    Predicate,
    canonical_form,
    is_nontrivial_relaxation,
    is_not_first,
    is_not_last,
    is_precedence,
    is_tractable,
    relaxation,
)

TINY = SearchConfig(restarts=4, max_iter=400, polish_rounds=1, max_blocks=4)


@pytest.fixture(scope="module")
def rows3():
    return census(3)


@pytest.fixture(scope="module")
def census4():
    return census(4, with_summary=True)


def orbit_oracle(k):
    """Classes by applying canonical_form (direct group action) to every non-constant mask."""
    from math import factorial

    out = {}
    for m in range(1, (1 << factorial(k)) - 1):
        c, size = canonical_form(Predicate(k, m))
        out[c.sat] = size
    return out


@pytest.mark.parametrize("k", [2, 3])
def test_census_matches_orbit_oracle(k):
    rows = census(k)
    assert {r.canon: r.orbit_size for r in rows} == orbit_oracle(k)


def test_census_k2():
    (row,) = census(2)
    assert row.tractable and row.precedence and row.sat_size == 1


def test_census_k3_counts(rows3):
    s = summarize(rows3)
    assert (s.classes, s.tractable, s.precedence, s.nontrivial_LR) == (11, 4, 3, 3)
    assert s.orbit_total == 2**6 - 2


def test_census_k3_flags_match_predicate_module(rows3):
    for r in rows3:
        phi = r.predicate
        assert r.tractable == is_tractable(phi)
        assert r.precedence == is_precedence(phi)
        for kind in ("L", "R", "eps"):
            assert getattr(r, f"nontrivial_{kind}") == is_nontrivial_relaxation(phi, relaxation(phi, kind))
        assert r.alpha_random == Fraction(r.sat_size, 6)


def test_census_k4_counts(census4):
    _, s = census4
    assert (s.classes, s.tractable, s.precedence, s.nontrivial_LR, s.nontrivial_eps) == (
        355_046, 29, 11, 39_299, 993,
    )
    assert s.orbit_total == 2**24 - 2


def test_census_k4_sampled_rows(census4):
    rows, _ = census4
    canon = {r.canon for r in rows}
    rng = random.Random(3)
    for _ in range(300):
        m = rng.randrange(1, (1 << 24) - 1)
        assert canonical_form(Predicate(4, m))[0].sat in canon
    for r in rng.sample(rows, 200):
        phi = r.predicate
        assert canonical_form(phi)[0].sat == r.canon
        assert r.tractable == is_tractable(phi)
        assert r.precedence == is_precedence(phi)
        assert r.nontrivial_eps == is_nontrivial_relaxation(phi, relaxation(phi, "eps"))


def test_implications(census4, rows3):
    for r in list(census4[0]) + list(rows3):
        if r.precedence:
            assert r.tractable
        if r.tractable:
            phi = r.predicate
            assert is_not_first(phi) or is_not_last(phi)


def test_deterministic_across_threads_and_backends(rows3):
    key = [comparable(r) for r in rows3]
    assert [comparable(r) for r in census(3, threads=2)] == key
    assert [comparable(r) for r in census(3, backend="python")] == key
    assert [r.canon for r in rows3] == sorted(r.canon for r in rows3)


def test_arity_unsupported():
    for k in (1, 5):
        with pytest.raises(ArityUnsupported):
            census(k)


def test_export_csv(tmp_path, rows3):
    p = tmp_path / "a3.csv"
    export(rows3, "csv", p)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(COLUMNS)
    assert len(lines) == 12
    assert [comparable(r) for r in load(p)] == [comparable(r) for r in rows3]


def test_export_empty(tmp_path):
    p = tmp_path / "e.csv"
    export([], "csv", p)
    assert p.read_text().splitlines() == [",".join(COLUMNS)]
    q = tmp_path / "e.json"
    export([], "json", q)
    assert json.loads(q.read_text()) == []


def test_export_json_round_trip_with_p(tmp_path, rows3):
    rows = [classify.CensusRow(**{**r.__dict__}) for r in rows3]
    rows[0].p_L = Fraction(8, 27)
    p = tmp_path / "a3.json"
    export(rows, "json", p)
    back = load(p)
    assert [comparable(r) for r in back] == [comparable(r) for r in rows]
    assert json.loads(p.read_text())[0]["p_L"] == "8/27"


def test_export_errors(tmp_path, rows3):
    with pytest.raises(OrderCspError):
        export(rows3, "xml", tmp_path / "x")
    with pytest.raises(OrderCspError):
        export(rows3, "csv", tmp_path / "missing" / "x.csv")


def test_sweep_k3_fills_flagged_rows(rows3):
    rows = sweep([classify.CensusRow(**r.__dict__) for r in rows3], TINY)
    for r in rows:
        for kind in ("L", "R", "eps"):
            p = getattr(r, f"p_{kind}")
            assert (p is not None) == getattr(r, f"nontrivial_{kind}")
            if p is not None:
                assert 0 <= p <= 1


def test_sweep_resumes_from_checkpoint(tmp_path, monkeypatch, rows3):
    monkeypatch.setenv("ORDERCSP_CHECKPOINT_DIR", str(tmp_path))
    first = sweep([classify.CensusRow(**r.__dict__) for r in rows3], TINY, checkpoint_every=1)
    state = json.loads((tmp_path / "sweep_arity3.json").read_text())
    assert state["last_canon"] == first[-1].canon_hex

    def boom(*a, **k):
        raise AssertionError("resumed sweep must not recompute")

    monkeypatch.setattr(classify, "best_certified_p", boom)
    second = sweep([classify.CensusRow(**r.__dict__) for r in rows3], TINY)
    assert [comparable(r) for r in second] == [comparable(r) for r in first]


def test_sampled_sweep_deterministic(census4):
    rows, _ = census4
    a = sampled_sweep(rows, 3, seed=11)
    b = sampled_sweep(rows, 3, seed=11)
    assert [(x.row.canon, x.kind, x.p) for x in a] == [(x.row.canon, x.kind, x.p) for x in b]
    assert len(a) == 3
    assert all(x.gain > Fraction(1, 10**4) for x in a)
