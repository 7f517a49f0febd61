from fractions import Fraction

import pytest
from hypothesis import settings, strategies as st

from ordercsp.idu import IduCombination
from ordercsp.perm_core import Perm

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@st.composite
def perms(draw, min_k=1, max_k=6):
    k = draw(st.integers(min_k, max_k))
    return Perm(draw(st.permutations(range(1, k + 1))))


@st.composite
def rational_combos(draw, max_blocks=4, kinds="IDU", max_den=12):
    b = draw(st.integers(1, max_blocks))
    raw = draw(st.lists(st.integers(1, max_den), min_size=b, max_size=b))
    ks = draw(st.lists(st.sampled_from(kinds), min_size=b, max_size=b))
    tot = sum(raw)
    return IduCombination(tuple((Fraction(r, tot), kd) for r, kd in zip(raw, ks)))


@pytest.fixture
def half_ID():
    return IduCombination.parse("1/2 I + 1/2 D")
