import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latvol.exact_sums import (
    extended_gcd,
    s_ab,
    s_ab_bruteforce,
    s_ab_reduction_steps,
    sum_ai_mod_b,
    sum_ai_mod_b_bruteforce,
    sum_powers,
)

ints = st.integers(min_value=-(10**9), max_value=10**9)


@given(ints, ints)
@settings(max_examples=300, deadline=None)
def test_extended_gcd_identity(a, b):
    g, c, d = extended_gcd(a, b)
    assert a * c + b * d == g
    assert g == math.gcd(a, b)
    assert g >= 0


@given(ints, ints)
@settings(max_examples=300, deadline=None)
def test_extended_gcd_coefficients_small(a, b):
    g, c, d = extended_gcd(a, b)
    if b != 0:
        assert 0 <= c < max(1, abs(b) // g)
    assert abs(d) <= abs(a) + 1


def test_extended_gcd_examples():
    assert extended_gcd(6, 4).g == 2
    g, c, d = extended_gcd(6, 4)
    assert 6 * c + 4 * d == 2
    assert extended_gcd(1, 0) == (1, 1, 0)
    assert extended_gcd(0, 0) == (0, 0, 0)
    g, c, d = extended_gcd(240, 46)
    assert g == 2 and 240 * c + 46 * d == 2


def test_sum_powers_examples():
    assert sum_powers(4, 1) == 6
    assert sum_powers(4, 2) == 14
    assert sum_powers(0, 1) == 0


def test_sum_powers_bruteforce():
    for n in range(50):
        assert sum_powers(n, 1) == sum(range(n))
        assert sum_powers(n, 2) == sum(i * i for i in range(n))


def test_sum_ai_mod_b_examples():
    assert sum_ai_mod_b(2, 4, 1) == 4
    assert sum_ai_mod_b(1, 3, 2) == 5
    assert sum_ai_mod_b(0, 5, 1) == 0


def test_sum_ai_mod_b_closed_forms_match_bruteforce():
    for a in range(0, 51):
        for b in range(1, 51):
            for p in (1, 2):
                assert sum_ai_mod_b(a, b, p) == sum_ai_mod_b_bruteforce(a, b, p)


def test_s_ab_examples():
    assert s_ab(0, 7) == 0
    assert s_ab(2, 4) == 2
    assert s_ab(1, 3) == Fraction(5, 3)
    assert s_ab(5, 0) == 0


def test_s_ab_matches_bruteforce_small():
    for a in range(0, 61):
        for b in range(0, 61):
            assert s_ab(a, b) == s_ab_bruteforce(a, b), (a, b)


@given(st.integers(min_value=0, max_value=400), st.integers(min_value=0, max_value=400))
@settings(max_examples=200, deadline=None)
def test_s_ab_matches_bruteforce_random(a, b):
    assert s_ab(a, b) == s_ab_bruteforce(a, b)


def test_s_ab_reduction_depth_bound():
    for a in range(0, 201):
        for b in range(0, 201):
            if a + b == 0:
                continue
            assert s_ab_reduction_steps(a, b) <= 2 * math.log2(a + b) + 2


def test_s_ab_pure():
    assert s_ab(123, 456) == s_ab(123, 456)


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        sum_powers(3, 3)
    with pytest.raises(ValueError):
        sum_ai_mod_b(1, 0, 1)
    with pytest.raises(ValueError):
        s_ab(-1, 3)
