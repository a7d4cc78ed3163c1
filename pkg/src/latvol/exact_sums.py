"""Exact integer and rational sum kernels.

Everything in this module is exact: Python's arbitrary-precision integers
and ``fractions.Fraction``.  The central object is the Euclidean-like
recurrence for

    S(a, b) = sum_{i=0}^{b-1} (i/b) * ((a*i) mod b),

which rewrites the pair (a, b) as (b mod a, a) at each step and therefore
terminates in O(log(a + b)) steps.  The closed-form head term of each step
grows like a^2 * b, so fixed-width integers are not an option at realistic
sizes; exact rationals also remove any float drift from the chain of
reductions that consumes these sums.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import NamedTuple

__all__ = [
    "BezoutTriple",
    "extended_gcd",
    "sum_powers",
    "sum_ai_mod_b",
    "sum_ai_mod_b_bruteforce",
    "s_ab",
    "s_ab_bruteforce",
    "s_ab_reduction_steps",
]


class BezoutTriple(NamedTuple):
    """gcd ``g`` together with coefficients satisfying ``a*c + b*d == g``."""

    g: int
    c: int
    d: int


def extended_gcd(a: int, b: int) -> BezoutTriple:
    """Extended Euclid: (g, c, d) with a*c + b*d == g == gcd(|a|, |b|).

    gcd(0, 0) is 0 with c = d = 0.  When b != 0 the coefficient c is
    normalized into [0, |b|/g), which keeps |c| < |b| and |d| <= |a| + 1;
    small coefficients keep the unimodular maps built from them small.
    """
    if a == 0 and b == 0:
        return BezoutTriple(0, 0, 0)
    old_r, r = a, b
    old_c, c = 1, 0
    old_d, d = 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_c, c = c, old_c - q * c
        old_d, d = d, old_d - q * d
    g, c, d = old_r, old_c, old_d
    if g < 0:
        g, c, d = -g, -c, -d
    if b != 0:
        # Solutions form the family (c - k*(b/g), d + k*(a/g)).
        m = abs(b) // g
        c_norm = c % m
        k = (c - c_norm) // (b // g)
        c = c_norm
        d = d + k * (a // g)
    return BezoutTriple(g, c, d)


def sum_powers(n: int, p: int) -> Fraction:
    """sum_{i=0}^{n-1} i**p in closed form, for p in {1, 2}."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if p == 1:
        return Fraction(n * (n - 1), 2)
    if p == 2:
        return Fraction(n * (n - 1) * (2 * n - 1), 6)
    raise ValueError("only p in {1, 2} supported")


def sum_ai_mod_b(a: int, b: int, p: int) -> Fraction:
    """sum_{i=0}^{b-1} ((a*i) mod b)**p in closed form.

    The residues (a*i mod b), i = 0..b-1, are the multiples of g = gcd(a, b)
    below b, each occurring g times, so the sum collapses to a standard
    power sum: b(b-g)/2 for p = 1 and b(b-g)(2b-g)/6 for p = 2.
    """
    if b < 1:
        raise ValueError("b must be >= 1")
    g = math.gcd(a, b)
    if p == 1:
        return Fraction(b * (b - g), 2)
    if p == 2:
        return Fraction(b * (b - g) * (2 * b - g), 6)
    raise ValueError("only p in {1, 2} supported")


def sum_ai_mod_b_bruteforce(a: int, b: int, p: int) -> Fraction:
    """Literal evaluation of sum_{i=0}^{b-1} ((a*i) mod b)**p."""
    return Fraction(sum(((a * i) % b) ** p for i in range(b)))


def s_ab(a: int, b: int) -> Fraction:
    """S(a, b) = sum_{i=0}^{b-1} (i/b) * ((a*i) mod b), exactly.

    Each reduction step applies

        S(a, b) = (3a^2 b + 3ab^2 + a^2 - 3ab + b^2 - 6abg + g^2) / (12a)
                  - (b/a) * S(b mod a, a),

    with g = gcd(a, b) (invariant along the chain).  S(0, b) = S(a, 0) = 0.
    """
    if a < 0 or b < 0:
        raise ValueError("a and b must be nonnegative")
    if a == 0 or b == 0:
        return Fraction(0)
    g = math.gcd(a, b)
    total = Fraction(0)
    mult = Fraction(1)
    while a != 0:
        head = Fraction(
            3 * a * a * b + 3 * a * b * b + a * a - 3 * a * b + b * b
            - 6 * a * b * g + g * g,
            12 * a,
        )
        total += mult * head
        mult *= Fraction(-b, a)
        a, b = b % a, a
    return total


def s_ab_bruteforce(a: int, b: int) -> Fraction:
    """Literal evaluation of S(a, b); integer sum over common denominator b."""
    if a == 0 or b == 0:
        return Fraction(0)
    return Fraction(sum(i * ((a * i) % b) for i in range(b)), b)


def s_ab_reduction_steps(a: int, b: int) -> int:
    """Number of reduction steps s_ab performs for the pair (a, b)."""
    if a == 0 or b == 0:
        return 0
    steps = 0
    while a != 0:
        steps += 1
        a, b = b % a, a
    return steps
