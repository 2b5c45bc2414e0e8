"""Tail sums with certified remainders.

Two kinds of slowly or geometrically decaying series show up in the step
laws: ``sum_{j>L} j**beta * M**-j`` and the Hurwitz-type ``sum_{j>=N} j**-s``.
Each routine returns ``(value, bound)`` where ``bound`` is a rigorous upper
bound on the absolute truncation error.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

# B_2, B_4, ..., B_16
_BERNOULLI_EVEN = (
    Fraction(1, 6),
    Fraction(-1, 30),
    Fraction(1, 42),
    Fraction(-1, 30),
    Fraction(5, 66),
    Fraction(-691, 2730),
    Fraction(7, 6),
    Fraction(-3617, 510),
)

# start the Euler-Maclaurin tail only once the argument is this large
_EM_MIN_START = 24
_EM_TERMS = 6


def _rising(x: float, m: int) -> float:
    out = 1.0
    for i in range(m):
        out *= x + i
    return out


def _em_term(s: float, n: float, k: int) -> float:
    # k-th correction B_{2k}/(2k)! * (s)_{2k-1} * n**(-s-2k+1)
    b = float(_BERNOULLI_EVEN[k - 1]) / math.factorial(2 * k)
    return b * _rising(s, 2 * k - 1) * n ** (-s - 2 * k + 1)


def power_tail(s: float, start: int) -> tuple[float, float]:
    """``sum_{j>=start} j**-s`` for ``s > 1``, with an error bound.

    Short head by direct summation, then Euler-Maclaurin with six Bernoulli
    corrections.  ``x**-s`` is completely monotone, so the remainder is bounded
    by the first omitted correction.
    """
    if s <= 1:
        raise ValueError("power tail diverges for s <= 1")
    if start < 1:
        raise ValueError("start must be >= 1")
    head = 0.0
    n = start
    if n < _EM_MIN_START:
        head = math.fsum(j ** (-s) for j in range(n, _EM_MIN_START))
        n = _EM_MIN_START
    nf = float(n)
    parts = [nf ** (1.0 - s) / (s - 1.0), 0.5 * nf ** (-s)]
    parts.extend(_em_term(s, nf, k) for k in range(1, _EM_TERMS + 1))
    bound = abs(_em_term(s, nf, _EM_TERMS + 1))
    return head + math.fsum(parts), bound


def geometric_power_tail(beta: float, order: int, start: int, rtol: float = 1e-17) -> tuple[float, float]:
    """``sum_{j>=start} j**beta * order**-j`` with a ratio-test remainder bound.

    Terms are summed relative to the first one to stay clear of underflow; the
    result is rescaled at the end.  After index ``J`` the term ratio is at most
    ``q = (1 + 1/J)**beta / order < 1``, so the remainder is at most
    ``t_{J+1} / (1 - q)``.
    """
    if start < 1:
        raise ValueError("start must be >= 1")
    log_m = math.log(order)

    def log_term(j: int) -> float:
        return beta * math.log(j) - j * log_m

    log_t0 = log_term(start)
    total = 0.0
    terms = []
    j = start
    while True:
        rel = math.exp(log_term(j) - log_t0)
        terms.append(rel)
        total += rel
        q = (1.0 + 1.0 / j) ** beta / order
        if q < 1.0:
            nxt = math.exp(log_term(j + 1) - log_t0)
            rem = nxt / (1.0 - q)
            if rem <= rtol * total:
                break
        j += 1
        if j - start > 100_000:
            raise RuntimeError("geometric tail failed to converge")
    scale = math.exp(log_t0)
    return math.fsum(terms) * scale, rem * scale


@lru_cache(maxsize=None)
def zeta_normaliser(s: float) -> float:
    """``1 / zeta(s)`` via :func:`power_tail`."""
    value, _ = power_tail(s, 1)
    return 1.0 / value
