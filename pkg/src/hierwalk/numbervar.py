"""Mean and variance of the ball count ``N_n(L)`` of the infinite particle system.

One independent walker starts from every site.  With ``P_n(k) = P(|xi_n| = k)``

    Var N_n(L) = M^L P(|xi_n| <= L) P(|xi_n| > L)                      (part I)
               + M^L sum_{k>=1} P_n(L+k) (1 - P_n(L+k) / ((M-1) M^(k-1)))  (part II)

Part II is evaluated as ``M^L (P(|xi_n| > L) - sum_k P_n(L+k)^2 / ((M-1) M^(k-1)))``;
the remaining series decays geometrically even for heavy-tailed steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .radial import radial_pmf_range, radial_tail
from .stepdist import CRW, JBeta, PowerLaw, StepLaw

EXACT_INT_LIMIT = 2**53


@dataclass(frozen=True)
class CountMoments:
    n: int
    L: int
    mean: float
    variance: float
    part_I: float
    part_II: float
    truncation_error: float
    exact_mean: bool = True

    @property
    def var_rel(self) -> float:
        """``Var / M^L``, bounded by 2."""
        return self.variance / self.mean


def expected_count(order: int, L: int) -> tuple[float, bool]:
    """``E N_n(L) = M^L`` (for every n) and whether the double is exact."""
    if L < 0:
        raise ValueError("L must be >= 0")
    value = order**L
    return float(value), value <= EXACT_INT_LIMIT


def shell_square_sum(law: StepLaw, n: int, L: int, rtol: float = 1e-16) -> tuple[float, float]:
    """``sum_{k>=1} P_n(L+k)^2 / ((M-1) M^(k-1))`` and a bound on the dropped terms.

    Term ``k`` is at most ``P(|xi_n| > L)^2 M^(1-k) / (M-1)``.
    """
    M = law.order
    top = radial_tail(law, n, L)
    if top == 0.0:
        return 0.0, 0.0
    terms = int(math.ceil(56 * math.log(2) / math.log(M))) + 2
    while True:
        p = radial_pmf_range(law, n, L + 1, L + terms)
        w = 1.0 / ((M - 1) * float(M) ** np.arange(terms))
        value = math.fsum(p * p * w)
        bound = top * top * float(M) ** (-terms) / (M - 1) * M / (M - 1)
        if bound <= rtol * max(value, 1e-300) or bound < 1e-300:
            return value, bound
        terms *= 2


def variance_exact(law: StepLaw, n: int, L: int) -> CountMoments:
    if n < 0 or L < 0:
        raise ValueError("n and L must be >= 0")
    mean, exact = expected_count(law.order, L)
    if n == 0:
        return CountMoments(n, L, mean, 0.0, 0.0, 0.0, 0.0, exact)
    above = radial_tail(law, n, L)
    below = 1.0 - above
    sq, err = shell_square_sum(law, n, L)
    part_I = mean * below * above
    part_II = mean * (above - sq)
    return CountMoments(n, L, mean, part_I + part_II, part_I, part_II, mean * err, exact)


def variance_bounds(law: StepLaw, n: int, L: int) -> tuple[float, float]:
    """``(1-h)^{2n-1} n h M^L <= Var N_n(L) <= 2 M^L``."""
    h = float(law.tail(L))
    ml = float(law.order) ** L
    lower = (1.0 - h) ** (2 * n - 1) * n * h * ml if n >= 1 else 0.0
    return lower, 2.0 * ml


def scaled_step_limit(law: StepLaw) -> float | None:
    """Analytic ``lim_{L->inf} M^L r_L``; ``None`` when unknown (custom laws)."""
    M = law.order
    if isinstance(law, CRW):
        # M^L r_L = (M - c) c^(L-1)
        if law.c < 1.0:
            return 0.0
        return float(M - 1) if law.c == 1.0 else math.inf
    if isinstance(law, JBeta):
        # M^L r_L = D L^beta
        return law.normaliser if law.beta == 0.0 else math.inf
    if isinstance(law, PowerLaw):
        return math.inf
    return None


def scaled_step(law: StepLaw, L: int) -> float:
    """``M^L r_L`` evaluated in log space."""
    r = float(law.prob(L))
    if r == 0.0:
        return 0.0
    return math.exp(L * math.log(law.order) + math.log(r))


def variance_limit(law: StepLaw, n: int) -> float | None:
    """``lim_{L->inf} Var N_n(L) = 2n/(M-1) lim M^L r_L``; ``None`` for custom laws."""
    lim = scaled_step_limit(law)
    if lim is None:
        return None
    if n == 0:
        return 0.0
    if math.isinf(lim):
        return math.inf
    return 2.0 * n / (law.order - 1) * lim


def poisson_count_stats(order: int, L: int, lam: float) -> tuple[float, float]:
    """Mean and variance of ``N_n(L)`` for i.i.d. Poisson(``lam``) initial occupation.

    Both equal ``lam * M^L`` whatever the step law and ``n``.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    v = lam * float(order) ** L
    return v, v


def variance_scan(law: StepLaw, n: int, radii) -> list[dict[str, float]]:
    """Rows ``L, mean, var_rel, var_abs, part_I, part_II, limit`` for a CSV table."""
    lim = variance_limit(law, n)
    rows = []
    for L in radii:
        cm = variance_exact(law, n, int(L))
        rows.append(
            {
                "L": int(L),
                "mean": cm.mean,
                "var_rel": cm.var_rel,
                "var_abs": cm.variance,
                "part_I": cm.part_I,
                "part_II": cm.part_II,
                "limit": math.nan if lim is None else lim,
            }
        )
    return rows
