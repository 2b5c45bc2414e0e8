"""Exact law of the distance ``|xi_n|`` of an n-step hierarchical walk.

Two independent routes:

* the eigenvalue series
  ``P(|xi_n| = k) = (M-1)/M * sum_{j>=0} (f_{j+k+1}^n - f_{j+k}^n) / M^j``
  and its tail ``P(|xi_n| > L) = (M-1)/M * sum_{j>=0} (1 - f_{L+j+1}^n) / M^j``;
* a dynamic-programming oracle that pushes a point mass through the
  one-step radial kernel, which only uses ``r_j`` and ultrametric counting.

Powers are always handled through ``D_i = 1 - f_i^n`` (see :func:`one_minus_fpow`)
so that radii with ``f_i`` within rounding of 1 keep full relative accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .stepdist import StepLaw

SERIES_RTOL = 1e-16
_MAX_TERMS = 4000


class SeriesTruncationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RadialLaw:
    """``pmf[k] = P(|xi_n| = k)`` for ``k = 0..K`` and ``tail = P(|xi_n| > K)``.

    ``error_bound`` bounds the absolute error of every entry of ``pmf``.
    """

    law: StepLaw
    n: int
    pmf: np.ndarray
    tail: float
    error_bound: float

    @property
    def kmax(self) -> int:
        return len(self.pmf) - 1

    def cdf(self, L: int) -> float:
        return float(math.fsum(self.pmf[: L + 1]))


def one_minus_fpow(law: StepLaw, idx, n: int) -> np.ndarray:
    """``1 - f_i**n`` for each index ``i >= 1`` in ``idx``."""
    idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
    if n == 0:
        return np.zeros(idx.shape)
    x = np.asarray(law.one_minus_f(idx), dtype=float)
    out = np.empty_like(x)
    pos = x < 1.0  # f in (0, 1]
    out[pos] = -np.expm1(n * np.log1p(-x[pos]))
    neg = ~pos  # f <= 0; |f| <= 1 so plain powers are safe
    f = 1.0 - x[neg]
    out[neg] = 1.0 - f**n
    return out


def _remainder_bound(law: StepLaw, n: int, last_radius: int, terms: int) -> float:
    # for i > last_radius: 0 <= 1 - f_i^n <= min(2, n*x_i) and x_i <= M/(M-1) h(i-1)
    m = law.order
    b = min(2.0, n * m / (m - 1) * float(law.tail(last_radius)))
    return b * float(m) ** (-terms)


def _initial_terms(order: int) -> int:
    return int(math.ceil(56 * math.log(2) / math.log(order))) + 2


def radial_tail(law: StepLaw, n: int, L: int, rtol: float = SERIES_RTOL) -> float:
    """``P(|xi_n| > L)``."""
    if L < 0:
        raise ValueError("L must be >= 0")
    if n == 0:
        return 0.0
    m = law.order
    terms = _initial_terms(m)
    while True:
        d = one_minus_fpow(law, np.arange(L + 1, L + 1 + terms), n)
        w = float(m) ** -np.arange(terms)
        value = (m - 1) / m * math.fsum(d * w)
        bound = _remainder_bound(law, n, L + terms, terms)
        if bound <= rtol * value or bound < 1e-300:
            return value
        terms *= 2
        if terms > _MAX_TERMS:
            raise SeriesTruncationError(f"tail series did not converge at L={L}, n={n}")


def radial_cdf(law: StepLaw, n: int, L: int) -> float:
    """``P(|xi_n| <= L)``."""
    return 1.0 - radial_tail(law, n, L)


def radial_pmf_range(law: StepLaw, n: int, k0: int, k1: int, rtol: float = SERIES_RTOL) -> np.ndarray:
    """``P(|xi_n| = k)`` for ``k0 <= k <= k1`` (``k0 >= 1``) by the eigenvalue series."""
    if k0 < 1 or k1 < k0:
        raise ValueError("need 1 <= k0 <= k1")
    count = k1 - k0 + 1
    if n == 0:
        return np.zeros(count)
    m = law.order
    terms = _initial_terms(m)
    while True:
        d = one_minus_fpow(law, np.arange(k0, k1 + terms + 2), n)
        diff = d[:-1] - d[1:]  # diff[i] = f_{k0+i+1}^n - f_{k0+i}^n
        acc = np.zeros(count)
        for j in range(terms):
            acc += diff[j : j + count] * float(m) ** (-j)
        pmf = (m - 1) / m * acc
        ks = np.arange(k0, k1 + 1)
        bounds = np.array([_remainder_bound(law, n, int(k) + terms - 1, terms) for k in ks])
        ok = (bounds <= rtol * np.abs(pmf)) | (bounds < 1e-300)
        if ok.all():
            return np.maximum(pmf, 0.0)
        terms *= 2
        if terms > _MAX_TERMS:
            raise SeriesTruncationError(f"pmf series did not converge for k in [{k0}, {k1}], n={n}")


def radial_pmf(law: StepLaw, n: int, K: int) -> RadialLaw:
    """Closed-form radial law on ``0..K``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if K < 1:
        raise ValueError("K must be >= 1")
    pmf = np.zeros(K + 1)
    if n == 0:
        pmf[0] = 1.0
        return RadialLaw(law, 0, pmf, 0.0, 0.0)
    pmf[1:] = radial_pmf_range(law, n, 1, K)
    # the series is stated for k >= 1; radius 0 by complement
    pmf[0] = 1.0 - radial_tail(law, n, 0)
    tail_k = radial_tail(law, n, K)
    return RadialLaw(law, n, pmf, tail_k, 1e-15)


# -- radial kernel and DP oracle -------------------------------------------


def radius_transition(order: int, i: int, j: int, exact: bool = False) -> dict[int, float | Fraction]:
    """Law of ``|x + rho|`` for ``|x| = i`` and ``rho`` uniform on the sphere of radius ``j``.

    Only the case ``j == i`` is non-trivial: the top digit cancels with
    probability ``1/(M-1)`` and the lower ``i-1`` digits become uniform.
    """
    one = Fraction(1) if exact else 1.0
    M = order
    if i < 0 or j < 1:
        raise ValueError("need i >= 0 and j >= 1")
    if i != j:
        return {max(i, j): one}
    out: dict[int, float | Fraction] = {}
    out[0] = one / ((M - 1) * M ** (i - 1))
    for m in range(1, i):
        out[m] = one * M**m / M**i
    if M > 2:
        out[i] = one * (M - 2) / (M - 1)
    return out


@dataclass(frozen=True)
class KernelRow:
    """One-step law of the next radius from radius ``i``; mass above ``cutoff`` is lumped in ``beyond``."""

    i: int
    probs: np.ndarray
    beyond: float


def step_radius_kernel(law: StepLaw, i: int, cutoff: int | None = None) -> KernelRow:
    if i < 0:
        raise ValueError("radius must be >= 0")
    cutoff = max(i, cutoff if cutoff is not None else i + 60)
    probs = np.zeros(cutoff + 1)
    r = law.prob(np.arange(1, cutoff + 1))
    for j in range(1, cutoff + 1):
        for rad, p in radius_transition(law.order, i, j).items():
            probs[rad] += r[j - 1] * p
    return KernelRow(i, probs, float(law.tail(cutoff)))


def _kernel_matrix(law: StepLaw, cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """Sub-stochastic transition matrix on radii ``0..cutoff`` and the escape vector."""
    M = law.order
    size = cutoff + 1
    r = np.concatenate([[0.0], law.prob(np.arange(1, size))])
    escape = float(law.tail(cutoff))
    T = np.zeros((size, size))
    T[0, 1:] = r[1:]
    below = np.concatenate([[0.0], np.cumsum(r[1:-1])])  # P(j < i) for i = 1..cutoff
    for i in range(1, size):
        T[i, i] += below[i - 1] if i >= 1 else 0.0
        T[i, i + 1 :] += r[i + 1 :]
        ri = r[i]
        T[i, 0] += ri / ((M - 1) * float(M) ** (i - 1))
        if i > 1:
            T[i, 1:i] += ri * float(M) ** (np.arange(1, i) - i)
        T[i, i] += ri * (M - 2) / (M - 1)
    return T, np.full(size, escape)


def dp_cutoff(order: int, K: int, tol: float = 1e-14) -> int:
    """Cutoff radius whose neglected return mass into ``B_K`` is below ``tol``."""
    extra = int(math.ceil(math.log(1.0 / (tol * (order - 1))) / math.log(order)))
    return K + max(extra, 1)


def radial_pmf_oracle(law: StepLaw, n: int, K: int, tol: float = 1e-14) -> RadialLaw:
    """Radial law on ``0..K`` by iterating the one-step radial kernel.

    Radii above the cutoff are absorbing.  A walk that has been beyond radius
    ``Kc`` sits at some ``u`` with ``|u| > Kc`` and then lands in ``B_K`` with
    probability at most ``M**(K - Kc) / (M - 1)``, which bounds the error.
    """
    if n < 0 or K < 1:
        raise ValueError("need n >= 0 and K >= 1")
    cutoff = dp_cutoff(law.order, K, tol)
    T, escape = _kernel_matrix(law, cutoff)
    v = np.zeros(cutoff + 1)
    v[0] = 1.0
    far = 0.0
    for _ in range(n):
        far += float(v @ escape)
        v = v @ T
    bound = float(law.order) ** (K - cutoff) / (law.order - 1)
    tail_k = float(math.fsum(v[K + 1 :])) + far
    return RadialLaw(law, n, v[: K + 1].copy(), tail_k, bound)


# -- entry probabilities and sandwich bounds --------------------------------


def entry_prob(law: StepLaw, n: int, start_radius: int, L: int) -> float:
    """``P(u + xi_n in B_L)`` for a start point with ``|u| = start_radius``."""
    if start_radius < 0 or L < 0:
        raise ValueError("radii must be >= 0")
    if start_radius <= L:
        return 1.0 - radial_tail(law, n, L) if n else 1.0
    if n == 0:
        return 0.0
    k = start_radius - L
    p = radial_pmf_range(law, n, start_radius, start_radius)[0]
    return p / ((law.order - 1) * float(law.order) ** (k - 1))


def tail_bounds(law: StepLaw, n: int, L: int) -> tuple[float, float]:
    """Lower ``n (1-h)^{n-1} h`` and upper ``sum_{k<=n} (1-h)^{k-1} h`` for ``P(|xi_n| > L)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    h = float(law.tail(L))
    if h >= 1.0:
        return (1.0 if n == 1 else 0.0), 1.0
    lp = math.log1p(-h)
    lower = n * h * math.exp((n - 1) * lp)
    upper = -math.expm1(n * lp)
    return lower, upper
