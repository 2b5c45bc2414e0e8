"""Fluctuations of ball counts at radius ``L(n) + R(t)`` and their Gaussian limits.

The normalised fluctuation process is

    X_n(t) = (N_n(L_t) - M^{L_t}) / sqrt(M^{L(n)}),   L_t = (L(n) + R(t))^+.

Covariances available here:

* :func:`finite_n_cov` -- exact for finite ``n``;
* :func:`limit_cov`    -- ``M^{R(s^t)} g_kappa(s v t)`` when ``a < 1``;
* :func:`limit_cov_critical` -- ``(1 - e^-2) M^{R(s^t)}`` when ``a = 1``;
* :func:`poisson_limit_cov`  -- ``lam M^{R(s^t)}`` for Poisson initial states;
* :func:`y_cov`        -- ``(s^t)^theta / (s v t)``, the rescaled limit.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .radial import radial_pmf_range, radial_tail
from .stepdist import StepLaw, radius_scale

CRITICAL_VARIANCE = 1.0 - math.exp(-2.0)
_EPS = np.finfo(float).eps


class FactorizationError(np.linalg.LinAlgError):
    def __init__(self, smallest: float):
        super().__init__(f"covariance matrix is not PSD: smallest eigenvalue {smallest:.3e}")
        self.smallest = smallest


class ZetaMonotonicityError(ValueError):
    """``M^i / g_kappa(a^-i)`` failed to increase in ``i``."""


# -- time shifts -------------------------------------------------------------


@dataclass(frozen=True)
class TimeShift:
    """Non-decreasing integer shift ``R(t)``.

    ``log_a``: ``R(t) = floor(log_{1/a} t)``; ``log_m``: ``R(t) = floor(log_M t)``.
    Exact powers of the base map to their exponent even when ``t`` carries a
    few ulps of rounding.
    """

    kind: str
    order: int
    base: float = 0.0
    func: Callable[[float], int] | None = field(default=None, compare=False)

    @classmethod
    def log_a(cls, a: float, order: int) -> TimeShift:
        if not 0.0 < a < 1.0:
            raise ValueError("log_a shift needs 0 < a < 1")
        return cls("log_a", order, 1.0 / a)

    @classmethod
    def log_m(cls, order: int) -> TimeShift:
        return cls("log_m", order, float(order))

    @classmethod
    def custom(cls, func: Callable[[float], int], order: int) -> TimeShift:
        return cls("custom", order, 0.0, func)

    @classmethod
    def for_law(cls, law: StepLaw) -> TimeShift:
        a = law.ratio_limit()
        return cls.log_a(a, law.order) if a < 1.0 else cls.log_m(law.order)

    @property
    def a(self) -> float:
        return 1.0 / self.base

    def __call__(self, t: float) -> int:
        if self.func is not None:
            return int(self.func(t))
        if t <= 0:
            raise ValueError("time shift undefined for t <= 0")
        r = math.floor(math.log(t) / math.log(self.base))
        slack = t * (1.0 + 4 * _EPS)
        while self.base ** (r + 1) <= slack:
            r += 1
        while self.base**r > slack:
            r -= 1
        return int(r)


# -- limit profile g_kappa -----------------------------------------------------


def _n_terms(order: int) -> int:
    return int(math.ceil(62 * math.log(2) / math.log(order))) + 2


def _g_parts(order: int, a: float, z: float):
    """Shared pieces of the two algebraic forms, with ``z = kappa * b * a^R``."""
    M = order
    J = _n_terms(M)
    x = z * a ** np.arange(2 * J + 1)
    one_minus_e = -np.expm1(-x)  # 1 - E_j
    e = np.exp(-x)
    w = float(M) ** -np.arange(J)
    # inner_j = sum_k (E_{j+k+1} - E_j) / M^k
    inner = np.array([math.fsum((one_minus_e[j] - one_minus_e[j + 1 : j + 1 + J]) * w) for j in range(J)])
    second = (M - 1) ** 3 / M**4 * math.fsum(w * inner * inner)
    return J, w, one_minus_e[:J], e[:J], second


def g_tilde(law: StepLaw, kappa: float, r: float) -> float:
    """Limit profile with ``a^{R(t)}`` replaced by a free ``r > 0``.

    Uses the grouping ``P (1 + Q) - ...`` with ``P = 1 - Q``, which keeps full
    relative accuracy as ``r -> 0``.
    """
    p = law.params()
    if p.a >= 1.0:
        raise ValueError("g_kappa is defined for a < 1 only")
    M = law.order
    _, w, one_minus_e, e, second = _g_parts(M, p.a, kappa * p.b * r)
    P = (M - 1) / M * math.fsum(one_minus_e * w)
    Q = (M - 1) / M * math.fsum(e * w)
    return P * (1.0 + Q) - second


def g_kappa(law: StepLaw, kappa: float, R_int: int) -> float:
    """``g_kappa`` at any ``t`` with ``R(t) = R_int``."""
    a = law.ratio_limit()
    if a >= 1.0:
        raise ValueError("g_kappa is defined for a < 1 only")
    return _g_kappa_cached(law, float(kappa), int(R_int))


@functools.lru_cache(maxsize=16384)
def _g_kappa_cached(law: StepLaw, kappa: float, R_int: int) -> float:
    return g_tilde(law, kappa, law.ratio_limit() ** float(R_int))


def g_kappa_direct(law: StepLaw, kappa: float, R_int: int) -> float:
    """Same function in the ``1 - (...)^2 - ...`` arrangement (cross-check only)."""
    p = law.params()
    M = law.order
    _, w, _, e, second = _g_parts(M, p.a, kappa * p.b * p.a ** float(R_int))
    s = math.fsum(e * w)
    return 1.0 - ((M - 1) / M) ** 2 * s * s - second


def g_tilde_scan(law: StepLaw, kappa: float, times: Sequence[float]) -> tuple[np.ndarray, bool]:
    """``g~(1/t)`` along ``times`` and whether it is non-increasing there.

    Monotonicity in ``t`` is open; this only reports what the numbers show.
    """
    vals = np.array([g_tilde(law, kappa, 1.0 / t) for t in times])
    return vals, bool(np.all(np.diff(vals) <= 0))


# -- covariances ---------------------------------------------------------------


def _sorted_pair(s: float, t: float) -> tuple[float, float]:
    if s <= 0 or t <= 0:
        raise ValueError("times must be positive")
    return (s, t) if s <= t else (t, s)


def _bracket_preasymptotic(law: StepLaw, n: int, Lt: int) -> float:
    """``P(<=Lt) P(>Lt) + sum_j P(=Lt+j) (1 - P(=Lt+j) / ((M-1) M^(j-1)))``."""
    M = law.order
    J = _n_terms(M)
    above = radial_tail(law, n, Lt)
    shells = radial_pmf_range(law, n, Lt + 1, Lt + J)
    w = 1.0 / ((M - 1) * float(M) ** np.arange(J))
    rest = radial_tail(law, n, Lt + J)  # remaining shells contribute rest*(1 - O(M^-J))
    return (1.0 - above) * above + math.fsum(shells * (1.0 - shells * w)) + rest


def _bracket_grouped(law: StepLaw, n: int, Lt: int) -> float:
    """``P(>Lt) (1 + P(<=Lt)) - 1/(M-1) sum_j P^2(=Lt+j) / M^(j-1)``."""
    M = law.order
    J = _n_terms(M)
    above = radial_tail(law, n, Lt)
    shells = radial_pmf_range(law, n, Lt + 1, Lt + J)
    w = float(M) ** -np.arange(J)
    return above * (2.0 - above) - math.fsum(shells * shells * w) / (M - 1)


def finite_n_cov(law: StepLaw, n: int, s: float, t: float, R: TimeShift, Ln: int | None = None) -> float:
    """Exact ``Cov(X_n(s), X_n(t))``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    s, t = _sorted_pair(s, t)
    Ln = radius_scale(law, n) if Ln is None else Ln
    Ls = max(Ln + R(s), 0)
    Lt = max(Ln + R(t), 0)
    return float(law.order) ** (Ls - Ln) * _bracket_preasymptotic(law, n, Lt)


def finite_n_cov_grouped(law: StepLaw, n: int, s: float, t: float, R: TimeShift) -> float:
    """Grouped form ``M^{R(s)} [...]``; valid only while ``L(n) + R(s) >= 0``."""
    s, t = _sorted_pair(s, t)
    Ln = radius_scale(law, n)
    if Ln + R(s) < 0:
        raise ValueError("grouped form needs L(n) + R(s) >= 0")
    return float(law.order) ** R(s) * _bracket_grouped(law, n, Ln + R(t))


def limit_cov(law: StepLaw, kappa: float, s: float, t: float, R: TimeShift) -> float:
    s, t = _sorted_pair(s, t)
    return float(law.order) ** R(s) * g_kappa(law, kappa, R(t))


def limit_cov_critical(s: float, t: float, R: TimeShift, scale: float = 1.0) -> float:
    s, t = _sorted_pair(s, t)
    return scale * CRITICAL_VARIANCE * float(R.order) ** R(s)


def poisson_limit_cov(lam: float, s: float, t: float, R: TimeShift) -> float:
    """Poisson(``lam``) initial state: ``lam M^{R(s^t)}``, i.e. scale ``lam / (1 - e^-2)``."""
    return limit_cov_critical(s, t, R, scale=lam / CRITICAL_VARIANCE)


def y_cov(theta: float, s: float, t: float) -> float:
    s, t = _sorted_pair(s, t)
    return s**theta / t


def c_kappa(kappa: float) -> float:
    """Constant in front of the rescaled limit: ``sqrt(2 kappa)``."""
    return math.sqrt(2.0 * kappa)


def rescale_diagnostic(law: StepLaw, kappa: float, m: int, s: float, t: float, R: TimeShift | None = None) -> float:
    """``Cov(Y_m(s), Y_m(t))`` with ``Y_m(t) = a^{m(theta-1)/2} X^(kappa)(a^-m t)``."""
    p = law.params()
    R = R or TimeShift.log_a(p.a, law.order)
    s, t = _sorted_pair(s, t)
    # R(a^-m t) = m + R(t) exactly for the log_a shift
    rs, rt = m + R(s), m + R(t)
    log_scale = m * (p.theta - 1.0) * math.log(p.a) + rs * math.log(law.order)
    return math.exp(log_scale) * g_kappa(law, kappa, rt)


def lrd_scan(
    law: StepLaw,
    kappa: float,
    s: float,
    t: float,
    m_range: Sequence[int],
    d: float | None = None,
    R: TimeShift | None = None,
) -> list[tuple[float, float]]:
    """``(tau_m, tau_m |E (X(t)-X(s)) (X(t+tau)-X(s+tau))|)`` with ``tau_m = a^-m - d``."""
    if not 0 < s < t:
        raise ValueError("need 0 < s < t")
    a = law.ratio_limit()
    R = R or TimeShift.log_a(a, law.order)
    d = (s + t) / 2.0 if d is None else d
    if not s < d <= t:
        raise ValueError("d must lie in (s, t]")
    M = float(law.order)
    jump = M ** R(t) - M ** R(s)
    out = []
    for m in m_range:
        tau = a ** (-float(m)) - d
        dg = g_kappa(law, kappa, R(t + tau)) - g_kappa(law, kappa, R(s + tau))
        out.append((tau, tau * jump * abs(dg)))
    return out


# -- zeta representation -------------------------------------------------------


def _zeta_weights(law: StepLaw, kappa: float, lo: int, hi: int) -> np.ndarray:
    """``G(i) = M^i / g_kappa(a^-i)`` for ``i = lo..hi``."""
    M = float(law.order)
    return np.array([M**i / g_kappa(law, kappa, i) for i in range(lo, hi + 1)])


def _zeta_floor(law: StepLaw, kappa: float, top: int, cut: float = 1e-12) -> int:
    i = top
    while float(law.order) ** i / g_kappa(law, kappa, i) >= cut:
        i -= 1
        if i < -5000:
            raise ZetaMonotonicityError("M^i / g_kappa(a^-i) does not vanish as i -> -inf")
    return i


def zeta_cov_check(law: StepLaw, kappa: float, m: int, n: int, cut: float = 1e-12) -> tuple[float, float]:
    """Covariance of ``zeta_m, zeta_n`` built from the independent-increment sum vs ``M^{m^n} g(a^-(m v n))``."""
    lo_idx, hi_idx = min(m, n), max(m, n)
    i_min = _zeta_floor(law, kappa, lo_idx, cut)
    G = _zeta_weights(law, kappa, i_min - 1, hi_idx)
    inc = np.diff(G)
    if (inc <= 0).any():
        bad = i_min + int(np.argmax(inc <= 0))
        raise ZetaMonotonicityError(f"M^i/g_kappa(a^-i) not increasing at i={bad}")
    # inc[k] = G(i_min + k) - G(i_min + k - 1)
    total = math.fsum(inc[: lo_idx - i_min + 1])
    constructed = g_kappa(law, kappa, m) * g_kappa(law, kappa, n) * total
    target = float(law.order) ** lo_idx * g_kappa(law, kappa, hi_idx)
    return constructed, target


def zeta_sample(
    law: StepLaw, kappa: float, indices: Sequence[int], rng: np.random.Generator, size: int = 1
) -> np.ndarray:
    """Draw ``(zeta_i)_{i in indices}`` from i.i.d. normals, shape ``(size, len(indices))``."""
    idx = np.asarray(sorted(indices), dtype=int)
    i_min = _zeta_floor(law, kappa, int(idx[0]))
    G = _zeta_weights(law, kappa, i_min - 1, int(idx[-1]))
    sd = np.sqrt(np.diff(G))
    nu = rng.standard_normal((size, len(sd)))
    partial = np.cumsum(nu * sd, axis=1)
    g = np.array([g_kappa(law, kappa, int(i)) for i in idx])
    return g * partial[:, idx - i_min]


# -- covariance specs and path sampling ---------------------------------------


class CovarianceSpec:
    """A covariance function on positive times; subclasses define :meth:`cov`."""

    def cov(self, s: float, t: float) -> float:
        raise NotImplementedError

    def gram(self, grid: Sequence[float]) -> np.ndarray:
        g = [float(x) for x in grid]
        if any(b < a for a, b in zip(g, g[1:])):
            raise ValueError("grid must be sorted")
        k = len(g)
        out = np.empty((k, k))
        for i in range(k):
            for j in range(i, k):
                out[i, j] = out[j, i] = self.cov(g[i], g[j])
        return out


@dataclass
class FiniteNCov(CovarianceSpec):
    law: StepLaw
    n: int
    R: TimeShift

    def cov(self, s, t):
        return finite_n_cov(self.law, self.n, s, t, self.R)


@dataclass
class LimitKappaCov(CovarianceSpec):
    law: StepLaw
    kappa: float
    R: TimeShift

    def cov(self, s, t):
        return limit_cov(self.law, self.kappa, s, t, self.R)


@dataclass
class CriticalCov(CovarianceSpec):
    R: TimeShift
    scale: float = 1.0

    def cov(self, s, t):
        return limit_cov_critical(s, t, self.R, self.scale)


@dataclass
class YProcessCov(CovarianceSpec):
    theta: float

    def cov(self, s, t):
        return y_cov(self.theta, s, t)


@dataclass
class ZetaCov(CovarianceSpec):
    """Covariance of ``(zeta_i)`` on integer indices: ``M^{i^j} g_kappa(a^-(i v j))``."""

    law: StepLaw
    kappa: float

    def cov(self, s, t):
        lo, hi = sorted((int(s), int(t)))
        return float(self.law.order) ** lo * g_kappa(self.law, self.kappa, hi)

    def gram(self, grid):
        # indices may be negative; skip the positivity check of the time-based specs
        g = [int(x) for x in grid]
        return np.array([[self.cov(i, j) for j in g] for i in g])


def is_psd(matrix: np.ndarray, jitter: float = 1e-10) -> bool:
    """Cholesky of ``A + jitter * max(diag A) * I`` succeeds."""
    a = np.asarray(matrix, dtype=float)
    scale = max(float(np.max(np.diag(a))), 1e-300)
    try:
        np.linalg.cholesky(a + jitter * scale * np.eye(len(a)))
    except np.linalg.LinAlgError:
        return False
    return True


def covariance_factor(matrix: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Symmetric square-root-type factor ``F`` with ``F F^T = A`` for PSD ``A``.

    Eigen-decomposition rather than Cholesky, so rank-deficient grids
    (several times sharing one ``R`` step) are fine.
    """
    a = np.asarray(matrix, dtype=float)
    a = 0.5 * (a + a.T)
    vals, vecs = np.linalg.eigh(a)
    floor = -tol * max(float(np.max(np.abs(vals))), 1e-300)
    if vals[0] < floor:
        raise FactorizationError(float(vals[0]))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def gaussian_path_sample(
    cov: CovarianceSpec, grid: Sequence[float], seed: int, size: int | None = None
) -> np.ndarray:
    """Centred Gaussian path(s) on ``grid``; shape ``(len(grid),)`` or ``(size, len(grid))``."""
    factor = covariance_factor(cov.gram(grid))
    rng = np.random.default_rng(seed)
    k = factor.shape[0]
    if size is None:
        return factor @ rng.standard_normal(k)
    return rng.standard_normal((size, k)) @ factor.T


def critical_path_sample(grid: Sequence[float], R: TimeShift, seed: int, size: int = 1) -> np.ndarray:
    """``sqrt(1 - e^-2) W_{M^{R(t)}}`` built from Brownian increments."""
    clock = np.array([float(R.order) ** R(t) for t in grid])
    if np.any(np.diff(clock) < 0):
        raise ValueError("grid must be sorted")
    rng = np.random.default_rng(seed)
    steps = np.diff(np.concatenate([[0.0], clock]))
    w = np.cumsum(rng.standard_normal((size, len(clock))) * np.sqrt(steps), axis=1)
    return math.sqrt(CRITICAL_VARIANCE) * w
