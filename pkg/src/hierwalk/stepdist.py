"""Step laws ``r_j`` of hierarchical random walks and derived quantities.

A step first picks a distance ``j >= 1`` with probability ``r_j`` and then a
uniform point at that distance.  Everything downstream is expressed through

* ``r_j``                      -- :meth:`StepLaw.prob`
* ``h(L) = sum_{j>L} r_j``     -- :meth:`StepLaw.tail`
* ``f_k = 1 - h(k-1) - r_k/(M-1)`` -- :meth:`StepLaw.eigen_f`

``f_k`` is close to 1 for large ``k``; callers that raise it to high powers
should use :meth:`StepLaw.one_minus_f`, which never forms ``1 - (1 - x)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Sequence

import numpy as np

from .series import geometric_power_tail, power_tail, zeta_normaliser


class LawParameterError(ValueError):
    """Step-law parameters outside their admissible range."""


class Classification(enum.Enum):
    RECURRENT = "recurrent"
    TRANSIENT = "transient"
    CRITICAL = "critical"  # degree 0 and the family gives no verdict


@dataclass(frozen=True)
class WalkParams:
    a: float
    b: float
    theta: float
    gamma: float
    classification: Classification

    @property
    def degree_zero(self) -> bool:
        return self.gamma == 0.0


def _params_from_ratio(order: int, a: float) -> tuple[float, float, float]:
    b = (order - a) / (order - 1)
    if a >= 1.0:
        theta = math.inf
    else:
        theta = math.log(order) / math.log(1.0 / a)
    return b, theta, theta - 1.0


def _is_degree_zero(order: int, a: float) -> bool:
    return math.isclose(a * order, 1.0, rel_tol=1e-12)


class StepLaw:
    """Base class; subclasses provide ``_prob`` and ``_tail`` on scalars."""

    family: str = "abstract"

    def __init__(self, order: int, tail_tolerance: float = 1e-15):
        if int(order) != order or order < 2:
            raise LawParameterError("order M must be an integer >= 2")
        self.order = int(order)
        self.tail_tolerance = float(tail_tolerance)

    # -- scalar kernels -------------------------------------------------
    def _prob(self, j: int) -> float:
        raise NotImplementedError

    def _tail(self, L: int) -> float:
        raise NotImplementedError

    def ratio_limit(self) -> float:
        """``a = lim r_{j+1}/r_j``."""
        raise NotImplementedError

    # -- public vectorised surface -------------------------------------
    def prob(self, j):
        """``r_j`` for ``j >= 1`` (scalar or array)."""
        if np.ndim(j) == 0:
            j = int(j)
            if j < 1:
                raise ValueError("step sizes start at 1")
            return self._prob(j)
        arr = np.asarray(j, dtype=np.int64)
        if arr.size and arr.min() < 1:
            raise ValueError("step sizes start at 1")
        return np.array([self._prob(int(v)) for v in arr.ravel()]).reshape(arr.shape)

    def tail(self, L):
        """``h(L) = P(|rho| > L)`` for ``L >= 0`` (scalar or array)."""
        if np.ndim(L) == 0:
            L = int(L)
            if L < 0:
                raise ValueError("radius must be >= 0")
            return 1.0 if L == 0 else self._tail(L)
        arr = np.asarray(L, dtype=np.int64)
        if arr.size and arr.min() < 0:
            raise ValueError("radius must be >= 0")
        return np.array([1.0 if v == 0 else self._tail(int(v)) for v in arr.ravel()]).reshape(arr.shape)

    def one_minus_f(self, k):
        """``1 - f_k = h(k-1) + r_k/(M-1)``, computed without cancellation."""
        return self.tail(np.asarray(k) - 1) + self.prob(k) / (self.order - 1)

    def eigen_f(self, k):
        return 1.0 - self.one_minus_f(k)

    def params(self) -> WalkParams:
        a = self.ratio_limit()
        b, theta, gamma = _params_from_ratio(self.order, a)
        if _is_degree_zero(self.order, a):
            gamma = 0.0
            theta = 1.0
            cls = self._degree_zero_class()
        elif a * self.order < 1.0:
            cls = Classification.RECURRENT
        else:
            cls = Classification.TRANSIENT
        return WalkParams(a=a, b=b, theta=theta, gamma=gamma, classification=cls)

    def _degree_zero_class(self) -> Classification:
        return Classification.CRITICAL

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items() if k != "family")
        return f"{type(self).__name__}({args})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, StepLaw) and self.to_dict() == other.to_dict()

    def __hash__(self) -> int:
        return hash(repr(self))


class CRW(StepLaw):
    """The c-random walk, ``r_j = (1 - c/M) (c/M)**(j-1)`` with ``0 < c < M``."""

    family = "crw"

    def __init__(self, order: int, c: float, tail_tolerance: float = 1e-15):
        super().__init__(order, tail_tolerance)
        if not 0.0 < c < order:
            raise LawParameterError(f"c must lie in (0, M={order}), got {c}")
        self.c = float(c)
        self._q = self.c / self.order

    def _prob(self, j: int) -> float:
        return (1.0 - self._q) * self._q ** (j - 1)

    def _tail(self, L: int) -> float:
        return self._q**L

    def ratio_limit(self) -> float:
        return self._q

    def _degree_zero_class(self) -> Classification:
        # c = 1: recurrent
        return Classification.RECURRENT

    def radius_scale_closed_form(self, n: int) -> int:
        """``floor(log_{M/c} n)``, corrected for floating error at exact powers."""
        if n < 1:
            raise ValueError("n must be >= 1")
        guess = int(math.floor(math.log(n) / math.log(1.0 / self._q)))
        while guess > 0 and self._tail(guess) < 1.0 / n:
            guess -= 1
        while self._tail(guess + 1) >= 1.0 / n:
            guess += 1
        return guess

    def to_dict(self) -> dict[str, Any]:
        return {"family": "crw", "M": self.order, "c": self.c}


class JBeta(StepLaw):
    """``r_j = D j**beta / M**j`` with ``beta >= 0``; ``a = 1/M``."""

    family = "jbeta"

    def __init__(self, order: int, beta: float, tail_tolerance: float = 1e-15):
        super().__init__(order, tail_tolerance)
        if beta < 0:
            raise LawParameterError("beta must be >= 0")
        self.beta = float(beta)
        total, err = geometric_power_tail(self.beta, self.order, 1)
        if err > tail_tolerance * total:
            raise RuntimeError("normaliser not certified")
        self.normaliser = 1.0 / total
        self._log_d = math.log(self.normaliser)
        self._tail_cached = lru_cache(maxsize=4096)(self._tail_uncached)

    def _prob(self, j: int) -> float:
        return math.exp(self._log_d + self.beta * math.log(j) - j * math.log(self.order))

    def _tail_uncached(self, L: int) -> float:
        value, _ = geometric_power_tail(self.beta, self.order, L + 1)
        return self.normaliser * value

    def _tail(self, L: int) -> float:
        return self._tail_cached(L)

    def ratio_limit(self) -> float:
        return 1.0 / self.order

    def _degree_zero_class(self) -> Classification:
        return Classification.RECURRENT if self.beta <= 1.0 else Classification.TRANSIENT

    def to_dict(self) -> dict[str, Any]:
        return {"family": "jbeta", "M": self.order, "beta": self.beta}


class PowerLaw(StepLaw):
    """``r_j = D j**-beta`` with ``beta > 1``; ``a = 1`` (degree infinite)."""

    family = "powerlaw"

    def __init__(self, order: int, beta: float, tail_tolerance: float = 1e-15):
        super().__init__(order, tail_tolerance)
        if beta <= 1:
            raise LawParameterError("power-law steps need beta > 1")
        self.beta = float(beta)
        self.normaliser = zeta_normaliser(self.beta)
        self._tail_cached = lru_cache(maxsize=1 << 16)(self._tail_uncached)

    def _prob(self, j: int) -> float:
        return self.normaliser * float(j) ** (-self.beta)

    def _tail_uncached(self, L: int) -> float:
        value, err = power_tail(self.beta, L + 1)
        if err > self.tail_tolerance * value:
            raise RuntimeError(f"tail at L={L} not certified to {self.tail_tolerance}")
        return self.normaliser * value

    def _tail(self, L: int) -> float:
        return self._tail_cached(L)

    def ratio_limit(self) -> float:
        return 1.0

    def to_dict(self) -> dict[str, Any]:
        return {"family": "powerlaw", "M": self.order, "beta": self.beta}


class Custom(StepLaw):
    """Finitely supported ``r_1, ..., r_J`` given explicitly.

    The ratio limit ``a`` cannot be inferred from finitely many terms, so it
    must be supplied for anything that needs walk parameters.
    ``small_jump_condition`` records the user's assertion that
    ``r_{j+1}/h(j) -> 0`` (the weaker hypothesis for the critical regime).
    """

    family = "custom"

    def __init__(
        self,
        order: int,
        probs: Sequence[float],
        a: float | None = None,
        small_jump_condition: bool = False,
        tail_tolerance: float = 1e-15,
    ):
        super().__init__(order, tail_tolerance)
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise LawParameterError("probs must be a non-empty sequence")
        if (p < 0).any():
            raise LawParameterError("probabilities must be non-negative")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise LawParameterError(f"probs sum to {math.fsum(p)!r}, not 1")
        if a is not None and not 0.0 < a <= 1.0:
            raise LawParameterError("a must lie in (0, 1]")
        self.probs = tuple(float(x) for x in p)
        self.a = a
        self.small_jump_condition = bool(small_jump_condition)
        # suffix sums: _tails[L] = sum_{j > L} r_j
        tails = [0.0] * (len(self.probs) + 1)
        for L in range(len(self.probs) - 1, -1, -1):
            tails[L] = tails[L + 1] + self.probs[L]
        self._tails = tails

    def _prob(self, j: int) -> float:
        return self.probs[j - 1] if j <= len(self.probs) else 0.0

    def _tail(self, L: int) -> float:
        return self._tails[L] if L < len(self._tails) else 0.0

    def ratio_limit(self) -> float:
        if self.a is None:
            raise LawParameterError("custom law has no declared ratio limit a")
        return self.a

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"family": "custom", "M": self.order, "probs": list(self.probs)}
        if self.a is not None:
            d["a"] = self.a
        if self.small_jump_condition:
            d["small_jump_condition"] = True
        return d


LAW_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["family", "M"],
    "properties": {
        "family": {"enum": ["crw", "jbeta", "powerlaw", "custom"]},
        "M": {"type": "integer", "minimum": 2},
        "c": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number"},
        "probs": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "a": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "small_jump_condition": {"type": "boolean"},
        "tail_tolerance": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"family": {"const": "crw"}}}, "then": {"required": ["c"]}},
        {"if": {"properties": {"family": {"enum": ["jbeta", "powerlaw"]}}}, "then": {"required": ["beta"]}},
        {"if": {"properties": {"family": {"const": "custom"}}}, "then": {"required": ["probs"]}},
    ],
}


def law_from_dict(d: dict[str, Any]) -> StepLaw:
    """Build a law from its JSON descriptor, e.g. ``{"family": "crw", "M": 2, "c": 1.0}``."""
    import jsonschema

    jsonschema.validate(d, LAW_SCHEMA)
    kw = {"tail_tolerance": d["tail_tolerance"]} if "tail_tolerance" in d else {}
    fam = d["family"]
    if fam == "crw":
        return CRW(d["M"], d["c"], **kw)
    if fam == "jbeta":
        return JBeta(d["M"], d["beta"], **kw)
    if fam == "powerlaw":
        return PowerLaw(d["M"], d["beta"], **kw)
    return Custom(d["M"], d["probs"], a=d.get("a"), small_jump_condition=d.get("small_jump_condition", False), **kw)


# -- functional surface ------------------------------------------------------


def step_prob(law: StepLaw, j):
    return law.prob(j)


def tail(law: StepLaw, L):
    return law.tail(L)


def eigen_f(law: StepLaw, k):
    return law.eigen_f(k)


def walk_params(law: StepLaw) -> WalkParams:
    return law.params()


def radius_scale(law: StepLaw, n: int) -> int:
    """``L(n) = sup{L >= 0 : h(L) >= 1/n}``.

    ``h`` is non-increasing, so a doubling search followed by bisection finds
    the last ``L`` with ``h(L) >= 1/n``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    thr = 1.0 / n
    if law.tail(1) < thr:
        return 0
    lo, hi = 1, 2
    while law.tail(hi) >= thr:
        lo, hi = hi, hi * 2
        if hi > 1 << 62:
            raise OverflowError("tail does not decay below 1/n")
    # invariant: h(lo) >= thr > h(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if law.tail(mid) >= thr:
            lo = mid
        else:
            hi = mid
    return lo


def kappa_sequence(law: StepLaw, kappa: float, i: int) -> int:
    """``n_i = ceil(kappa / h(i))``; along it ``n_i h(L(n_i)) -> kappa``.

    Only ``kappa`` in ``[1, 1/a)`` is accepted: for ``kappa < 1/a`` one has
    ``L(n_i) = i`` eventually, which is what makes the limit equal ``kappa``.
    """
    a = law.ratio_limit()
    if a >= 1.0:
        raise LawParameterError("kappa subsequences only exist for a < 1")
    if not 1.0 <= kappa < 1.0 / a:
        raise LawParameterError(f"kappa must lie in [1, {1.0 / a}), got {kappa}")
    if i < 0:
        raise ValueError("index must be >= 0")
    return max(1, int(math.ceil(kappa / law.tail(i))))
