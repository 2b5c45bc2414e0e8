"""Monte Carlo engine.

Single walks are simulated either on group elements or on the radial chain.
Ball counts of the infinite system are sampled exactly in distribution by
grouping start sites into classes with a common landing law:

* the core ``B_{L_1}`` (every start lands in ``B_{L_i}`` with ``P(|xi_n| <= L_i)``);
* each sphere ``S_m``, ``m > L_1``.

A class of ``N`` independent particles with identical cell probabilities is
one multinomial draw.  Shells far enough out that their expected
contribution to ``B_{L_k}`` is below ``tol`` are dropped; the dropped
expectation bounds the total-variation error of the sample.

Random streams: block ``b`` of a replica plan uses
``SeedSequence(base_seed, spawn_key=(b,))``; blocks have a fixed size, so the
output does not depend on how many workers process them.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import hiergroup
from .fluct import TimeShift, finite_n_cov
from .hiergroup import GroupElement
from .numbervar import EXACT_INT_LIMIT, variance_exact
from .radial import radial_pmf_range, radial_tail
from .stepdist import StepLaw, radius_scale

SHELL_TOL = 1e-9
POISSON_EXACT_LIMIT = 1e18
_INT64_MAX = 2**63 - 1
_ELEMENT_CELLS = 1 << 22
# wide shells are sampled by geometric skipping; cap on their expected count
_SPARSE_MEAN_LIMIT = 1e3


class SimulationRangeError(ValueError):
    """Requested counts are too large to sample with exact integer semantics."""


class ApproximationWarning(UserWarning):
    pass


def stream(base_seed: int, index: int) -> np.random.Generator:
    """Independent generator for ``(base_seed, index)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(base_seed, spawn_key=(index,))))


# -- step sizes ------------------------------------------------------------------


class StepSampler:
    """Inverse-CDF sampler for ``|rho|``: ``j = min{j : h(j) < U}``, ``U ~ U(0, 1]``."""

    def __init__(self, law: StepLaw, table_size: int = 4096):
        self.law = law
        h = np.asarray(law.tail(np.arange(table_size + 1)), dtype=float)
        # a short table is faster to search; U below its last entry takes the slow path
        small = np.flatnonzero(h < 2.0**-64)
        self._h = h[: small[0] + 1] if small.size else h
        self._neg_h = -self._h

    def _slow(self, u: float) -> int:
        lo = len(self._h) - 1  # h(lo) >= u
        hi = lo * 2
        while self.law.tail(hi) >= u:
            lo, hi = hi, hi * 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.law.tail(mid) >= u:
                lo = mid
            else:
                hi = mid
        return hi

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        u = 1.0 - rng.random(size)
        j = np.searchsorted(self._neg_h, -u, side="right")
        over = j >= len(self._h)
        if over.any():
            flat = j.reshape(-1)
            for k in np.flatnonzero(over.reshape(-1)):
                flat[k] = self._slow(float(u.reshape(-1)[k]))
        return j.astype(np.int64)


@lru_cache(maxsize=64)
def _sampler(law: StepLaw) -> StepSampler:
    return StepSampler(law)


# -- single walks ------------------------------------------------------------------


def walk_path(law: StepLaw, n: int, seed: int, mode: str = "element") -> list:
    """Positions ``xi_0 .. xi_n`` (elements) or radii ``|xi_0| .. |xi_n|`` (radial)."""
    rng = np.random.default_rng(seed)
    sizes = _sampler(law).sample(rng, n) if n else np.zeros(0, dtype=np.int64)
    if mode == "element":
        path = [GroupElement.zero(law.order)]
        for j in sizes:
            rho = hiergroup.sample_sphere(law.order, int(j), rng)
            path.append(path[-1] + rho)
        return path
    if mode == "radial":
        radii = [0]
        for j in sizes:
            radii.append(int(_radial_step(np.array([radii[-1]]), np.array([j]), law.order, rng)[0]))
        return radii
    raise ValueError(f"unknown mode {mode!r}")


def _radial_step(i: np.ndarray, j: np.ndarray, order: int, rng: np.random.Generator) -> np.ndarray:
    """One step of the radial chain for current radii ``i`` and step sizes ``j``."""
    new = np.maximum(i, j)
    same = (i == j) & (i > 0)
    if same.any():
        k = int(same.sum())
        cancel = rng.random(k) < 1.0 / (order - 1)
        # on cancellation the lower i-1 digits are uniform: P(radius <= i-1-g) = M^-g
        v = 1.0 - rng.random(k)
        g = np.floor(-np.log(v) / math.log(order)).astype(np.int64)
        low = np.maximum(i[same] - 1 - g, 0)
        new[same] = np.where(cancel, low, i[same])
    return new


def simulate_radii(law: StepLaw, n: int, replicas: int, seed: int, mode: str = "radial") -> np.ndarray:
    """Final radii ``|xi_n|`` of independent walks, vectorised over replicas."""
    rng = np.random.default_rng(seed)
    sampler = _sampler(law)
    M = law.order
    if mode == "radial":
        r = np.zeros(replicas, dtype=np.int64)
        for _ in range(n):
            r = _radial_step(r, sampler.sample(rng, replicas), M, rng)
        return r
    if mode == "element":
        out = np.zeros(replicas, dtype=np.int64)
        if n == 0:
            return out
        steps = sampler.sample(rng, (replicas, n))
        widths = steps.max(axis=1)
        # heavy tails give a few very wide walks; group rows by width so the
        # digit arrays stay small for the bulk
        bucket = np.ceil(np.log2(widths)).astype(np.int64)
        dtype = np.int16 if M < 2**14 else np.int64
        for b in np.unique(bucket):
            rows = np.flatnonzero(bucket == b)
            W = int(widths[rows].max())
            per_chunk = max(1, _ELEMENT_CELLS // W)
            for start in range(0, len(rows), per_chunk):
                idx = rows[start : start + per_chunk]
                out[idx] = _element_radii(steps[idx], W, M, dtype, rng)
        return out
    raise ValueError(f"unknown mode {mode!r}")


def _element_radii(steps: np.ndarray, width: int, order: int, dtype, rng: np.random.Generator) -> np.ndarray:
    count = steps.shape[0]
    pos = np.zeros((count, width), dtype=dtype)
    level = np.arange(1, width + 1)
    rows = np.arange(count)
    for j in steps.T:
        rho = rng.integers(0, order, size=(count, width), dtype=dtype)
        rho[level[None, :] >= j[:, None]] = 0
        rho[rows, j - 1] = rng.integers(1, order, size=count, dtype=dtype)
        pos = hiergroup.add_digit_arrays(pos, rho, order)
    return hiergroup.digit_array_norm(pos)


# -- ball counts ---------------------------------------------------------------------


@dataclass(frozen=True)
class CountClasses:
    sizes: tuple[int, ...]
    cells: np.ndarray  # (classes, k+1): landing in B_{L_1}, annuli, outside
    dropped_mean: float  # expected particles from omitted classes inside B_{L_k}
    max_start_radius: int


def _check_radii(radii: Sequence[int]) -> tuple[int, ...]:
    r = tuple(int(x) for x in radii)
    if not r:
        raise ValueError("need at least one radius")
    if any(b <= a for a, b in zip(r, r[1:])):
        raise ValueError("radii must be strictly increasing")
    if r[0] < 0:
        raise ValueError("radii must be >= 0")
    return r


@lru_cache(maxsize=256)
def count_classes(
    law: StepLaw, n: int, radii: tuple[int, ...], tol: float = SHELL_TOL, max_start_radius: int | None = None
) -> CountClasses:
    radii = _check_radii(radii)
    M = law.order
    L1, Lk = radii[0], radii[-1]
    if M**Lk > EXACT_INT_LIMIT:
        raise SimulationRangeError(f"E N = M^{Lk} exceeds 2^53; choose a smaller radius")
    if max_start_radius is None:
        m_max = Lk
        while float(M) ** Lk * radial_tail(law, n, m_max) >= tol:
            m_max += 1
            if m_max - Lk > 2000:
                raise SimulationRangeError("shell series does not reach the truncation tolerance")
    else:
        m_max = max(int(max_start_radius), L1)
    dropped = float(M) ** Lk * radial_tail(law, n, m_max) if n else 0.0

    cdf = np.array([1.0 - radial_tail(law, n, L) if n else 1.0 for L in radii])
    shell_r = np.arange(L1 + 1, m_max + 1)
    pm = radial_pmf_range(law, n, L1 + 1, m_max) if (n and m_max > L1) else np.zeros(len(shell_r))
    sizes = [M**L1]
    inside = [cdf]
    for m, p in zip(shell_r, pm):
        size = (M - 1) * M ** (int(m) - 1)
        sizes.append(size)
        row = np.array(
            [cdf[i] if m <= L else p / ((M - 1) * float(M) ** (m - L - 1)) for i, L in enumerate(radii)]
        )
        inside.append(row)
    inside_arr = np.maximum.accumulate(np.clip(np.array(inside), 0.0, 1.0), axis=1)
    cells = np.diff(np.concatenate([np.zeros((len(sizes), 1)), inside_arr, np.ones((len(sizes), 1))], axis=1), axis=1)
    return CountClasses(tuple(sizes), cells, dropped, m_max)


def _draw_counts(classes: CountClasses, rng: np.random.Generator, size: int) -> np.ndarray:
    k = classes.cells.shape[1] - 1
    total = np.zeros((size, k), dtype=np.int64)
    for n_sites, cell in zip(classes.sizes, classes.cells):
        if n_sites <= _INT64_MAX:
            draw = rng.multinomial(n_sites, cell, size=size)[:, :k]
        else:
            q = math.fsum(cell[:k])
            hits = _sparse_binomial(rng, n_sites, q, size)
            if not hits.any():
                continue
            draw = rng.multinomial(hits, cell[:k] / q)
        total += np.cumsum(draw, axis=1)
    return total


def _sparse_binomial(rng: np.random.Generator, trials: int, q: float, size: int) -> np.ndarray:
    """``Binomial(trials, q)`` for ``trials`` beyond int64.

    Successes are placed by geometric gaps ``ceil(log U / log(1-q))``; the
    loop runs once per success, so only small means are accepted.
    """
    out = np.zeros(size, dtype=np.int64)
    if q <= 0.0:
        return out
    if trials * q > _SPARSE_MEAN_LIMIT:
        raise SimulationRangeError(f"shell of {trials} sites with mean {trials * q:.3g} is too wide to sample")
    log_miss = math.log1p(-q)
    limit = float(trials)
    pos = np.zeros(size)
    active = np.arange(size)
    while active.size:
        u = 1.0 - rng.random(active.size)
        pos[active] += np.maximum(np.ceil(np.log(u) / log_miss), 1.0)
        hit = pos[active] <= limit
        active = active[hit]
        out[active] += 1
    return out


def joint_count_sample(
    law: StepLaw,
    n: int,
    radii: Sequence[int],
    seed: int | np.random.Generator,
    size: int | None = None,
    tol: float = SHELL_TOL,
    max_start_radius: int | None = None,
):
    """One draw (or ``size`` draws) of ``(N_n(L_1), ..., N_n(L_k))``."""
    classes = count_classes(law, n, _check_radii(radii), tol, max_start_radius)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = _draw_counts(classes, rng, 1 if size is None else size)
    return [int(x) for x in out[0]] if size is None else out


def count_sample(law: StepLaw, n: int, L: int, seed, size: int | None = None, tol: float = SHELL_TOL, max_start_radius=None):
    """One draw (or ``size`` draws) of ``N_n(L)``."""
    out = joint_count_sample(law, n, [L], seed, size, tol, max_start_radius)
    return out[0] if size is None else out[:, 0]


def _poisson(rng: np.random.Generator, mean: np.ndarray, size: int) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    if (mean > POISSON_EXACT_LIMIT).any():
        warnings.warn("Poisson mean beyond exact range; using a normal approximation", ApproximationWarning)
        return np.rint(rng.normal(mean, np.sqrt(mean), size=(size,) + mean.shape)).astype(np.int64)
    return rng.poisson(mean, size=(size,) + mean.shape)


def poisson_count_sample(law: StepLaw, n: int, L: int, lam: float, seed, size: int | None = None):
    """``N_n(L)`` under i.i.d. Poisson(``lam``) occupation: a Poisson(``lam M^L``) draw.

    Thinning independent Poisson inputs gives a Poisson count with mean
    ``lam * sum_u p^u_n(L) = lam * M^L``, whatever ``law`` and ``n``.
    """
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = _poisson(rng, np.array([lam * float(law.order) ** L]), 1 if size is None else size)[:, 0]
    return int(out[0]) if size is None else out


def joint_poisson_count_sample(law: StepLaw, n: int, radii: Sequence[int], lam: float, seed, size: int | None = None):
    """Joint ``(N_n(L_i))`` under Poisson occupation: independent Poisson annuli, accumulated."""
    radii = _check_radii(radii)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    vol = np.array([float(law.order) ** L for L in radii])
    annuli = lam * np.diff(np.concatenate([[0.0], vol]))
    out = np.cumsum(_poisson(rng, annuli, 1 if size is None else size), axis=1)
    return [int(x) for x in out[0]] if size is None else out


# -- brute-force small-box oracle -------------------------------------------------------


def box_count_sample(
    law: StepLaw, n: int, L: int, box_radius: int, replicas: int, seed: int, chunk: int = 256
) -> np.ndarray:
    """``N_n(L)`` restricted to walkers started in ``B_{box_radius}``, every walker simulated.

    For ``M = 2`` group elements are packed into ``uint64`` bit masks and
    addition is XOR; otherwise explicit digit arrays are used.
    """
    M = law.order
    rng = np.random.default_rng(seed)
    sampler = _sampler(law)
    n_sites = M**box_radius
    out = np.empty(replicas, dtype=np.int64)
    if M == 2:
        if box_radius > 62:
            raise SimulationRangeError("box too large for bit packing")
        sites = np.arange(n_sites, dtype=np.uint64)
        for start in range(0, replicas, chunk):
            c = min(chunk, replicas - start)
            pos = np.broadcast_to(sites, (c, n_sites)).copy()
            for _ in range(n):
                j = sampler.sample(rng, (c, n_sites))
                if j.max() > 63:
                    raise SimulationRangeError("step beyond 63 levels in bit-packed box simulation")
                top = np.left_shift(np.uint64(1), (j - 1).astype(np.uint64))
                low = rng.bit_generator.random_raw((c, n_sites))
                pos ^= (low & (top - np.uint64(1))) | top
            out[start : start + c] = (np.right_shift(pos, np.uint64(L)) == 0).sum(axis=1)
        return out
    width0 = box_radius
    sites = np.array([list(e.digits) + [0] * (width0 - len(e.digits)) for e in hiergroup.elements(M, box_radius)], dtype=np.int64)
    for start in range(0, replicas, chunk):
        c = min(chunk, replicas - start)
        pos = np.broadcast_to(sites, (c, n_sites, width0)).copy()
        for _ in range(n):
            j = sampler.sample(rng, (c, n_sites))
            width = int(max(pos.shape[2], j.max()))
            if width > pos.shape[2]:
                pos = np.pad(pos, ((0, 0), (0, 0), (0, width - pos.shape[2])))
            level = np.arange(1, width + 1)
            rho = rng.integers(0, M, size=(c, n_sites, width))
            rho = np.where(level < j[..., None], rho, 0)
            top = rng.integers(1, M, size=(c, n_sites))
            np.put_along_axis(rho, (j - 1)[..., None], top[..., None], axis=2)
            pos = (pos + rho) % M
        out[start : start + c] = (hiergroup.digit_array_norm(pos) <= L).sum(axis=1)
    return out


# -- replica estimation ---------------------------------------------------------------


@dataclass
class ReplicaPlan:
    """Declarative Monte Carlo run.

    ``statistic`` is one of ``mean`` / ``variance`` (of ``N_n(radii[0])``) or
    ``fluct_cov`` (``Cov(X_n(s), X_n(t))`` for ``times = (s, t)``).
    ``model`` is ``deterministic`` (one walker per site) or ``poisson``.
    """

    law: StepLaw
    n: int
    statistic: str
    replicas: int
    base_seed: int
    radii: tuple[int, ...] = ()
    times: tuple[float, float] | None = None
    shift: TimeShift | None = None
    model: str = "deterministic"
    lam: float = 1.0
    block_size: int = 4096
    tol: float = SHELL_TOL


@dataclass
class EstimateReport:
    statistic: str
    estimate: float
    se: float
    replicas: int
    reference: float | None
    z: float | None
    base_seed: int
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def jackknife_variance(x: np.ndarray) -> tuple[float, float]:
    """Unbiased sample variance and its leave-one-out jackknife standard error."""
    return jackknife_covariance(x, x)


def jackknife_covariance(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 replicas")
    xc = np.asarray(x, float) - float(np.mean(x))
    yc = np.asarray(y, float) - float(np.mean(y))
    sx, sy, sxy = math.fsum(xc), math.fsum(yc), math.fsum(xc * yc)
    est = (sxy - sx * sy / n) / (n - 1)
    loo_x, loo_y = sx - xc, sy - yc
    loo = (sxy - xc * yc - loo_x * loo_y / (n - 1)) / (n - 2)
    se = math.sqrt((n - 1) / n * math.fsum((loo - loo.mean()) ** 2))
    return est, se


def _plan_radii(plan: ReplicaPlan) -> tuple[tuple[int, ...], int]:
    if plan.statistic == "fluct_cov":
        if plan.times is None:
            raise ValueError("fluct_cov needs times")
        R = plan.shift or TimeShift.for_law(plan.law)
        Ln = radius_scale(plan.law, plan.n)
        s, t = sorted(plan.times)
        return tuple(sorted({max(Ln + R(s), 0), max(Ln + R(t), 0)})), Ln
    if len(plan.radii) != 1:
        raise ValueError(f"{plan.statistic} needs exactly one radius")
    return tuple(plan.radii), 0


def _run_block(plan: ReplicaPlan, radii: tuple[int, ...], block: int) -> np.ndarray:
    size = min(plan.block_size, plan.replicas - block * plan.block_size)
    rng = stream(plan.base_seed, block)
    if plan.model == "poisson":
        return joint_poisson_count_sample(plan.law, plan.n, radii, plan.lam, rng, size)
    return joint_count_sample(plan.law, plan.n, radii, rng, size, plan.tol)


def draw_replicas(plan: ReplicaPlan, workers: int | None = None) -> np.ndarray:
    """All replica draws of the plan's radii, in block order."""
    radii, _ = _plan_radii(plan)
    n_blocks = -(-plan.replicas // plan.block_size)
    workers = workers or int(os.environ.get("HRW_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _run_block(plan, radii, b), range(n_blocks)))
    else:
        parts = [_run_block(plan, radii, b) for b in range(n_blocks)]
    return np.concatenate(parts, axis=0)


def estimate(plan: ReplicaPlan, workers: int | None = None) -> EstimateReport:
    if plan.replicas < 3:
        raise ValueError("need at least 3 replicas")
    draws = draw_replicas(plan, workers)
    radii, Ln = _plan_radii(plan)
    M = plan.law.order
    poisson = plan.model == "poisson"
    details: dict = {"radii": list(radii), "n": plan.n, "model": plan.model}
    if plan.statistic == "mean":
        x = draws[:, 0].astype(float)
        est = float(np.mean(x))
        se = float(np.std(x, ddof=1) / math.sqrt(len(x)))
        ref = (plan.lam if poisson else 1.0) * float(M) ** radii[0]
    elif plan.statistic == "variance":
        est, se = jackknife_variance(draws[:, 0])
        L = radii[0]
        ref = plan.lam * float(M) ** L if poisson else variance_exact(plan.law, plan.n, L).variance
    elif plan.statistic == "fluct_cov":
        s, t = sorted(plan.times)
        R = plan.shift or TimeShift.for_law(plan.law)
        Ls, Lt = max(Ln + R(s), 0), max(Ln + R(t), 0)
        col = {L: i for i, L in enumerate(radii)}
        norm = math.sqrt(float(M) ** Ln)
        xs = draws[:, col[Ls]] / norm
        xt = draws[:, col[Lt]] / norm
        est, se = jackknife_covariance(xs, xt)
        if poisson:
            ref = plan.lam * float(M) ** (Ls - Ln)
        else:
            ref = finite_n_cov(plan.law, plan.n, s, t, R, Ln=Ln)
        details.update({"L_n": Ln, "times": [s, t]})
    else:
        raise ValueError(f"unknown statistic {plan.statistic!r}")
    z = (est - ref) / se if se > 0 else None
    return EstimateReport(plan.statistic, float(est), float(se), plan.replicas, float(ref), z, plan.base_seed, details)
