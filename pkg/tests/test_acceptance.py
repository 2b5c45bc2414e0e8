"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line."""

import itertools
import math
import time

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from hierwalk.fluct import (
    CriticalCov,
    TimeShift,
    c_kappa,
    finite_n_cov,
    g_kappa,
    gaussian_path_sample,
    limit_cov,
    limit_cov_critical,
    lrd_scan,
    rescale_diagnostic,
    y_cov,
    zeta_cov_check,
)
from hierwalk.numbervar import (
    poisson_count_stats,
    scaled_step,
    scaled_step_limit,
    variance_bounds,
    variance_exact,
)
from hierwalk.radial import radial_pmf, radial_pmf_oracle, radial_tail
from hierwalk.simulate import (
    ReplicaPlan,
    box_count_sample,
    count_sample,
    estimate,
)
from hierwalk.stepdist import CRW, Custom, JBeta, PowerLaw, kappa_sequence, radius_scale

from conftest import law_grid

CRW21 = CRW(2, 1.0)


def two_sample_p(x, y, min_cell=20):
    vals = np.union1d(x, y)
    table = np.array([[np.sum(x == v) for v in vals], [np.sum(y == v) for v in vals]])
    keep = table.sum(axis=0) >= min_cell
    if (~keep).any():
        table = np.column_stack([table[:, keep], table[:, ~keep].sum(axis=1)])
    return chi2_contingency(table[:, table.sum(axis=0) > 0])[1]


def test_01_radial_closed_form_vs_dp_oracle(criterion):
    criterion.update(id=1, title="radial law: eigenvalue series vs DP oracle")
    t0 = time.perf_counter()
    worst = 0.0
    for law in law_grid((2, 3, 5)):
        for n in range(1, 21):
            a = radial_pmf(law, n, 40).pmf
            b = radial_pmf_oracle(law, n, 40).pmf
            worst = max(worst, float(np.max(np.abs(a - b))))
    elapsed = time.perf_counter() - t0
    criterion["detail"] = f"max|diff|={worst:.2e} (tol 1e-10), {elapsed:.1f}s (limit 30s)"
    assert worst <= 1e-10
    assert elapsed < 30


def test_02_one_step_reduction(criterion):
    criterion.update(id=2, title="one-step radial law equals r_k")
    laws = law_grid((2, 3, 5)) + [Custom(3, [0.5, 0.3, 0.2], a=0.5), PowerLaw(2, 1.2), JBeta(5, 3.5)]
    worst = 0.0
    for law in laws:
        rl = radial_pmf(law, 1, 40)
        worst = max(worst, float(np.max(np.abs(rl.pmf[1:] - law.prob(np.arange(1, 41))))), abs(rl.pmf[0]))
    criterion["detail"] = f"max|pmf - r|={worst:.2e} over {len(laws)} laws (tol 1e-12)"
    assert worst <= 1e-12


def test_03_variance_regimes_c_rw(criterion):
    criterion.update(id=3, title="number variance regimes of the c-rw")
    t0 = time.perf_counter()
    n = 5
    # c = 1: saturates at 2n
    v = [variance_exact(CRW21, n, L).variance for L in range(15, 31)]
    rel = abs(v[-1] - 10) / 10
    monotone = all(x < y for x, y in zip(v, v[1:]))
    # c = 0.5: vanishes
    low = CRW(2, 0.5)
    drop = variance_exact(low, n, 30).variance / variance_exact(low, n, 5).variance
    # c = 1.5: Var / M^L bounded, Var grows by the factor c per level
    high = CRW(2, 1.5)
    bounded = True
    ratios = []
    prev = None
    for L in range(1, 31):
        cm = variance_exact(high, n, L)
        lo, hi = variance_bounds(high, n, L)
        bounded &= lo * (1 - 1e-12) <= cm.variance <= hi
        if prev is not None and L >= 20:
            ratios.append(cm.variance / prev)
        prev = cm.variance
    worst_ratio = max(abs(r / 1.5 - 1) for r in ratios)
    elapsed = time.perf_counter() - t0
    criterion["detail"] = (
        f"c=1: Var(30)={v[-1]:.6f} rel.err {rel:.1e}, monotone={monotone}; "
        f"c=0.5: Var(30)/Var(5)={drop:.1e}; c=1.5: bounded={bounded}, "
        f"max|ratio/1.5-1|={worst_ratio:.3f} over L=20..30; {elapsed:.2f}s"
    )
    assert rel <= 0.02 and monotone
    assert drop <= 1e-3
    assert bounded and worst_ratio <= 0.10 and variance_exact(high, n, 30).variance > 1e4
    assert elapsed < 10


def test_04_scaled_step_limit(criterion):
    criterion.update(id=4, title="analytic lim M^L r_L vs numeric at L=60")
    laws = [CRW(M, c) for M in (2, 3, 5) for c in (0.25, 0.5, 1.0)] + [JBeta(M, 0.0) for M in (2, 3, 5)]
    worst = 0.0
    for law in laws:
        lim = scaled_step_limit(law)
        got = scaled_step(law, 60)
        err = abs(got - lim) if lim == 0 else abs(got / lim - 1)
        worst = max(worst, err)
    for law in (CRW(2, 1.5), CRW(3, 2.5)):
        assert math.isinf(scaled_step_limit(law)) and scaled_step(law, 60) > 1e6
    criterion["detail"] = f"worst error {worst:.2e} over {len(laws)} finite-limit laws (tol 1%)"
    assert worst <= 0.01


def test_05_fluctuation_covariance_kappa(criterion):
    criterion.update(id=5, title="finite-n covariance -> kappa limit (a < 1)")
    t0 = time.perf_counter()
    R = TimeShift.for_law(CRW21)
    grid = (1, 2, 4, 8)
    worst = 0.0
    for kappa in (1.0, 1.5):
        n = kappa_sequence(CRW21, kappa, 20)
        for s, t in itertools.product(grid, grid):
            lim = limit_cov(CRW21, kappa, s, t, R)
            worst = max(worst, abs(finite_n_cov(CRW21, n, s, t, R) - lim) / lim)
    elapsed = time.perf_counter() - t0
    criterion["detail"] = f"max rel.err {worst:.2e} at i=20 (tol 1%), {elapsed:.2f}s"
    assert worst <= 0.01
    assert elapsed < 5


def test_06_fluctuation_covariance_critical(criterion):
    criterion.update(id=6, title="finite-n covariance -> (1-e^-2) M^R limit (a = 1)")
    law = PowerLaw(2, 2.0)
    R = TimeShift.for_law(law)
    # largest n with L(n) <= 10^6: n < 1 / h(10^6 + 1)
    n = math.ceil(1.0 / float(law.tail(10**6 + 1))) - 1
    Ln = radius_scale(law, n)
    assert Ln <= 10**6 < radius_scale(law, n + 1)
    grid = (1, 2, 4, 8)
    worst = 0.0
    for s, t in itertools.product(grid, grid):
        lim = limit_cov_critical(s, t, R)
        worst = max(worst, abs(finite_n_cov(law, n, s, t, R, Ln=Ln) - lim) / lim)
    criterion["detail"] = f"n={n}, L(n)={Ln}, max rel.err {worst:.2e} (tol 2%)"
    assert worst <= 0.02


def test_07_zeta_representation(criterion):
    criterion.update(id=7, title="independent-increment representation of the kappa limit")
    worst = 0.0
    for m, n in itertools.product(range(-5, 11), repeat=2):
        constructed, target = zeta_cov_check(CRW21, 1.0, m, n)
        worst = max(worst, abs(constructed - target) / target)
    criterion["detail"] = f"max rel.err {worst:.2e} over m,n in [-5,10] (tol 1e-8)"
    assert worst <= 1e-8


def test_08_scaling_limit(criterion):
    criterion.update(id=8, title="rescaled kappa limit -> 2 kappa y_cov")
    worst_g = 0.0
    worst_d = 0.0
    dyadic = [2.0**k for k in range(0, 5)]
    for kappa in (1.0, 1.5):
        worst_g = max(worst_g, abs(2.0**25 * g_kappa(CRW21, kappa, 25) / (2 * kappa) - 1))
        for s, t in itertools.product(dyadic, dyadic):
            target = c_kappa(kappa) ** 2 * y_cov(1.0, s, t)
            worst_d = max(worst_d, abs(rescale_diagnostic(CRW21, kappa, 25, s, t) / target - 1))
    criterion["detail"] = f"a^-m g(m=25) rel.err {worst_g:.2e}; diagnostic vs C(kappa)^2 y_cov rel.err {worst_d:.2e} (tol 1%)"
    assert worst_g <= 0.01
    assert worst_d <= 0.01


def test_09_long_range_dependence(criterion):
    criterion.update(id=9, title="long-range dependence diagnostic")
    details = []
    ok = True
    for law, kappa, s, t in ((CRW21, 1.0, 1.0, 2.0), (CRW21, 1.5, 1.0, 3.0), (CRW(3, 2.0), 1.2, 1.0, 2.0)):
        vals = np.array([v for _, v in lrd_scan(law, kappa, s, t, range(10, 31))])
        band = vals.max() / vals.min() if vals.min() > 0 else math.inf
        ok &= bool(vals.min() > 0 and band < 10)
        details.append(f"{law}: min {vals.min():.3g}, max/min {band:.3f}")
    criterion["detail"] = "; ".join(details)
    assert ok


def test_10_monte_carlo_shell_sampler(criterion):
    criterion.update(id=10, title="shell-aggregated Monte Carlo vs exact moments")
    t0 = time.perf_counter()
    mean = estimate(ReplicaPlan(CRW21, 5, "mean", 100_000, 1001, radii=(10,)))
    var = estimate(ReplicaPlan(CRW21, 5, "variance", 100_000, 1002, radii=(10,)))
    zs = []
    for s, t in ((1, 1), (1, 2), (1, 4), (2, 2), (2, 4), (4, 4)):
        rep = estimate(ReplicaPlan(CRW21, 2**10, "fluct_cov", 100_000, 2000 + 10 * s + t, times=(s, t)))
        zs.append(rep.z)
    elapsed = time.perf_counter() - t0
    criterion["detail"] = (
        f"mean z={mean.z:+.2f} (|z|<=4); variance {var.estimate:.3f} vs {var.reference:.3f} z={var.z:+.2f} (|z|<=5); "
        f"covariance z in [{min(zs):+.2f}, {max(zs):+.2f}] (|z|<=4); {elapsed:.1f}s"
    )
    assert abs(mean.z) <= 4
    assert abs(var.z) <= 5
    assert max(abs(z) for z in zs) <= 4
    assert elapsed < 120


@pytest.mark.slow
def test_11_box_brute_force_vs_shell(criterion):
    criterion.update(id=11, title="brute-force box vs shell sampler")
    law, n, L, box = CRW21, 2, 2, 10
    brute = box_count_sample(law, n, L, box, 100_000, seed=11)
    shell = count_sample(law, n, L, seed=12, size=100_000)
    shell_box = count_sample(law, n, L, seed=13, size=100_000, max_start_radius=box)
    p_full = two_sample_p(brute, shell)
    p_box = two_sample_p(brute, shell_box)
    outside = 2.0**L * radial_tail(law, n, box)
    criterion["detail"] = (
        f"p(box vs full shell)={p_full:.3f}, p(box vs shell cut at box)={p_box:.3f} (need > 0.001); "
        f"expected walkers from outside the box {outside:.2e}"
    )
    assert p_full > 0.001
    assert p_box > 0.001


def test_12_poisson_model(criterion):
    criterion.update(id=12, title="Poisson initial condition")
    lam, L = 2.0, 8
    exact = all(poisson_count_stats(M, L, lam) == (lam * M**L, lam * M**L) for M in (2, 3, 5))
    mean = estimate(ReplicaPlan(CRW21, 5, "mean", 100_000, 301, radii=(L,), model="poisson", lam=lam))
    var = estimate(ReplicaPlan(CRW21, 5, "variance", 100_000, 302, radii=(L,), model="poisson", lam=lam))
    n = 2**10
    R = TimeShift.for_law(CRW21)
    assert radius_scale(CRW21, n) >= 10
    zs = []
    for s, t in ((1, 1), (1, 2), (2, 4)):
        rep = estimate(ReplicaPlan(CRW21, n, "fluct_cov", 100_000, 400 + s + t, times=(s, t), model="poisson", lam=lam))
        assert rep.reference == pytest.approx(lam * 2.0 ** R(min(s, t)))
        zs.append(rep.z)
    criterion["detail"] = (
        f"exact stats={exact}; mean z={mean.z:+.2f}, variance z={var.z:+.2f}; "
        f"covariance z in [{min(zs):+.2f}, {max(zs):+.2f}] (|z|<=4)"
    )
    assert exact
    assert abs(mean.z) <= 4 and abs(var.z) <= 4
    assert max(abs(z) for z in zs) <= 4


def test_13_independent_increments(criterion):
    criterion.update(id=13, title="independent increments of the critical limit")
    R = TimeShift.log_m(2)
    grid = [2.0**k for k in range(0, 7)]
    paths = gaussian_path_sample(CriticalCov(R), grid, seed=13, size=100_000)
    inc = np.diff(paths, axis=1)
    corr = np.corrcoef(inc, rowvar=False)
    worst = float(np.abs(corr[~np.eye(len(corr), dtype=bool)]).max())
    criterion["detail"] = f"max |corr| between increments {worst:.4f} over {inc.shape[1]} intervals (tol 0.01)"
    assert worst <= 0.01
