import math

import numpy as np
import pytest
from scipy.special import zeta

from conftest import ALL_FAMILIES
from hierwalk.series import power_tail
from hierwalk.stepdist import (
    CRW,
    Classification,
    Custom,
    JBeta,
    LawParameterError,
    PowerLaw,
    eigen_f,
    kappa_sequence,
    law_from_dict,
    radius_scale,
    step_prob,
    tail,
    walk_params,
)


def test_step_prob_examples():
    assert step_prob(CRW(2, 1), 3) == pytest.approx(1 / 8, abs=1e-16)
    j = np.arange(1, 51)
    assert np.allclose(JBeta(2, 0).prob(j), CRW(2, 1).prob(j), rtol=0, atol=1e-14)
    p = PowerLaw(2, 2.0)
    assert p.normaliser == pytest.approx(6 / math.pi**2, abs=1e-15)
    assert p.normaliser * zeta(2.0) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("beta", [1.1, 1.5, 2.0, 3.7])
def test_powerlaw_tail_vs_hurwitz_zeta(beta):
    law = PowerLaw(3, beta)
    for L in (0, 1, 5, 23, 24, 100, 10_000, 10**6):
        ref = law.normaliser * zeta(beta, L + 1)
        assert float(law.tail(L)) == pytest.approx(ref, rel=1e-13)


def test_power_tail_bound_is_small():
    value, bound = power_tail(2.0, 1000)
    assert bound < 1e-15 * value
    assert value == pytest.approx(zeta(2.0, 1000), rel=1e-14)


def test_parameter_errors():
    with pytest.raises(LawParameterError):
        CRW(2, 2.0)
    with pytest.raises(LawParameterError):
        CRW(2, 0.0)
    with pytest.raises(LawParameterError):
        PowerLaw(2, 1.0)
    with pytest.raises(LawParameterError):
        JBeta(2, -1.0)
    with pytest.raises(LawParameterError):
        Custom(2, [0.5, 0.4])
    with pytest.raises(LawParameterError):
        Custom(2, [1.0]).params()
    with pytest.raises(ValueError):
        step_prob(CRW(2, 1), 0)


def test_tail_examples():
    assert tail(CRW(2, 1), 3) == pytest.approx(1 / 8, abs=1e-16)
    for law in ALL_FAMILIES:
        assert float(law.tail(0)) == 1.0
        L = np.arange(0, 41)
        diff = law.tail(L) - law.tail(L + 1)
        assert np.allclose(diff, law.prob(L + 1), rtol=0, atol=1e-14)


@pytest.mark.parametrize("law", ALL_FAMILIES, ids=str)
def test_partial_sums_plus_tail(law):
    for J in range(1, 61):
        assert math.fsum(law.prob(np.arange(1, J + 1))) + float(law.tail(J)) == pytest.approx(1.0, abs=1e-12)
    assert (law.prob(np.arange(1, 200)) >= 0).all()


def test_eigen_f_examples():
    law = CRW(2, 1)
    assert eigen_f(law, 1) == pytest.approx(-0.5, abs=1e-16)
    assert eigen_f(law, 2) == pytest.approx(0.25, abs=1e-16)
    assert eigen_f(law, 40) > 0.99
    for law in ALL_FAMILIES:
        k = np.arange(1, 80)
        f = law.eigen_f(k)
        assert (f >= -1).all() and (f <= 1).all()
        # f_k < 1 for infinite support; the gap is carried separately
        if not isinstance(law, Custom):
            assert (law.one_minus_f(k) > 0).all()


def test_walk_params_examples():
    p = walk_params(CRW(2, 1))
    assert (p.a, p.b, p.theta, p.gamma) == (0.5, 1.5, 1.0, 0.0)
    assert p.classification is Classification.RECURRENT
    p = walk_params(CRW(3, 2))
    assert p.gamma == pytest.approx(math.log(2) / math.log(1.5), rel=1e-14)
    assert p.gamma == pytest.approx(1.70951, abs=1e-5)
    assert p.classification is Classification.TRANSIENT
    p = walk_params(PowerLaw(2, 2.0))
    assert p.a == 1.0 and math.isinf(p.gamma) and math.isinf(p.theta)
    assert p.classification is Classification.TRANSIENT


def test_classification_table():
    assert walk_params(CRW(3, 0.5)).classification is Classification.RECURRENT
    assert walk_params(CRW(2, 1.5)).classification is Classification.TRANSIENT
    assert walk_params(JBeta(2, 1.0)).classification is Classification.RECURRENT
    assert walk_params(JBeta(2, 1.5)).classification is Classification.TRANSIENT
    assert walk_params(Custom(2, [0.5, 0.5], a=0.5)).classification is Classification.CRITICAL
    for law in ALL_FAMILIES:
        p = law.params()
        assert p.b == pytest.approx((law.order - p.a) / (law.order - 1))
        if p.a < 1:
            assert p.gamma == pytest.approx(p.theta - 1)


def test_step_ratio_limit():
    for law in (CRW(2, 1), CRW(3, 2), CRW(5, 0.5), JBeta(3, 0), JBeta(2, 0)):
        r = law.prob(np.array([200, 201]))
        assert abs(r[1] / r[0] - law.ratio_limit()) < 1e-3
    # for beta > 0 the ratio a(1+1/j)^beta approaches a only at rate beta*a/j
    for beta in (1.0, 2.0):
        law = JBeta(2, beta)
        r = law.prob(np.array([200, 201]))
        assert r[1] / r[0] - 0.5 == pytest.approx(0.5 * ((201 / 200) ** beta - 1), rel=1e-10)
    r = PowerLaw(2, 2.0).prob(np.array([200, 201]))
    assert abs(r[1] / r[0] - 1) < 2e-2


def test_next_step_over_tail():
    for law in (CRW(2, 1), CRW(3, 2), JBeta(2, 1), JBeta(3, 2)):
        a = law.ratio_limit()
        assert abs(float(law.prob(201)) / float(law.tail(200)) - (1 - a)) < 1e-2


def test_radius_scale_examples():
    law = CRW(2, 1)
    assert radius_scale(law, 8) == 3
    for other in ALL_FAMILIES:
        assert radius_scale(other, 1) == 0
    for i in range(1, 31):
        n = 2**i
        L = radius_scale(law, n)
        assert 1 <= n * float(law.tail(L)) <= 2 + 0.01


@pytest.mark.parametrize("law", ALL_FAMILIES[:-1] + [CRW(3, 0.7), JBeta(2, 2.0)], ids=str)
def test_radius_scale_definition(law):
    for n in [1, 2, 3, 7, 100, 12345, 10**6, 2**40]:
        L = radius_scale(law, n)
        assert float(law.tail(L)) >= 1 / n > float(law.tail(L + 1))


def test_radius_scale_closed_form():
    for law in (CRW(2, 1), CRW(3, 2), CRW(5, 0.5), CRW(2, 1.5)):
        for n in [1, 2, 5, 8, 9, 1000, 2**20, 3**15]:
            assert radius_scale(law, n) == law.radius_scale_closed_form(n)


def test_radius_scale_growth():
    n = 2**40
    for law in (CRW(2, 1), CRW(3, 2), CRW(5, 0.5), JBeta(3, 0)):
        ratio = radius_scale(law, n) / (math.log(n) / math.log(1 / law.ratio_limit()))
        assert 0.95 <= ratio <= 1.05
    # with j^beta corrections the log ratio converges only logarithmically
    law = JBeta(2, 1.0)
    n = 2**1000
    ratio = radius_scale(law, n) / (math.log(n) / math.log(2))
    assert 0.95 <= ratio <= 1.05


def test_kappa_sequence_examples():
    law = CRW(2, 1)
    for i in range(0, 30):
        n = kappa_sequence(law, 1.0, i)
        assert n == 2**i
        assert n * float(law.tail(radius_scale(law, n))) == 1.0
    n = kappa_sequence(law, 1.5, 10)
    assert n == 1536
    assert n * float(law.tail(radius_scale(law, n))) == 1.5
    law = JBeta(2, 1.0)
    n = kappa_sequence(law, 1.5, 20)
    assert abs(n * float(law.tail(radius_scale(law, n))) - 1.5) < 1e-3


def test_kappa_sequence_errors():
    with pytest.raises(LawParameterError):
        kappa_sequence(CRW(2, 1), 2.0, 5)
    with pytest.raises(LawParameterError):
        kappa_sequence(CRW(2, 1), 0.5, 5)
    with pytest.raises(LawParameterError):
        kappa_sequence(PowerLaw(2, 2), 1.0, 5)


@pytest.mark.parametrize("law", ALL_FAMILIES, ids=str)
def test_json_roundtrip(law):
    assert law_from_dict(law.to_dict()) == law


def test_json_rejects_unknown_keys():
    import jsonschema

    with pytest.raises(jsonschema.ValidationError):
        law_from_dict({"family": "crw", "M": 2, "c": 1, "extra": 0})
    with pytest.raises(jsonschema.ValidationError):
        law_from_dict({"family": "crw", "M": 2})
