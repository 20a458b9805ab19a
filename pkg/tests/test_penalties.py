import math

import pytest

from glmselect.penalties import (
    DEFAULT_THEORY_C,
    PenaltyRule,
    implied_weights,
    log_binom,
    pen_value,
    risk_bound_constant,
    weights_certificate,
)


def test_log_binom():
    assert log_binom(10, 3) == pytest.approx(math.log(120), rel=1e-12)
    assert log_binom(5, 0) == pytest.approx(0.0, abs=1e-12)
    assert log_binom(3, 5) == -math.inf


# --- Pen(k) values ----------------------------------------------------------

def test_aic_bic_ebic():
    assert pen_value(PenaltyRule.aic(), 3) == 3.0
    assert pen_value(PenaltyRule.bic(), 2, n=100) == pytest.approx(math.log(100))
    ebic = pen_value(PenaltyRule.ebic(gamma=0.25), 2, n=100, p=50)
    assert ebic == pytest.approx(math.log(100) + 0.5 * math.log(50), rel=1e-12)


def test_ric_and_klogpk():
    ric = PenaltyRule.ric(C=17.0)
    assert pen_value(ric, 3, p=10) == pytest.approx(17.0 * 3 * math.log(10), rel=1e-12)
    klog = PenaltyRule.klogpk(C=17.0)
    assert pen_value(klog, 2, p=10, r=5) == pytest.approx(
        34.0 * math.log(5 * math.e), rel=1e-12
    )
    # saturation: the ln(pe/k) factor is dropped at k = r
    assert pen_value(klog, 5, p=10, r=5) == pytest.approx(17.0 * 5, rel=1e-12)


def test_klogpk_below_ric_at_saturation():
    klog = PenaltyRule.klogpk()
    ric = PenaltyRule.ric()
    for p in (3, 10, 100, 10_000):
        r = min(p, 8)
        assert pen_value(klog, r, p=p, r=r) < pen_value(ric, r, p=p, r=r)


def test_structural_penalty():
    rule = PenaltyRule.structural(C=17.0, curvature_ratio=2.0)
    # single admissible model per size: max(ln 1, k) = k
    for k in (1, 3, 5):
        assert pen_value(rule, k, r=5, m=1) == pytest.approx(34.0 * k)
    assert pen_value(rule, 2, r=5, m=7) == pytest.approx(17.0 * 2.0 * max(math.log(7), 2.0))
    table = PenaltyRule.structural(m_table=(1, 4, 6))
    assert pen_value(table, 2, r=3) == pytest.approx(DEFAULT_THEORY_C * 2.0)
    with pytest.raises(ValueError, match="m\\(k\\)"):
        pen_value(PenaltyRule.structural(), 2, r=5)


def test_structural_close_to_klogpk_for_complete_selection():
    # with m(k) = C(p,k): ln C(p,k) <= k ln(pe/k), so the structural value is
    # bounded by the k ln(pe/k) form (same C) over a (p, k) grid
    rule_s = PenaltyRule.structural()
    rule_v = PenaltyRule.klogpk()
    for p in (10, 40, 200):
        r = 8
        for k in range(1, r):
            m = math.comb(p, k)
            s = pen_value(rule_s, k, p=p, r=r, m=m)
            v = pen_value(rule_v, k, p=p, r=r)
            assert s <= v + 1e-9
            assert s >= v / math.log(p * math.e)  # within a log factor below


def test_custom_penalty_value():
    rule = PenaltyRule.custom(L=[2.0, 2.0], A=1.5, curvature_ratio=3.0, multiplier=2.0)
    expected = 2.0 * 3.0 * 2.0 * 1 * (1.5 + 2 * math.sqrt(4.0) + 8.0)
    assert pen_value(rule, 1, r=2) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError, match="cover"):
        pen_value(rule, 3, r=3)


def test_none_penalty_and_zero_size():
    assert pen_value(PenaltyRule.none(), 4) == 0.0
    for rule in (PenaltyRule.aic(), PenaltyRule.klogpk(), PenaltyRule.none()):
        assert pen_value(rule, 0, p=10, r=5, n=50) == 0.0


def test_pen_value_range_checks():
    with pytest.raises(ValueError):
        pen_value(PenaltyRule.aic(), -1)
    with pytest.raises(ValueError):
        pen_value(PenaltyRule.aic(), 6, r=5)
    with pytest.raises(ValueError, match="requires context"):
        pen_value(PenaltyRule.bic(), 2)


# --- rule validation --------------------------------------------------------

def test_rule_validation():
    with pytest.raises(ValueError):
        PenaltyRule.ebic(gamma=1.5)
    with pytest.raises(ValueError, match="theory mode"):
        PenaltyRule.klogpk(C=2.0)
    assert PenaltyRule.klogpk(C=2.0, practical=True).practical
    with pytest.raises(ValueError):
        PenaltyRule.ric(C=-1.0, practical=True)
    with pytest.raises(ValueError):
        PenaltyRule.custom(L=[1.0, -1.0], A=2.0)
    with pytest.raises(ValueError):
        PenaltyRule.custom(L=[1.0], A=1.0)
    with pytest.raises(ValueError):
        PenaltyRule.custom(L=[1.0], A=2.0, multiplier=0.5)
    with pytest.raises(ValueError):
        PenaltyRule(kind="AIC", curvature_ratio=0.5)
    with pytest.raises(ValueError):
        PenaltyRule(kind="WAIC")


def test_slack_constants():
    A, ctilde = PenaltyRule.klogpk(C=64.0).slack_constants()
    assert A == ctilde == 2.0
    assert 16.0 * A * ctilde <= 64.0
    with pytest.raises(ValueError):
        PenaltyRule.aic().slack_constants()
    with pytest.raises(ValueError):
        PenaltyRule.klogpk(C=2.0, practical=True).slack_constants()


# --- certificates -----------------------------------------------------------

def test_weight_sum_constant_weights():
    # sum_{k=1}^{4} C(10,k) 10^{-k} + 10^{-5}
    L = [math.log(10)] * 5
    rule = PenaltyRule.custom(L=L, A=2.0)
    cert = weights_certificate(L, 2.0, rule, p=10, r=5)
    expected = sum(math.comb(10, k) * 10.0**-k for k in range(1, 5)) + 1e-5
    assert expected == pytest.approx(1.59101, abs=1e-6)
    assert cert.S == pytest.approx(expected, rel=1e-12)
    assert cert.penalty_ok  # CUSTOM pen is exactly the pointwise bound
    # constant-weight sums are bounded by (1 + e^{-L})^p - 1
    assert cert.S <= (1 + 1.0 / 10) ** 10 - 1 + 1e-12


def test_weight_sum_vanishes_for_huge_weights():
    L = [1e6] * 4
    rule = PenaltyRule.custom(L=L, A=2.0)
    cert = weights_certificate(L, 2.0, rule, p=20, r=4)
    assert cert.S == pytest.approx(0.0, abs=1e-300)


def test_weight_sum_structural_variant():
    L = [1.0, 1.0, 1.0]
    rule = PenaltyRule.custom(L=L, A=2.0)
    m_table = (3, 0, 2)
    cert = weights_certificate(L, 2.0, rule, p=10, r=3, m_table=m_table)
    # m(k) weights the k < r terms; the saturated term is e^{-r L_r} alone
    expected = 3 * math.exp(-1.0) + math.exp(-3.0)
    assert cert.S == pytest.approx(expected, rel=1e-12)


def test_certificate_flags_small_penalty():
    L = [math.log(10)] * 3
    cert = weights_certificate(L, 2.0, PenaltyRule.aic(), p=10, r=3, n=50)
    assert not cert.penalty_ok


def test_theory_klogpk_certifies_itself():
    for p in (10, 100, 10_000):
        r = 6
        rule = PenaltyRule.klogpk()  # C = 17
        L, A = implied_weights(rule, p, r)
        cert = weights_certificate(L, A, rule, p=p, r=r)
        assert cert.penalty_ok
        assert cert.S < 25.0  # finite, essentially p-independent


def test_theory_ric_certifies_itself():
    rule = PenaltyRule.ric(C=20.0)
    L, A = implied_weights(rule, 50, 5)
    cert = weights_certificate(L, A, rule, p=50, r=5)
    assert cert.penalty_ok
    with pytest.raises(ValueError):
        implied_weights(PenaltyRule.aic(), 10, 5)


def test_certificate_validation():
    rule = PenaltyRule.custom(L=[1.0], A=2.0)
    with pytest.raises(ValueError):
        weights_certificate([1.0, 1.0], 2.0, rule, p=5, r=1)
    with pytest.raises(ValueError):
        weights_certificate([-1.0], 2.0, rule, p=5, r=1)
    with pytest.raises(ValueError):
        weights_certificate([1.0], 1.0, rule, p=5, r=1)


def test_risk_bound_constant():
    assert risk_bound_constant(2.0, 1.0, 1.0) == pytest.approx(16.0)
    assert risk_bound_constant(1e12, 1.0, 1.0) == pytest.approx(32.0 / 3.0, rel=1e-9)
    assert risk_bound_constant(3.0, 0.0, 5.0) == 0.0
    with pytest.raises(ValueError):
        risk_bound_constant(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        risk_bound_constant(2.0, -0.1, 1.0)
