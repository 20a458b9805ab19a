import math

import numpy as np
import pytest

from glmselect.design import DesignMatrix
from glmselect.families import FeasibilityError, make_family
from glmselect.fitter import (
    EMPTY_MODEL,
    ModelSpec,
    RankDeficientModelError,
    fit_mle,
    log_likelihood,
)

GAUSS = make_family("gaussian", sigma2=1.0)
BERN = make_family("bernoulli", c0=3.0)


def test_model_spec_validation():
    assert ModelSpec((0, 2, 5)).size == 3
    assert EMPTY_MODEL.size == 0
    with pytest.raises(ValueError):
        ModelSpec((2, 1))
    with pytest.raises(ValueError):
        ModelSpec((1, 1))
    with pytest.raises(ValueError):
        ModelSpec((-1, 0))


def test_log_likelihood_closed_forms():
    X = DesignMatrix.from_array(np.eye(4))
    Y = np.array([1.0, 0.0, 1.0, 1.0])
    assert log_likelihood(BERN, X, Y, np.zeros(4)) == pytest.approx(-4 * math.log(2))
    assert log_likelihood(GAUSS, X, Y, np.zeros(4)) == 0.0
    X1 = DesignMatrix.from_array(np.array([[1.0]]))
    val = log_likelihood(BERN, X1, np.array([1.0]), np.array([1.0]))
    assert val == pytest.approx(1.0 - math.log(1 + math.e), rel=1e-12)


def test_log_likelihood_rejects_infeasible():
    X = DesignMatrix.from_array(np.array([[2.0]]))
    with pytest.raises(FeasibilityError):
        log_likelihood(BERN, X, np.array([1.0]), np.array([2.0]))  # theta = 4 > 3


def test_gaussian_identity_design_recovers_response():
    rng = np.random.default_rng(0)
    Y = rng.normal(size=8)
    X = DesignMatrix.from_array(np.eye(8))
    fit = fit_mle(GAUSS, X, Y, ModelSpec(tuple(range(8))))
    assert fit.converged
    assert np.allclose(fit.beta, Y, atol=1e-12)
    assert not fit.boundary_active


def test_gaussian_matches_least_squares():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n, k = 20, 4
        Xm = rng.normal(size=(n, k))
        Y = rng.normal(size=n)
        X = DesignMatrix.from_array(Xm)
        fit = fit_mle(GAUSS, X, Y, ModelSpec(tuple(range(k))))
        beta_ls = np.linalg.lstsq(Xm, Y, rcond=None)[0]
        assert np.allclose(fit.beta[:k], beta_ls, atol=1e-10)


def _golden_section_max(f, lo, hi, iters=200):
    phi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    for _ in range(iters):
        if f(c) > f(d):
            b, d = d, c
            c = b - phi * (b - a)
        else:
            a, c = c, d
            d = a + phi * (b - a)
    return 0.5 * (a + b)


def test_bernoulli_intercept_only_matches_golden_section():
    n = 10
    Y = np.array([1, 1, 1, 1, 1, 1, 0, 0, 0, 0], dtype=float)
    X = DesignMatrix.from_array(np.ones((n, 1)))
    fit = fit_mle(BERN, X, Y, ModelSpec((0,)))

    def obj(t):
        return float(Y.sum() * t - n * np.logaddexp(0.0, t))

    t_star = _golden_section_max(obj, -3.0, 3.0)
    assert t_star == pytest.approx(math.log(0.6 / 0.4), abs=1e-6)
    assert fit.beta[0] == pytest.approx(t_star, abs=1e-6)
    assert fit.loglik == pytest.approx(obj(t_star), abs=1e-10)


def test_separated_data_lands_on_boundary():
    fam = make_family("bernoulli", c0=2.0)
    X = DesignMatrix.from_array(np.array([[1.0], [1.0], [-1.0], [-1.0]]))
    Y = np.array([1.0, 1.0, 0.0, 0.0])
    fit = fit_mle(fam, X, Y, ModelSpec((0,)))
    assert fit.converged
    assert fit.boundary_active
    # the unconstrained optimum diverges; the box optimum sits on the margin
    eps = fam.interior_margin()
    assert np.all(np.abs(np.abs(fit.theta_hat) - (2.0 - eps)) < 2 * eps)
    assert fam.contains(fit.theta_hat)


def test_boundary_solution_beats_interior_probes():
    # partial separation: the constrained optimum has some coordinates on the
    # wall; no feasible probe may do better
    fam = make_family("bernoulli", c0=2.0)
    rng = np.random.default_rng(23)
    Xm = rng.normal(size=(30, 3))
    theta = np.clip(Xm @ np.array([3.0, -2.0, 1.0]), -1.95, 1.95)
    Y = (rng.random(30) < fam.b1(theta)).astype(float)
    X = DesignMatrix.from_array(Xm)
    fit = fit_mle(fam, X, Y, ModelSpec((0, 1, 2)))
    assert fit.converged
    for _ in range(100):
        probe = fit.beta[:3] + rng.normal(scale=1e-3, size=3)
        th = Xm @ probe
        if not fam.contains(th):
            continue
        assert float(Y @ th - np.sum(fam.b(th))) <= fit.loglik + 1e-10


def test_loglik_consistent_with_recomputation():
    rng = np.random.default_rng(5)
    Xm = rng.normal(size=(25, 3))
    theta = np.clip(Xm @ np.array([0.5, -0.3, 0.2]), -2.9, 2.9)
    Y = (rng.random(25) < BERN.b1(theta)).astype(float)
    X = DesignMatrix.from_array(Xm)
    fit = fit_mle(BERN, X, Y, ModelSpec((0, 1, 2)))
    recomputed = log_likelihood(BERN, X, Y, fit.beta)
    assert fit.loglik == pytest.approx(recomputed, rel=1e-10)
    assert set(np.nonzero(fit.beta)[0]).issubset({0, 1, 2})


def test_empty_model_closed_form():
    Y = np.array([1.0, 0.0, 1.0])
    X = DesignMatrix.from_array(np.eye(3))
    fit = fit_mle(BERN, X, Y, EMPTY_MODEL)
    assert fit.loglik == pytest.approx(-3 * math.log(2))
    assert fit.converged and fit.iterations == 0
    assert np.all(fit.beta == 0.0)


def test_empty_model_infeasible_when_zero_outside_interval():
    fam = make_family("poisson", theta=(1.0, 2.0))
    X = DesignMatrix.from_array(np.ones((4, 1)))
    with pytest.raises(FeasibilityError):
        fit_mle(fam, X, np.ones(4), EMPTY_MODEL)


def test_intercept_shift_start_for_offset_interval():
    # 0 outside the interval: the constant column provides a feasible start
    fam = make_family("poisson", theta=(0.5, 2.0))
    rng = np.random.default_rng(9)
    X = DesignMatrix.from_array(np.ones((12, 1)))
    Y = rng.poisson(math.exp(1.0), size=12).astype(float)
    fit = fit_mle(fam, X, Y, ModelSpec((0,)))
    assert fit.converged
    assert fam.contains(fit.theta_hat)
    mean_target = max(math.exp(0.5), min(math.exp(2.0), Y.mean()))
    assert math.exp(fit.beta[0]) == pytest.approx(mean_target, rel=1e-4)


def test_no_intercept_no_feasible_start():
    fam = make_family("poisson", theta=(0.5, 2.0))
    X = DesignMatrix.from_array(np.array([[1.0], [-1.0]]))
    with pytest.raises(FeasibilityError):
        fit_mle(fam, X, np.array([1.0, 1.0]), ModelSpec((0,)))


def test_fit_mle_input_validation():
    X = DesignMatrix.from_array(np.eye(4))
    Y = np.zeros(4)
    with pytest.raises(ValueError, match="shape"):
        fit_mle(GAUSS, X, np.zeros(5), ModelSpec((0,)))
    with pytest.raises(ValueError, match="0/1"):
        fit_mle(BERN, X, np.array([0.0, 2.0, 1.0, 0.0]), ModelSpec((0,)))
    with pytest.raises(ValueError, match="out of range"):
        fit_mle(GAUSS, X, Y, ModelSpec((0, 7)))
    dup = DesignMatrix.from_array(np.column_stack([np.eye(4)[:, :2], np.eye(4)[:, 0]]))
    with pytest.raises(RankDeficientModelError):
        fit_mle(GAUSS, dup, Y, ModelSpec((0, 2)))


def test_model_larger_than_rank_rejected():
    X = DesignMatrix.from_array(np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0]]))
    assert X.r == 1
    with pytest.raises(ValueError, match="rank"):
        fit_mle(GAUSS, X, np.zeros(2), ModelSpec((0, 1)))


def test_flat_direction_resolved_deterministically():
    # duplicated information via scaling keeps the restricted design full rank
    # but nearly flat; two runs must agree bit for bit
    rng = np.random.default_rng(33)
    Xm = rng.normal(size=(20, 2))
    Xm[:, 1] = Xm[:, 0] + 1e-6 * rng.normal(size=20)
    Y = rng.normal(size=20)
    X = DesignMatrix.from_array(Xm)
    f1 = fit_mle(GAUSS, X, Y, ModelSpec((0, 1)))
    f2 = fit_mle(GAUSS, X, Y, ModelSpec((0, 1)))
    assert np.array_equal(f1.beta, f2.beta)
    assert f1.loglik == f2.loglik
