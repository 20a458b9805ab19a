import math

import numpy as np
import pytest

from glmselect.families import (
    CurvatureBounds,
    DegenerateFamilyError,
    FeasibilityError,
    curvature_bounds,
    kl_divergence,
    make_family,
)


def test_gaussian_closed_forms():
    fam = make_family("gaussian", sigma2=1.0)
    assert fam.b(2.0) == 2.0
    assert fam.b1(2.0) == 2.0
    assert fam.b2(2.0) == 1.0
    assert fam.a == 1.0


def test_bernoulli_closed_forms():
    fam = make_family("bernoulli", c0=3.0)
    assert fam.b(0.0) == pytest.approx(math.log(2.0), rel=1e-15)
    assert fam.b2(0.0) == pytest.approx(0.25, rel=1e-15)
    assert fam.theta_lo == -3.0 and fam.theta_hi == 3.0


def test_poisson_closed_forms():
    fam = make_family("poisson", theta=(-2.0, 2.0))
    assert fam.b(0.0) == 1.0
    assert fam.b2(1.0) == pytest.approx(math.e, rel=1e-15)


@pytest.mark.parametrize("name,kwargs", [
    ("gaussian", {"sigma2": 2.0}),
    ("bernoulli", {"c0": 3.0}),
    ("poisson", {"theta": (-2.0, 2.0)}),
])
def test_derivatives_match_finite_differences(name, kwargs):
    fam = make_family(name, **kwargs)
    lo = fam.theta_lo if np.isfinite(fam.theta_lo) else -4.0
    hi = fam.theta_hi if np.isfinite(fam.theta_hi) else 4.0
    grid = np.linspace(lo + 0.05, hi - 0.05, 41)
    h = 1e-6
    d1 = (fam.b(grid + h) - fam.b(grid - h)) / (2 * h)
    d2 = (fam.b(grid + h) - 2 * fam.b(grid) + fam.b(grid - h)) / h**2
    assert np.allclose(d1, fam.b1(grid), rtol=1e-6, atol=1e-6)
    assert np.allclose(d2, fam.b2(grid), rtol=1e-3, atol=1e-3)


def test_make_family_rejects_bad_inputs():
    with pytest.raises(ValueError):
        make_family("gaussian", sigma2=0.0)
    with pytest.raises(ValueError):
        make_family("bernoulli")
    with pytest.raises(ValueError):
        make_family("poisson")  # unbounded interval: curvature has no finite sup
    with pytest.raises(ValueError):
        make_family("poisson", theta=(-np.inf, 1.0))
    with pytest.raises(ValueError):
        make_family("nope")


def test_curvature_bounds_gaussian():
    cb = curvature_bounds(make_family("gaussian"))
    assert (cb.lower, cb.upper) == (1.0, 1.0)
    assert cb.global_sup_holds
    assert cb.ratio == 1.0


def test_curvature_bounds_bernoulli():
    cb = curvature_bounds(make_family("bernoulli", c0=2.0))
    assert cb.upper == 0.25
    # variance of a logit at the interval endpoint
    assert cb.lower == pytest.approx(math.exp(2) / (1 + math.exp(2)) ** 2, rel=1e-12)
    assert cb.global_sup_holds


def test_curvature_bounds_poisson_interval_only():
    cb = curvature_bounds(make_family("poisson", theta=(-1.0, 1.5)))
    assert cb.lower == pytest.approx(math.exp(-1.0))
    assert cb.upper == pytest.approx(math.exp(1.5))
    assert not cb.global_sup_holds


def test_curvature_bounds_custom_grid():
    fam = make_family(
        "custom",
        b=lambda t: np.cosh(t),
        b1=np.sinh,
        b2=np.cosh,
        a=1.0,
        theta=(-1.0, 2.0),
    )
    cb = curvature_bounds(fam)
    assert cb.grid_points == 10_001
    assert cb.lower == pytest.approx(1.0, abs=1e-6)
    assert cb.upper == pytest.approx(math.cosh(2.0), rel=1e-8)


def test_degenerate_curvature_rejected():
    fam = make_family(
        "custom",
        b=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        b1=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        b2=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        a=1.0,
        theta=(-1.0, 1.0),
    )
    with pytest.raises(DegenerateFamilyError):
        curvature_bounds(fam)
    with pytest.raises(DegenerateFamilyError):
        CurvatureBounds(lower=0.0, upper=1.0, global_sup_holds=True)


def test_kl_identity_is_zero():
    fam = make_family("bernoulli", c0=3.0)
    theta = np.array([0.5, -1.2, 2.0])
    assert kl_divergence(fam, theta, theta) == 0.0


def test_kl_gaussian_is_scaled_squared_distance():
    fam = make_family("gaussian", sigma2=1.0)
    assert kl_divergence(fam, np.array([1.0, 0.0]), np.zeros(2)) == pytest.approx(0.5)
    fam2 = make_family("gaussian", sigma2=2.0)
    t1 = np.array([0.3, -0.7, 1.1])
    t2 = np.array([-0.2, 0.4, 0.9])
    assert kl_divergence(fam2, t1, t2) == pytest.approx(
        np.sum((t1 - t2) ** 2) / 4.0, rel=1e-12
    )


def test_kl_bernoulli_matches_binomial_formula():
    # independent route: p1 ln(p1/p2) + (1-p1) ln((1-p1)/(1-p2))
    p1, p2 = 0.7, 0.3
    fam = make_family("bernoulli", c0=3.0)
    t1 = np.array([math.log(p1 / (1 - p1))])
    t2 = np.array([math.log(p2 / (1 - p2))])
    expected = p1 * math.log(p1 / p2) + (1 - p1) * math.log((1 - p1) / (1 - p2))
    assert expected == pytest.approx(0.33893, abs=2e-5)
    assert kl_divergence(fam, t1, t2) == pytest.approx(expected, rel=1e-12)


def test_kl_positive_iff_different():
    fam = make_family("poisson", theta=(-2.0, 2.0))
    t1 = np.array([0.1, 0.2])
    t2 = np.array([0.1, 0.2 + 1e-6])
    assert kl_divergence(fam, t1, t2) > 0.0


def test_kl_rejects_bad_parameters():
    fam = make_family("bernoulli", c0=1.0)
    with pytest.raises(FeasibilityError):
        kl_divergence(fam, np.array([1.5]), np.array([0.0]))
    with pytest.raises(FeasibilityError):
        kl_divergence(fam, np.array([0.0]), np.array([-2.0]))
    with pytest.raises(ValueError):
        kl_divergence(fam, np.array([0.0, 0.1]), np.array([0.0]))


@pytest.mark.parametrize("name,kwargs,n", [
    ("bernoulli", {"c0": 3.0}, 20),
    ("gaussian", {"sigma2": 2.0}, 20),
])
def test_kl_sandwich_random_pairs(name, kwargs, n):
    fam = make_family(name, **kwargs)
    cb = curvature_bounds(fam)
    rng = np.random.default_rng(17)
    lo = fam.theta_lo if np.isfinite(fam.theta_lo) else -5.0
    hi = fam.theta_hi if np.isfinite(fam.theta_hi) else 5.0
    for _ in range(200):
        t1 = rng.uniform(lo, hi, size=n)
        t2 = rng.uniform(lo, hi, size=n)
        sq = float(np.sum((t1 - t2) ** 2))
        kl = kl_divergence(fam, t1, t2)
        assert kl - cb.lower / (2 * fam.a) * sq >= -1e-12
        assert cb.upper / (2 * fam.a) * sq - kl >= -1e-12


def test_interior_margin():
    bounded = make_family("bernoulli", c0=2.0)
    assert bounded.interior_margin() == pytest.approx(4e-8)
    unbounded = make_family("gaussian")
    assert unbounded.interior_margin() == 1e-8
