"""Natural exponential families: cumulant functions, curvature bounds, KL divergence.

A one-parameter natural exponential family is described by its cumulant
function ``b`` (with first two derivatives ``b1``, ``b2``), a positive scale
``a`` and a closed parameter interval ``[theta_lo, theta_hi]``.  The mean of
an observation at natural parameter ``t`` is ``b1(t)`` and its variance is
``a * b2(t)``; strict convexity of ``b`` (``b2 > 0`` on the interior) is
required throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit


class DegenerateFamilyError(ValueError):
    """The family's variance function collapses (curvature lower bound <= 0)."""


class FeasibilityError(ValueError):
    """A natural-parameter value lies outside the family's interval."""


@dataclass(frozen=True)
class CurvatureBounds:
    """Lower/upper bounds on the variance function ``b2`` over the interval.

    ``global_sup_holds`` records whether ``upper`` bounds ``b2`` on all of the
    real line, or only on the family's own interval.  ``grid_points`` is set
    when the bounds were obtained by grid search rather than in closed form.
    """

    lower: float
    upper: float
    global_sup_holds: bool
    grid_points: int | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.lower <= self.upper < np.inf):
            raise DegenerateFamilyError(
                f"curvature bounds must satisfy 0 < lower <= upper < inf, "
                f"got ({self.lower}, {self.upper})"
            )

    @property
    def ratio(self) -> float:
        """The conditioning ratio upper/lower used by theory-mode penalties."""
        return self.upper / self.lower


@dataclass(frozen=True)
class NaturalFamily:
    """A natural exponential family with scale ``a`` and interval ``[theta_lo, theta_hi]``."""

    name: str
    b: Callable[[np.ndarray], np.ndarray]
    b1: Callable[[np.ndarray], np.ndarray]
    b2: Callable[[np.ndarray], np.ndarray]
    a: float
    theta_lo: float
    theta_hi: float

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise ValueError(f"scale a must be positive, got {self.a}")
        if not self.theta_lo < self.theta_hi:
            raise ValueError(f"empty parameter interval [{self.theta_lo}, {self.theta_hi}]")

    @property
    def theta_width(self) -> float:
        return self.theta_hi - self.theta_lo

    def contains(self, theta: np.ndarray) -> bool:
        """Whether every component lies in the closed interval."""
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.theta_lo) and np.all(theta <= self.theta_hi))

    def require_feasible(self, theta: np.ndarray, what: str = "theta") -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if not self.contains(theta):
            raise FeasibilityError(
                f"{what} has components outside [{self.theta_lo}, {self.theta_hi}]"
            )
        return theta

    def interior_margin(self) -> float:
        """Absolute margin keeping fitted parameters strictly inside the interval."""
        if np.isfinite(self.theta_lo) and np.isfinite(self.theta_hi):
            return 1e-8 * self.theta_width
        return 1e-8


def _bernoulli_b(t: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, t)


def _bernoulli_b2(t: np.ndarray) -> np.ndarray:
    s = expit(t)
    return s * (1.0 - s)


def make_family(
    name: str,
    *,
    sigma2: float | None = None,
    c0: float | None = None,
    theta: tuple[float, float] | None = None,
    a: float | None = None,
    b: Callable | None = None,
    b1: Callable | None = None,
    b2: Callable | None = None,
) -> NaturalFamily:
    """Construct a built-in or custom natural exponential family.

    Built-ins: ``gaussian`` (b = t^2/2, scale sigma2), ``bernoulli``
    (b = ln(1+e^t), interval [-c0, c0]) and ``poisson`` (b = e^t, finite
    interval required since its curvature is unbounded above).  A ``custom``
    family supplies ``b``, ``b1``, ``b2``, ``a`` and a finite interval.
    """
    if name == "gaussian":
        if sigma2 is None:
            sigma2 = 1.0
        if not sigma2 > 0:
            raise ValueError(f"gaussian variance sigma2 must be positive, got {sigma2}")
        lo, hi = theta if theta is not None else (-np.inf, np.inf)
        return NaturalFamily(
            name="gaussian",
            b=lambda t: 0.5 * np.square(t),
            b1=lambda t: np.asarray(t, dtype=float) + 0.0,
            b2=lambda t: np.ones_like(np.asarray(t, dtype=float)),
            a=float(sigma2),
            theta_lo=lo,
            theta_hi=hi,
        )
    if name == "bernoulli":
        if c0 is None:
            raise ValueError("bernoulli requires an interval bound c0 > 0")
        if not c0 > 0:
            raise ValueError(f"bernoulli bound c0 must be positive, got {c0}")
        return NaturalFamily(
            name="bernoulli",
            b=_bernoulli_b,
            b1=expit,
            b2=_bernoulli_b2,
            a=1.0,
            theta_lo=-float(c0),
            theta_hi=float(c0),
        )
    if name == "poisson":
        if theta is None or not (np.isfinite(theta[0]) and np.isfinite(theta[1])):
            raise ValueError("poisson requires a finite interval (its curvature e^t is unbounded)")
        return NaturalFamily(
            name="poisson",
            b=np.exp,
            b1=np.exp,
            b2=np.exp,
            a=1.0,
            theta_lo=float(theta[0]),
            theta_hi=float(theta[1]),
        )
    if name == "custom":
        if b is None or b1 is None or b2 is None or a is None or theta is None:
            raise ValueError("custom family requires b, b1, b2, a and a theta interval")
        return NaturalFamily(
            name="custom", b=b, b1=b1, b2=b2, a=float(a),
            theta_lo=float(theta[0]), theta_hi=float(theta[1]),
        )
    raise ValueError(f"unknown family {name!r}")


# Grid resolution for curvature bounds of custom families: deterministic and
# adequate for smooth cumulants over a finite interval.
CURVATURE_GRID_POINTS = 10_001


def curvature_bounds(fam: NaturalFamily, grid_points: int = CURVATURE_GRID_POINTS) -> CurvatureBounds:
    """Bounds on ``b2`` over the family's interval.

    Closed forms for the built-ins; a dense uniform grid (finite endpoints
    required) for custom families, with the resolution recorded.
    """
    if fam.name == "gaussian":
        return CurvatureBounds(lower=1.0, upper=1.0, global_sup_holds=True)
    if fam.name == "bernoulli":
        c0 = fam.theta_hi
        lower = float(np.exp(c0) / (1.0 + np.exp(c0)) ** 2)
        return CurvatureBounds(lower=lower, upper=0.25, global_sup_holds=True)
    if fam.name == "poisson":
        # e^t is increasing; the sup over the whole real line is infinite, so
        # the upper bound holds on the interval only.
        return CurvatureBounds(
            lower=float(np.exp(fam.theta_lo)),
            upper=float(np.exp(fam.theta_hi)),
            global_sup_holds=False,
        )
    if not (np.isfinite(fam.theta_lo) and np.isfinite(fam.theta_hi)):
        raise ValueError("custom curvature bounds require a finite parameter interval")
    grid = np.linspace(fam.theta_lo, fam.theta_hi, grid_points)
    vals = np.asarray(fam.b2(grid), dtype=float)
    lower = float(vals.min())
    upper = float(vals.max())
    if lower <= 0:
        raise DegenerateFamilyError(f"curvature lower bound {lower} <= 0 for family {fam.name!r}")
    return CurvatureBounds(lower=lower, upper=upper, global_sup_holds=False, grid_points=grid_points)


def kl_divergence(fam: NaturalFamily, theta1: np.ndarray, theta2: np.ndarray) -> float:
    """Kullback-Leibler divergence between the joint laws at two parameter vectors.

    Computed as ``(1/a) * sum(b1(t1)*(t1 - t2) - b(t1) + b(t2))``.  Both
    vectors must lie componentwise in the family's closed interval; out-of-
    interval parameters are rejected rather than clipped.
    """
    t1 = fam.require_feasible(theta1, "theta1")
    t2 = fam.require_feasible(theta2, "theta2")
    if t1.shape != t2.shape:
        raise ValueError(f"parameter vectors have mismatched shapes {t1.shape} vs {t2.shape}")
    val = np.sum(fam.b1(t1) * (t1 - t2) - fam.b(t1) + fam.b(t2)) / fam.a
    return float(val)
