"""Constrained maximum-likelihood fitting for a fixed predictor subset.

The per-model MLE maximizes the concave kernel ``Y' X b - sum(b(X b))`` over
coefficient vectors supported on the model whose linear predictors stay inside
the family's parameter interval.  Damped Newton steps with the IRLS weights
``b2(theta)`` are shortened to the feasible box and halved until the objective
is nondecreasing.  When the box binds (the Newton path is blocked at the
boundary), the solve finishes with a log-barrier continuation so that the
constrained optimum is reached rather than the first blocked point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .design import DesignMatrix, rank_of
from .families import FeasibilityError, NaturalFamily


class RankDeficientModelError(ValueError):
    """The design restricted to the model does not have full column rank."""


@dataclass(frozen=True)
class ModelSpec:
    """A candidate predictor subset: strictly increasing 0-based column indices."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if any(i < 0 for i in idx):
            raise ValueError(f"negative predictor index in {idx}")
        if list(idx) != sorted(set(idx)):
            raise ValueError(f"model indices must be strictly increasing, got {idx}")

    @property
    def size(self) -> int:
        return len(self.indices)


EMPTY_MODEL = ModelSpec(())


@dataclass(frozen=True)
class FitResult:
    """MLE for one model: coefficients, fitted natural parameters, diagnostics.

    ``loglik`` is the a-scaled likelihood kernel ``Y' theta - sum(b(theta))``
    (the penalized criterion divides it by the family scale).
    """

    model: ModelSpec
    beta: np.ndarray = field(repr=False)
    theta_hat: np.ndarray = field(repr=False)
    loglik: float
    iterations: int
    converged: bool
    boundary_active: bool
    grad_norm: float


def log_likelihood(fam: NaturalFamily, X, Y, beta) -> float:
    """The likelihood kernel ``Y'(X beta) - sum(b(X beta))``; requires a feasible beta."""
    Xarr = X.X if isinstance(X, DesignMatrix) else np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    Y = np.asarray(Y, dtype=float)
    theta = Xarr @ beta
    fam.require_feasible(theta, "X @ beta")
    return float(Y @ theta - np.sum(fam.b(theta)))


def _feasible_start(fam: NaturalFamily, Xm: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """A certified feasible starting coefficient vector for the restricted design."""
    k = Xm.shape[1]
    if lo < 0.0 < hi:
        return np.zeros(k)
    # 0 is outside the (shrunken) interval: shift via a constant column if one exists.
    mid = 0.5 * (lo + hi)
    for j in range(k):
        col = Xm[:, j]
        if np.ptp(col) == 0.0 and col[0] != 0.0:
            start = np.zeros(k)
            start[j] = mid / col[0]
            return start
    raise FeasibilityError(
        "no feasible starting point: 0 is outside the parameter interval and "
        "the model has no intercept (constant) column"
    )


def _max_feasible_step(theta: np.ndarray, dtheta: np.ndarray, lo: float, hi: float) -> float:
    """Largest step in [0, 1] keeping ``theta + alpha * dtheta`` inside [lo, hi]."""
    alpha = 1.0
    pos = dtheta > 0
    if np.any(pos):
        alpha = min(alpha, float(np.min((hi - theta[pos]) / dtheta[pos])))
    neg = dtheta < 0
    if np.any(neg):
        alpha = min(alpha, float(np.min((lo - theta[neg]) / dtheta[neg])))
    return max(alpha, 0.0)


def _barrier_refine(
    fam: NaturalFamily,
    Xm: np.ndarray,
    Y: np.ndarray,
    coef: np.ndarray,
    start: np.ndarray,
    lo: float,
    hi: float,
    *,
    tol_obj: float,
    max_halvings: int,
    mu0: float = 1.0,
    mu_min: float = 1e-11,
    inner_max: int = 25,
):
    """Log-barrier continuation for box-active solutions.

    Maximizes the kernel plus ``mu * sum(ln(hi - theta) + ln(theta - lo))``
    (finite sides only) for a decreasing barrier weight, so the iterate can
    slide along active constraints instead of stopping at the first blocked
    point.  The returned objective is the plain kernel.
    """
    has_lo, has_hi = np.isfinite(lo), np.isfinite(hi)

    def barrier_obj(theta):
        val = float(Y @ theta - np.sum(fam.b(theta)))
        if has_lo:
            val += mu * float(np.sum(np.log(theta - lo)))
        if has_hi:
            val += mu * float(np.sum(np.log(hi - theta)))
        return val

    # Pull strictly inside the box (the fast phase may sit exactly on a wall).
    coef = 0.999 * coef + 0.001 * start
    theta = Xm @ coef
    mu = mu0
    iterations = 0
    converged = False
    while True:
        bobj = barrier_obj(theta)
        for _ in range(inner_max):
            iterations += 1
            g = Y - fam.b1(theta)
            w = fam.b2(theta)
            if has_lo:
                g = g + mu / (theta - lo)
                w = w + mu / np.square(theta - lo)
            if has_hi:
                g = g - mu / (hi - theta)
                w = w + mu / np.square(hi - theta)
            step = np.linalg.lstsq(Xm.T @ (Xm * w[:, None]), Xm.T @ g, rcond=None)[0]
            dtheta = Xm @ step
            if not np.any(dtheta):
                break
            alpha = min(1.0, 0.995 * _max_feasible_step(theta, dtheta, lo, hi))
            moved = False
            for _ in range(max_halvings):
                if alpha <= 0.0:
                    break
                cand = theta + alpha * dtheta
                cand_bobj = barrier_obj(cand)
                if cand_bobj >= bobj:
                    moved = True
                    break
                alpha *= 0.5
            if not moved:
                break
            coef = coef + alpha * step
            theta = cand
            delta = cand_bobj - bobj
            bobj = cand_bobj
            if delta <= tol_obj * max(1.0, abs(bobj)):
                break
        if mu <= mu_min:
            converged = True
            break
        mu *= 0.1
    obj = float(Y @ theta - np.sum(fam.b(theta)))
    return coef, theta, obj, iterations, converged


def fit_mle(
    fam: NaturalFamily,
    X: DesignMatrix,
    Y,
    model: ModelSpec,
    *,
    tol_obj: float = 1e-10,
    tol_grad: float = 1e-8,
    max_iter: int = 100,
    max_halvings: int = 50,
) -> FitResult:
    """Constrained MLE for ``model`` via damped Newton / IRLS.

    Raises ``RankDeficientModelError`` when the restricted design loses rank
    and ``FeasibilityError`` when no feasible start exists.  A non-converged
    fit is still returned, flagged with ``converged=False``.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (X.n,):
        raise ValueError(f"response has shape {Y.shape}, expected ({X.n},)")
    if fam.name == "bernoulli" and not np.all((Y == 0.0) | (Y == 1.0)):
        raise ValueError("bernoulli responses must be 0/1")
    if model.size > X.r:
        raise ValueError(f"model size {model.size} exceeds design rank {X.r}")
    if model.indices and model.indices[-1] >= X.p:
        raise ValueError(f"model index {model.indices[-1]} out of range for p={X.p}")

    eps = fam.interior_margin()
    lo = fam.theta_lo + eps if np.isfinite(fam.theta_lo) else -np.inf
    hi = fam.theta_hi - eps if np.isfinite(fam.theta_hi) else np.inf

    if model.size == 0:
        if not lo < 0.0 < hi:
            raise FeasibilityError("empty model is infeasible: 0 outside the parameter interval")
        theta = np.zeros(X.n)
        ll = float(Y @ theta - np.sum(fam.b(theta)))
        return FitResult(
            model=model, beta=np.zeros(X.p), theta_hat=theta, loglik=ll,
            iterations=0, converged=True, boundary_active=False, grad_norm=0.0,
        )

    idx = list(model.indices)
    Xm = X.X[:, idx]
    if rank_of(Xm) < model.size:
        raise RankDeficientModelError(f"columns {idx} are rank deficient")

    start = _feasible_start(fam, Xm, lo, hi)
    coef = start
    theta = Xm @ coef
    obj = float(Y @ theta - np.sum(fam.b(theta)))
    converged = False
    blocked = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = Xm.T @ (Y - fam.b1(theta))
        w = fam.b2(theta)
        hess = Xm.T @ (Xm * w[:, None])
        # Minimal-norm solve keeps flat likelihood directions deterministic.
        step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        dtheta = Xm @ step
        alpha_cap = _max_feasible_step(theta, dtheta, lo, hi) if np.any(dtheta) else 0.0
        moved = False
        if alpha_cap > 0.0:
            alpha = alpha_cap
            for _ in range(max_halvings):
                cand = theta + alpha * dtheta
                cand_obj = float(Y @ cand - np.sum(fam.b(cand)))
                if cand_obj >= obj:
                    moved = True
                    break
                alpha *= 0.5
        if moved:
            coef = coef + alpha * step
            theta = cand
            delta = cand_obj - obj
            obj = cand_obj
            if delta <= tol_obj * max(1.0, abs(obj)):
                converged = True
                blocked = alpha_cap < 1.0
        else:
            # The Newton path is blocked at the box boundary.
            converged = True
            blocked = True
        if converged:
            break
    if blocked and (np.isfinite(lo) or np.isfinite(hi)):
        # An active box constraint stopped the Newton path short of the
        # constrained optimum; finish with log-barrier continuation.
        coef, theta, obj, extra_it, converged = _barrier_refine(
            fam, Xm, Y, coef, start, lo, hi,
            tol_obj=tol_obj, max_halvings=max_halvings,
        )
        it += extra_it
    grad_final = Xm.T @ (Y - fam.b1(theta))
    grad_norm = float(np.linalg.norm(grad_final))

    boundary = False
    if np.isfinite(fam.theta_lo):
        boundary = boundary or bool(np.any(theta <= fam.theta_lo + 2.0 * eps))
    if np.isfinite(fam.theta_hi):
        boundary = boundary or bool(np.any(theta >= fam.theta_hi - 2.0 * eps))

    beta = np.zeros(X.p)
    beta[idx] = coef
    return FitResult(
        model=model, beta=beta, theta_hat=theta, loglik=obj,
        iterations=it, converged=converged, boundary_active=boundary,
        grad_norm=grad_norm,
    )
