"""Admissible-model enumeration under structural constraints and penalized selection.

``select_model`` fits every admissible model and returns the minimizer of

    (1/a) * (sum(b(X beta_M)) - Y' X beta_M) + Pen(|M|)

with deterministic tie-breaking (smaller model first, then lexicographic
indices).  ``greedy_select`` is the forward-selection heuristic: it grows the
model by the best likelihood increment and returns the best penalized
objective along the path, with no optimality contract.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .design import DesignMatrix
from .families import FeasibilityError, NaturalFamily
from .fitter import EMPTY_MODEL, FitResult, ModelSpec, RankDeficientModelError, fit_mle
from .penalties import PenaltyRule, pen_value

DEFAULT_GUARD = 10_000_000

FAMILY_KINDS = ("complete", "ordered", "grouped", "hierarchical", "custom")


class EnumerationBudgetError(RuntimeError):
    """Too many admissible models for exhaustive search; use greedy_select."""


class SelectionFailedError(RuntimeError):
    """Every admissible model failed to fit."""


@dataclass(frozen=True)
class ModelFamily:
    """The admissible-model universe over p predictors, capped at ``max_size``.

    ``grouped`` takes a partition of {0..p-1} into groups selected wholesale;
    ``hierarchical`` takes a parent map (index -> parent index or None) and
    admits subsets closed under it; ``custom`` takes an explicit model list.
    """

    kind: str
    p: int
    max_size: int
    groups: tuple[tuple[int, ...], ...] | None = None
    parents: tuple[int | None, ...] | None = None
    models: tuple[ModelSpec, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown model-family kind {self.kind!r}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not 0 <= self.max_size <= self.p:
            raise ValueError(f"max_size must lie in [0, p], got {self.max_size}")
        if self.kind == "grouped":
            if self.groups is None:
                raise ValueError("grouped family requires groups")
            flat = sorted(i for g in self.groups for i in g)
            if flat != list(range(self.p)):
                raise ValueError("groups must partition {0..p-1}")
        if self.kind == "hierarchical":
            if self.parents is None or len(self.parents) != self.p:
                raise ValueError("hierarchical family requires a length-p parent map")
            for start in range(self.p):
                seen = set()
                j: int | None = start
                while j is not None:
                    if j in seen:
                        raise ValueError(f"parent map has a cycle through {start}")
                    seen.add(j)
                    j = self.parents[j]
        if self.kind == "custom":
            if self.models is None:
                raise ValueError("custom family requires an explicit model list")
            for m in self.models:
                if m.indices and m.indices[-1] >= self.p:
                    raise ValueError(f"custom model {m.indices} out of range for p={self.p}")

    @classmethod
    def complete(cls, p: int, max_size: int) -> "ModelFamily":
        return cls(kind="complete", p=p, max_size=max_size)

    @classmethod
    def ordered(cls, p: int, max_size: int) -> "ModelFamily":
        return cls(kind="ordered", p=p, max_size=max_size)

    @classmethod
    def grouped(cls, groups, max_size: int) -> "ModelFamily":
        groups = tuple(tuple(sorted(int(i) for i in g)) for g in groups)
        p = sum(len(g) for g in groups)
        return cls(kind="grouped", p=p, max_size=max_size, groups=groups)

    @classmethod
    def hierarchical(cls, parents, max_size: int) -> "ModelFamily":
        return cls(kind="hierarchical", p=len(parents), max_size=max_size,
                   parents=tuple(parents))

    @classmethod
    def custom(cls, models, p: int, max_size: int | None = None) -> "ModelFamily":
        models = tuple(m if isinstance(m, ModelSpec) else ModelSpec(tuple(m)) for m in models)
        if max_size is None:
            max_size = max((m.size for m in models), default=0)
        return cls(kind="custom", p=p, max_size=max_size, models=models)

    def count(self, k: int) -> int:
        """m(k): the number of admissible models of size k (without enumerating
        when a closed form exists)."""
        if k > self.max_size:
            return 0
        if k == 0:
            return 1
        if self.kind == "complete":
            return math.comb(self.p, k)
        if self.kind == "ordered":
            return 1
        return len(enumerate_admissible(self, k))

    def m_table(self, r: int) -> tuple[int, ...]:
        """(m(1), ..., m(r)) for penalty certificates."""
        return tuple(self.count(k) for k in range(1, r + 1))


def enumerate_admissible(family: ModelFamily, k: int) -> list[ModelSpec]:
    """All admissible models of size exactly k, in lexicographic order."""
    if not 0 <= k <= family.max_size:
        raise ValueError(f"k={k} out of range 0..{family.max_size}")
    if k == 0:
        return [EMPTY_MODEL]
    p = family.p
    if family.kind == "complete":
        return [ModelSpec(c) for c in itertools.combinations(range(p), k)]
    if family.kind == "ordered":
        return [ModelSpec(tuple(range(k)))]
    if family.kind == "grouped":
        out = []
        ngroups = len(family.groups)
        for size in range(1, ngroups + 1):
            for combo in itertools.combinations(range(ngroups), size):
                cols = tuple(sorted(i for g in combo for i in family.groups[g]))
                if len(cols) == k:
                    out.append(ModelSpec(cols))
        return sorted(out, key=lambda m: m.indices)
    if family.kind == "hierarchical":
        parents = family.parents
        out = []
        for combo in itertools.combinations(range(p), k):
            members = set(combo)
            if all(parents[j] is None or parents[j] in members for j in combo):
                out.append(ModelSpec(combo))
        return out
    # custom
    return sorted((m for m in family.models if m.size == k), key=lambda m: m.indices)


@dataclass(frozen=True)
class SelectionResult:
    """The selected model, its fit, and the minimized penalized objective."""

    model: ModelSpec
    fit: FitResult
    objective: float
    models_evaluated: int
    fit_failures: int
    trace: tuple[tuple[tuple[int, ...], float], ...] | None = None


def objective_value(fam: NaturalFamily, fit: FitResult, pen: float) -> float:
    """The penalized criterion: likelihood deficit over the scale plus Pen(|M|)."""
    return -fit.loglik / fam.a + pen


def _selection_key(obj: float, model: ModelSpec):
    return (obj, model.size, model.indices)


def _fit_candidates(fam, X, Y, candidates, n_threads: int):
    """Fit each candidate model, yielding (model, fit-or-None) in input order."""
    def one(model: ModelSpec):
        try:
            return fit_mle(fam, X, Y, model)
        except (RankDeficientModelError, FeasibilityError, np.linalg.LinAlgError):
            return None

    if n_threads > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            fits = list(pool.map(one, candidates))
    else:
        fits = [one(m) for m in candidates]
    return list(zip(candidates, fits))


def select_model(
    fam: NaturalFamily,
    X: DesignMatrix,
    Y,
    models: ModelFamily,
    rule: PenaltyRule,
    *,
    guard: int = DEFAULT_GUARD,
    n: int | None = None,
    keep_trace: bool = False,
    n_threads: int = 1,
) -> SelectionResult:
    """Exhaustive penalized selection over all admissible models of size <= min(max_size, r).

    The empty model enters with Pen(0) = 0 whenever beta = 0 is feasible.
    Non-convergent or infeasible fits are excluded from contention and counted.
    """
    kmax = min(models.max_size, X.r)
    total = sum(models.count(k) for k in range(0, kmax + 1))
    if total > guard:
        raise EnumerationBudgetError(
            f"{total} admissible models exceed the guard ({guard}); use greedy_select"
        )
    candidates: list[ModelSpec] = []
    for k in range(0, kmax + 1):
        candidates.extend(enumerate_admissible(models, k))
    return _select_from_candidates(
        fam, X, Y, candidates, rule, models=models,
        n=n, keep_trace=keep_trace, n_threads=n_threads,
    )


def _select_from_candidates(
    fam, X, Y, candidates, rule, *, models: ModelFamily,
    n=None, keep_trace=False, n_threads=1,
) -> SelectionResult:
    n_obs = X.n if n is None else n
    pairs = _fit_candidates(fam, X, Y, candidates, n_threads)
    best = None
    best_key = None
    failures = 0
    evaluated = 0
    trace: list[tuple[tuple[int, ...], float]] = []
    for model, fit in pairs:
        if fit is None or not fit.converged:
            failures += 1
            continue
        pen = _pen_for(rule, model.size, models, X, n_obs)
        obj = objective_value(fam, fit, pen)
        evaluated += 1
        if keep_trace:
            trace.append((model.indices, obj))
        key = _selection_key(obj, model)
        if best_key is None or key < best_key:
            best = (model, fit, obj)
            best_key = key
    if best is None:
        raise SelectionFailedError("all admissible model fits failed")
    model, fit, obj = best
    return SelectionResult(
        model=model, fit=fit, objective=obj,
        models_evaluated=evaluated, fit_failures=failures,
        trace=tuple(trace) if keep_trace else None,
    )


def _pen_for(rule: PenaltyRule, k: int, models: ModelFamily, X: DesignMatrix, n_obs: int) -> float:
    m = models.count(k) if rule.kind == "STRUCTURAL" and rule.m_table is None else None
    return pen_value(rule, k, p=models.p, r=X.r, n=n_obs, m=m)


def greedy_path(
    fam: NaturalFamily,
    X: DesignMatrix,
    Y,
    models: ModelFamily,
    *,
    n_threads: int = 1,
) -> list[tuple[ModelSpec, FitResult]]:
    """The forward-selection path: empty model, then best likelihood increments.

    Supports families with incremental growth (complete, ordered, grouped,
    hierarchical).  The path is penalty-independent; selection rules are
    applied to it afterwards.
    """
    if models.kind == "custom":
        raise ValueError("greedy selection needs an incrementally growable model family")
    kmax = min(models.max_size, X.r)
    path: list[tuple[ModelSpec, FitResult]] = []
    current = EMPTY_MODEL
    try:
        path.append((current, fit_mle(fam, X, Y, current)))
    except FeasibilityError:
        pass
    while current.size < kmax:
        increments = _increments(models, current, kmax)
        candidates = [ModelSpec(tuple(sorted(current.indices + inc))) for inc in increments]
        if not candidates:
            break
        pairs = [(m, f) for m, f in _fit_candidates(fam, X, Y, candidates, n_threads)
                 if f is not None and f.converged]
        if not pairs:
            break
        # Best likelihood increment; ties resolved lexicographically.
        model, fit = min(pairs, key=lambda mf: (-mf[1].loglik, mf[0].indices))
        path.append((model, fit))
        current = model
    return path


def _increments(models: ModelFamily, current: ModelSpec, kmax: int) -> list[tuple[int, ...]]:
    member = set(current.indices)
    room = kmax - current.size
    if models.kind == "complete":
        return [(j,) for j in range(models.p) if j not in member]
    if models.kind == "ordered":
        nxt = current.size
        return [(nxt,)] if nxt < models.p else []
    if models.kind == "grouped":
        out = []
        for g in models.groups:
            if g[0] not in member and len(g) <= room:
                out.append(tuple(g))
        return out
    if models.kind == "hierarchical":
        return [(j,) for j in range(models.p)
                if j not in member
                and (models.parents[j] is None or models.parents[j] in member)]
    raise AssertionError(models.kind)


def greedy_select(
    fam: NaturalFamily,
    X: DesignMatrix,
    Y,
    models: ModelFamily,
    rule: PenaltyRule,
    *,
    n: int | None = None,
    keep_trace: bool = False,
    n_threads: int = 1,
) -> SelectionResult:
    """Forward selection: the best penalized objective along the greedy path."""
    path = greedy_path(fam, X, Y, models, n_threads=n_threads)
    if not path:
        raise SelectionFailedError("greedy path is empty (no feasible fits)")
    n_obs = X.n if n is None else n
    best = None
    best_key = None
    trace: list[tuple[tuple[int, ...], float]] = []
    for model, fit in path:
        pen = _pen_for(rule, model.size, models, X, n_obs)
        obj = objective_value(fam, fit, pen)
        if keep_trace:
            trace.append((model.indices, obj))
        key = _selection_key(obj, model)
        if best_key is None or key < best_key:
            best = (model, fit, obj)
            best_key = key
    model, fit, obj = best
    return SelectionResult(
        model=model, fit=fit, objective=obj,
        models_evaluated=len(path), fit_failures=0,
        trace=tuple(trace) if keep_trace else None,
    )
