"""Design matrix ingestion, rank, and k-sparse extreme eigenvalue diagnostics."""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_SUBSET_BUDGET = 1_000_000


@dataclass(frozen=True)
class DesignMatrix:
    """A deterministic n x p design with cached rank.

    Columns that are identically zero are rejected at ingestion.  The stored
    array is read-only so instances can be shared across workers.
    """

    X: np.ndarray = field(repr=False)
    n: int
    p: int
    r: int
    rank_tol: float

    @classmethod
    def from_array(cls, X, rank_tol: float | None = None) -> "DesignMatrix":
        X = np.array(X, dtype=float)
        if X.ndim != 2 or X.size == 0:
            raise ValueError("design matrix must be a nonempty 2-d array")
        if not np.all(np.isfinite(X)):
            raise ValueError("design matrix contains non-finite entries")
        zero_cols = np.where(~X.any(axis=0))[0]
        if zero_cols.size:
            raise ValueError(f"design matrix has all-zero columns at {zero_cols.tolist()}")
        n, p = X.shape
        r, tol = _rank_and_tol(X, rank_tol)
        X.setflags(write=False)
        return cls(X=X, n=n, p=p, r=r, rank_tol=tol)

    @classmethod
    def from_csv(cls, path, has_header: bool = False, rank_tol: float | None = None) -> "DesignMatrix":
        X, _ = read_csv_matrix(path, has_header=has_header)
        return cls.from_array(X, rank_tol=rank_tol)

    @property
    def gram(self) -> np.ndarray:
        return self.X.T @ self.X


def read_csv_matrix(path, has_header: bool = False):
    """Read a numeric CSV (rows = observations) into an array plus header names."""
    rows = []
    header = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for i, row in enumerate(reader):
            if not row:
                continue
            if i == 0 and has_header:
                header = [c.strip() for c in row]
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValueError(f"{path}: non-numeric value on line {i + 1}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged rows with widths {sorted(widths)}")
    return np.array(rows, dtype=float), header


def rank_of(X, tol: float | None = None) -> int:
    """Number of singular values above ``tol`` (default: max(n,p)*eps*sigma_max)."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ValueError("empty matrix has no rank")
    r, _ = _rank_and_tol(X, tol)
    return r


def _rank_and_tol(X: np.ndarray, tol: float | None):
    s = np.linalg.svd(X, compute_uv=False)
    if tol is None:
        tol = max(X.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    return int(np.sum(s > tol)), float(tol)


@dataclass(frozen=True)
class SparseSpectrum:
    """Extreme eigenvalues over k-column Gram submatrices of the design.

    When ``exhaustive`` is false the values come from uniform subset sampling:
    ``phi_min`` is then an upper estimate and ``phi_max`` a lower estimate of
    the true extremes.
    """

    k: int
    phi_min: float
    phi_max: float
    tau: float
    exhaustive: bool
    subsets_evaluated: int


@dataclass(frozen=True)
class CollinearityVerdict:
    tau_r: float
    weakly_collinear: bool
    exhaustive: bool


def sparse_spectrum(
    dm: DesignMatrix,
    k: int,
    budget: int = DEFAULT_SUBSET_BUDGET,
    seed: int = 0,
) -> SparseSpectrum:
    """Extreme eigenvalues of all (or ``budget`` sampled) k x k Gram submatrices."""
    if not 1 <= k <= dm.r:
        raise ValueError(f"k must satisfy 1 <= k <= rank ({dm.r}), got {k}")
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    gram = dm.gram
    total = math.comb(dm.p, k)
    exhaustive = total <= budget
    if exhaustive:
        subsets = itertools.combinations(range(dm.p), k)
        count = total
    else:
        rng = np.random.default_rng(seed)
        subsets = (tuple(np.sort(rng.choice(dm.p, size=k, replace=False))) for _ in range(budget))
        count = budget
    phi_min = np.inf
    phi_max = -np.inf
    for idx in subsets:
        sub = gram[np.ix_(idx, idx)]
        if k == 1:
            lo = hi = sub[0, 0]
        else:
            eig = np.linalg.eigvalsh(sub)
            lo, hi = eig[0], eig[-1]
        phi_min = min(phi_min, lo)
        phi_max = max(phi_max, hi)
    phi_min = float(max(phi_min, 0.0))  # clip eigvalsh round-off on singular subsets
    phi_max = float(phi_max)
    tau = phi_min / phi_max if phi_max > 0 else 0.0
    return SparseSpectrum(
        k=k, phi_min=phi_min, phi_max=phi_max, tau=float(tau),
        exhaustive=exhaustive, subsets_evaluated=count,
    )


def weak_collinearity(
    dm: DesignMatrix,
    c: float,
    budget: int = DEFAULT_SUBSET_BUDGET,
    seed: int = 0,
) -> CollinearityVerdict:
    """Whether the rank-sparse eigenvalue ratio tau[r] stays above ``c``."""
    if not c > 0:
        raise ValueError(f"collinearity threshold c must be positive, got {c}")
    spec = sparse_spectrum(dm, dm.r, budget=budget, seed=seed)
    return CollinearityVerdict(
        tau_r=spec.tau,
        weakly_collinear=bool(spec.tau >= c),
        exhaustive=spec.exhaustive,
    )


def check_r_subset_independence(dm: DesignMatrix, trials: int = 200, seed: int = 0) -> bool:
    """Probabilistic check that random r-column subsets have full rank.

    Exhaustive verification is combinatorial, so failures are surfaced as a
    warning rather than an error.  Returns True when no deficient subset was
    found among the sampled trials.
    """
    if dm.r == dm.p:
        ok = rank_of(dm.X, dm.rank_tol) == dm.r
        if not ok:
            warnings.warn("design matrix rank check failed", RuntimeWarning)
        return ok
    rng = np.random.default_rng(seed)
    total = math.comb(dm.p, dm.r)
    if total <= trials:
        subsets = itertools.combinations(range(dm.p), dm.r)
    else:
        subsets = (np.sort(rng.choice(dm.p, size=dm.r, replace=False)) for _ in range(trials))
    for idx in subsets:
        if rank_of(dm.X[:, list(idx)], dm.rank_tol) < dm.r:
            warnings.warn(
                f"found rank-deficient {dm.r}-column subset {list(idx)}; "
                "the any-r-columns-independent assumption fails",
                RuntimeWarning,
            )
            return False
    return True
