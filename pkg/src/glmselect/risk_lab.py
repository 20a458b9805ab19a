"""Monte-Carlo KL-risk estimation, rate checks, lower-bound values, packing sets.

All randomness is counter-seeded: replicate ``i`` of a run with master seed
``s`` uses ``default_rng([s, i])``, so serial and thread-parallel executions
produce bit-identical reports (per-replicate results are stored by index and
reduced in a fixed order).
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .design import DesignMatrix
from .families import FeasibilityError, NaturalFamily, curvature_bounds, kl_divergence
from .fitter import ModelSpec
from .penalties import PenaltyRule, WeightCertificate, pen_value, risk_bound_constant
from .selector import (
    EnumerationBudgetError,
    ModelFamily,
    _fit_candidates,
    enumerate_admissible,
    greedy_path,
)

MAX_REPLICATE_FAILURE_RATE = 0.05


class ReplicateFailureError(RuntimeError):
    """More than the tolerated fraction of Monte-Carlo replicates failed."""


class DegenerateParametersError(ValueError):
    """A packing construction could not place even two separated vectors."""


# ---------------------------------------------------------------------------
# Design generators and response simulation
# ---------------------------------------------------------------------------

def generate_design(kind: str, n: int, p: int | None = None, seed: int = 0,
                    column_scale: str = "sqrt_n") -> DesignMatrix:
    """Deterministic designs for experiments.

    ``identity`` is I_n; ``orthogonalized-gaussian`` orthonormalizes a seeded
    Gaussian n x p matrix (QR with positive diagonal) and scales columns to
    norm sqrt(n) (``column_scale="unit"`` keeps orthonormal columns).
    """
    if kind == "identity":
        return DesignMatrix.from_array(np.eye(n))
    if kind == "orthogonalized-gaussian":
        if p is None or p > n:
            raise ValueError("orthogonalized-gaussian needs p <= n")
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((n, p))
        q, rmat = np.linalg.qr(g)
        q = q * np.sign(np.diag(rmat))
        if column_scale == "sqrt_n":
            q = q * math.sqrt(n)
        elif column_scale != "unit":
            raise ValueError(f"unknown column scale {column_scale!r}")
        return DesignMatrix.from_array(q)
    raise ValueError(f"unknown design generator {kind!r}")


def simulate_response(fam: NaturalFamily, theta, seed) -> np.ndarray:
    """Independent draws from the family at each natural parameter, seeded."""
    theta = fam.require_feasible(theta)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if fam.name == "gaussian":
        return rng.normal(theta, math.sqrt(fam.a))
    if fam.name == "bernoulli":
        return rng.binomial(1, fam.b1(theta)).astype(float)
    if fam.name == "poisson":
        return rng.poisson(np.exp(theta)).astype(float)
    raise ValueError(f"no sampler for family {fam.name!r}")


# ---------------------------------------------------------------------------
# Monte-Carlo KL risk
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    """One Monte-Carlo risk experiment: truth, model universe, penalty rules."""

    family: NaturalFamily
    design: DesignMatrix
    beta_true: np.ndarray = field(repr=False)
    models: ModelFamily
    rules: tuple[tuple[str, PenaltyRule], ...]
    replicates: int
    seed: int
    search: str = "exhaustive"  # or "greedy"
    guard: int = 10_000_000
    n_threads: int = 1

    def __post_init__(self) -> None:
        beta = np.asarray(self.beta_true, dtype=float)
        object.__setattr__(self, "beta_true", beta)
        if beta.shape != (self.design.p,):
            raise ValueError(f"beta_true has shape {beta.shape}, expected ({self.design.p},)")
        if self.search not in ("exhaustive", "greedy"):
            raise ValueError(f"unknown search mode {self.search!r}")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        self.family.require_feasible(self.design.X @ beta, "X @ beta_true")

    @property
    def p0(self) -> int:
        return int(np.count_nonzero(self.beta_true))

    @property
    def theta_true(self) -> np.ndarray:
        return self.design.X @ self.beta_true


@dataclass(frozen=True)
class RiskRow:
    rule: str
    p0: int
    mean_kl: float
    stderr: float
    mean_model_size: float
    rate_ratio: float
    replicates: int
    failures: int


@dataclass(frozen=True)
class RiskReport:
    rows: tuple[RiskRow, ...]

    def row(self, rule: str, p0: int | None = None) -> RiskRow:
        for r in self.rows:
            if r.rule == rule and (p0 is None or r.p0 == p0):
                return r
        raise KeyError((rule, p0))


def rate_denominator(p0: int, p: int, r: int) -> float:
    """The target rate min(p0 * ln(pe/p0), r); infinite at p0 = 0."""
    if p0 <= 0:
        return math.inf
    return min(p0 * math.log(p * math.e / p0), float(r))


def _pen_tables(rules, models: ModelFamily, X: DesignMatrix, kmax: int) -> list[np.ndarray]:
    tables = []
    for _, rule in rules:
        tbl = np.empty(kmax + 1)
        for k in range(kmax + 1):
            m = models.count(k) if rule.kind == "STRUCTURAL" and rule.m_table is None else None
            tbl[k] = pen_value(rule, k, p=models.p, r=X.r, n=X.n, m=m)
        tables.append(tbl)
    return tables


def _replicate_outcome(spec: ExperimentSpec, rep: int, candidates, pens):
    """(kl, model_size) per rule for one replicate; NaNs on failure."""
    fam, X = spec.family, spec.design
    theta_true = spec.theta_true
    Y = simulate_response(fam, theta_true, np.random.default_rng([spec.seed, rep]))
    if spec.search == "exhaustive":
        pairs = _fit_candidates(fam, X, Y, candidates, 1)
    else:
        pairs = greedy_path(fam, X, Y, spec.models)
    pairs = [(m, f) for m, f in pairs if f is not None and f.converged]
    out = np.full((len(spec.rules), 2), np.nan)
    for j, tbl in enumerate(pens):
        best_key = None
        best = None
        for model, fit in pairs:
            obj = -fit.loglik / fam.a + tbl[model.size]
            key = (obj, model.size, model.indices)
            if best_key is None or key < best_key:
                best_key = key
                best = (model, fit)
        if best is None:
            continue
        model, fit = best
        out[j, 0] = kl_divergence(fam, theta_true, fit.theta_hat)
        out[j, 1] = model.size
    return out


def mc_kl_risk(spec: ExperimentSpec) -> RiskReport:
    """Empirical KL risk of penalized selection, per rule, over seeded replicates."""
    X, models = spec.design, spec.models
    kmax = min(models.max_size, X.r)
    candidates: list[ModelSpec] = []
    if spec.search == "exhaustive":
        total = sum(models.count(k) for k in range(0, kmax + 1))
        if total > spec.guard:
            raise EnumerationBudgetError(
                f"{total} admissible models exceed the guard ({spec.guard})"
            )
        for k in range(0, kmax + 1):
            candidates.extend(enumerate_admissible(models, k))
    pens = _pen_tables(spec.rules, models, X, kmax)

    results = np.empty((spec.replicates, len(spec.rules), 2))
    if spec.n_threads > 1:
        with ThreadPoolExecutor(max_workers=spec.n_threads) as pool:
            futures = {
                pool.submit(_replicate_outcome, spec, rep, candidates, pens): rep
                for rep in range(spec.replicates)
            }
            for fut, rep in futures.items():
                results[rep] = fut.result()
    else:
        for rep in range(spec.replicates):
            results[rep] = _replicate_outcome(spec, rep, candidates, pens)

    rows = []
    denom = rate_denominator(spec.p0, models.p, X.r)
    for j, (name, _) in enumerate(spec.rules):
        kl = results[:, j, 0]
        size = results[:, j, 1]
        ok = ~np.isnan(kl)
        failures = int(np.sum(~ok))
        if failures > MAX_REPLICATE_FAILURE_RATE * spec.replicates:
            raise ReplicateFailureError(
                f"rule {name!r}: {failures}/{spec.replicates} replicates failed"
            )
        mean_kl = float(np.mean(kl[ok]))
        stderr = float(np.std(kl[ok], ddof=1) / math.sqrt(np.sum(ok))) if np.sum(ok) > 1 else 0.0
        rows.append(RiskRow(
            rule=name, p0=spec.p0, mean_kl=mean_kl, stderr=stderr,
            mean_model_size=float(np.mean(size[ok])),
            rate_ratio=float(mean_kl / denom) if math.isfinite(denom) else float("nan"),
            replicates=spec.replicates, failures=failures,
        ))
    return RiskReport(rows=tuple(rows))


def nested_beta_sequence(design: DesignMatrix, p0_grid, amplitude: float, seed: int,
                         fam: NaturalFamily | None = None) -> dict[int, np.ndarray]:
    """Nested-support true coefficient vectors for a sparsity grid.

    Supports are prefixes of one seeded permutation with seeded signs, so the
    signal grows monotonically along the grid.  Feasibility of X beta is the
    caller's concern (checked by ExperimentSpec).
    """
    rng = np.random.default_rng([seed, 982_451_653])
    perm = rng.permutation(design.p)
    signs = rng.choice([-1.0, 1.0], size=design.p)
    out = {}
    for p0 in p0_grid:
        if not 0 <= p0 <= design.p:
            raise ValueError(f"p0={p0} out of range 0..{design.p}")
        beta = np.zeros(design.p)
        beta[perm[:p0]] = amplitude * signs[:p0]
        if fam is not None:
            fam.require_feasible(design.X @ beta, f"X @ beta_true (p0={p0})")
        out[int(p0)] = beta
    return out


def rate_curve(
    family: NaturalFamily,
    design: DesignMatrix,
    models: ModelFamily,
    rules,
    p0_grid,
    amplitude: float,
    replicates: int,
    seed: int,
    *,
    search: str = "greedy",
    guard: int = 10_000_000,
    n_threads: int = 1,
) -> RiskReport:
    """Risk-rate table over a sparsity grid with nested true supports."""
    betas = nested_beta_sequence(design, p0_grid, amplitude, seed, fam=family)
    rows = []
    for p0 in p0_grid:
        spec = ExperimentSpec(
            family=family, design=design, beta_true=betas[int(p0)],
            models=models, rules=tuple(rules), replicates=replicates,
            seed=seed, search=search, guard=guard, n_threads=n_threads,
        )
        rows.extend(mc_kl_risk(spec).rows)
    return RiskReport(rows=tuple(rows))


# ---------------------------------------------------------------------------
# Oracle inequality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleCheck:
    lhs: float
    stderr: float
    inf_term: float
    constant: float
    rhs: float
    holds: bool


def kl_projection(fam: NaturalFamily, X: DesignMatrix, theta_true, model: ModelSpec):
    """The KL-closest parameter vector in the model's feasible span.

    Computed by refitting with the noiseless mean response b1(theta_true):
    the population objective has the same maximizer as the likelihood kernel.
    """
    from .fitter import fit_mle

    mean = fam.b1(np.asarray(theta_true, dtype=float))
    return fit_mle(fam, X, mean, model)


def oracle_inequality_check(
    spec: ExperimentSpec,
    cert: WeightCertificate,
    scan_models,
) -> OracleCheck:
    """Empirical mean KL against the oracle-inequality right-hand side.

    The scan set should contain the models believed to approach the oracle
    infimum (always augmented with the empty model).  Requires a rule whose
    certificate passed the pointwise penalty condition.
    """
    if len(spec.rules) != 1:
        raise ValueError("oracle check expects a single-rule experiment")
    if not cert.penalty_ok:
        raise ValueError("penalty rule is not certified: pointwise condition failed")
    name, rule = spec.rules[0]
    report = mc_kl_risk(spec)
    row = report.row(name)

    theta_true = spec.theta_true
    fam, X, models = spec.family, spec.design, spec.models
    inf_term = math.inf
    scan = list(scan_models)
    if all(m.size != 0 for m in scan):
        scan.append(ModelSpec(()))
    for model in scan:
        m = models.count(model.size) if rule.kind == "STRUCTURAL" and rule.m_table is None else None
        pen = pen_value(rule, model.size, p=models.p, r=X.r, n=X.n, m=m)
        proj = kl_projection(fam, X, theta_true, model)
        inf_term = min(inf_term, kl_divergence(fam, theta_true, proj.theta_hat) + pen)
    constant = risk_bound_constant(cert.A, cert.S, rule.curvature_ratio)
    rhs = (4.0 / 3.0) * inf_term + constant
    holds = row.mean_kl <= rhs + 3.0 * row.stderr
    return OracleCheck(lhs=row.mean_kl, stderr=row.stderr, inf_term=inf_term,
                       constant=constant, rhs=rhs, holds=holds)


# ---------------------------------------------------------------------------
# Minimax lower-bound values
# ---------------------------------------------------------------------------

def minimax_lower_bound(
    p0: int,
    p: int,
    r: int,
    tau_2p0: float,
    tau_p0: float,
    curvature_ratio_inv: float,
    C2: float = 1.0,
    mode: str = "complete",
    m_table: tuple[int, ...] | None = None,
) -> float:
    """Lower-bound value (up to the theory's unspecified constant C2).

    Complete mode: C2 * (L/U) * tau[2 p0] * p0 * ln(pe/p0) for p0 <= r/2 and
    C2 * (L/U) * tau[p0] * r for the dense range.  Structural mode replaces
    the sparse branch by max(tau[2 p0] * ln m(p0)/ln p0, tau[p0] * p0); at
    p0 = 1 the log-ratio term is undefined (ln 1 = 0 denominator) and only
    the second branch is used.
    """
    if not 1 <= p0 <= r:
        raise ValueError(f"p0 must lie in 1..{r}, got {p0}")
    if not C2 > 0:
        raise ValueError(f"C2 must be positive, got {C2}")
    base = C2 * curvature_ratio_inv
    if p0 > r / 2:
        return base * tau_p0 * r
    if mode == "complete":
        return base * tau_2p0 * p0 * math.log(p * math.e / p0)
    if mode == "structural":
        if m_table is None or p0 > len(m_table):
            raise ValueError("structural mode requires m_table covering p0")
        m = m_table[p0 - 1]
        if m < 1:
            raise ValueError(f"no admissible models of size {p0}")
        if p0 == 1:
            return base * tau_p0 * p0
        return base * max(tau_2p0 * math.log(m) / math.log(p0), tau_p0 * p0)
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Packing constructions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PackingSet:
    """A separated coefficient set with a certified minimum Hamming distance."""

    vectors: np.ndarray = field(repr=False)
    min_hamming: int
    cardinality: int
    amplitude: float
    case: str
    target_distance: int
    achieved_ctilde: float | None = None
    log_card_exponent: float | None = None


def _pairwise_min_hamming(binary: np.ndarray) -> int:
    b = binary.astype(np.int64)
    inter = b @ b.T
    weights = np.diag(inter)
    dist = weights[:, None] + weights[None, :] - 2 * inter
    np.fill_diagonal(dist, np.iinfo(np.int64).max)
    return int(dist.min())


def _popcount(arr: np.ndarray) -> np.ndarray:
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(arr)
    table = np.array([bin(i).count("1") for i in range(1 << 16)], dtype=np.uint32)
    out = np.zeros(arr.shape, dtype=np.uint32)
    v = arr.astype(np.uint64)
    while np.any(v):
        out += table[(v & np.uint64(0xFFFF)).astype(np.intp)]
        v >>= np.uint64(16)
    return out


MAX_VG_DIMENSION = 24


def vg_packing(p0: int, fam: NaturalFamily, phi_max: float, p: int | None = None) -> PackingSet:
    """Greedy maximal binary code on the first p0 coordinates (dense regime).

    Pairwise Hamming distance is at least ceil(p0/8); greedy maximality
    guarantees cardinality at least 2^(p0/8).  The amplitude follows the
    dense-case separation calibration (ln 2 / 64) * (a/U) / phi_max.
    """
    if p0 < 8:
        raise ValueError("dense packing needs p0 >= 8; use two_point_packing for small p0")
    if p0 > MAX_VG_DIMENSION:
        raise ValueError(f"greedy enumeration over 2^{p0} candidates is infeasible (cap {MAX_VG_DIMENSION})")
    if not phi_max > 0:
        raise ValueError(f"phi_max must be positive, got {phi_max}")
    if p is None:
        p = p0
    if p < p0:
        raise ValueError(f"p={p} < p0={p0}")

    d = max(1, math.ceil(p0 / 8))
    total = 1 << p0
    codes = np.arange(total, dtype=np.uint64)
    weights = _popcount(codes)
    # Greedy maximality: accepting a code only has to kill the ball of radius
    # d-1 around it, which is far smaller than the full cube.
    kill = codes[(weights > 0) & (weights < d)]
    alive = np.ones(total, dtype=bool)
    accepted: list[int] = []
    for idx in range(total):
        if alive[idx]:
            accepted.append(idx)
            if kill.size:
                alive[np.bitwise_xor(np.uint64(idx), kill).astype(np.intp)] = False

    upper = curvature_bounds(fam).upper
    amplitude = math.sqrt((math.log(2.0) / 64.0) * (fam.a / upper) / phi_max)
    binary = np.zeros((len(accepted), p), dtype=np.int8)
    for i, c in enumerate(accepted):
        for j in range(p0):
            if (c >> j) & 1:
                binary[i, j] = 1
    if len(accepted) > 1:
        # Exact minimum distance: grow the radius until some accepted pair hits.
        acc = np.array(accepted, dtype=np.uint64)
        member = np.zeros(total, dtype=bool)
        member[acc.astype(np.intp)] = True
        min_h = 0
        for t in range(d, p0 + 1):
            offs = codes[weights == t]
            hit = False
            for start in range(0, acc.size, 4096):
                chunk = acc[start:start + 4096]
                if member[np.bitwise_xor(chunk[:, None], offs[None, :]).astype(np.intp)].any():
                    hit = True
                    break
            if hit:
                min_h = t
                break
    else:
        min_h = 0
    return PackingSet(
        vectors=binary.astype(float) * amplitude,
        min_hamming=min_h,
        cardinality=len(accepted),
        amplitude=amplitude,
        case="dense-VG",
        target_distance=d,
        log_card_exponent=math.log(len(accepted)) / (p0 / 8.0 * math.log(2.0)),
    )


def two_point_packing(p0: int, fam: NaturalFamily, phi_max: float, p: int | None = None) -> PackingSet:
    """The two-vector construction for the dense regime with p0 < 8."""
    if p is None:
        p = p0
    upper = curvature_bounds(fam).upper
    amplitude = math.sqrt((math.log(2.0) / 64.0) * (fam.a / upper) / phi_max)
    vectors = np.zeros((2, p))
    vectors[1, :p0] = amplitude
    return PackingSet(
        vectors=vectors, min_hamming=p0, cardinality=2, amplitude=amplitude,
        case="two-point", target_distance=p0,
    )


SPARSE_ENUM_BUDGET = 200_000


def sparse_packing(
    p0: int,
    p: int,
    fam: NaturalFamily,
    phi_max_2p0: float,
    ctilde: float = 1.0,
    attempts: int = 8,
    seed: int = 0,
) -> PackingSet:
    """Greedy packing of exactly-p0-sparse equal-amplitude vectors (sparse regime).

    Pairwise support symmetric difference is at least ceil(ctilde * p0).  The
    achieved separation constant and cardinality exponent are reported rather
    than asserted (the existential constant behind the construction is not
    explicit).
    """
    if not 1 <= p0 <= p:
        raise ValueError(f"need 1 <= p0 <= p, got p0={p0}, p={p}")
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    if not 0 < ctilde <= 2:
        raise ValueError(f"ctilde must lie in (0, 2], got {ctilde}")
    d = max(1, math.ceil(ctilde * p0))

    total = math.comb(p, p0)
    rng = np.random.default_rng(seed)
    if total <= SPARSE_ENUM_BUDGET:
        base = [frozenset(c) for c in itertools.combinations(range(p), p0)]
    else:
        base = []
        seen = set()
        while len(base) < SPARSE_ENUM_BUDGET:
            s = frozenset(np.sort(rng.choice(p, size=p0, replace=False)).tolist())
            if s not in seen:
                seen.add(s)
                base.append(s)

    def greedy(order):
        picked: list[frozenset] = []
        for s in order:
            if all(len(s ^ t) >= d for t in picked):
                picked.append(s)
        return picked

    best = greedy(base)
    for _ in range(attempts - 1):
        shuffled = list(base)
        rng.shuffle(shuffled)
        cand = greedy(shuffled)
        if len(cand) > len(best):
            best = cand
    if len(best) < 2:
        raise DegenerateParametersError(
            f"cannot place two p0={p0}-sparse vectors at distance {d} within p={p}"
        )

    upper = curvature_bounds(fam).upper
    amplitude = math.sqrt(
        (1.0 / 16.0) * ctilde * (fam.a / upper) / phi_max_2p0 * math.log(p * math.e / p0)
    )
    binary = np.zeros((len(best), p), dtype=np.int8)
    for i, s in enumerate(sorted(best, key=sorted)):
        binary[i, sorted(s)] = 1
    min_h = _pairwise_min_hamming(binary)
    return PackingSet(
        vectors=binary.astype(float) * amplitude,
        min_hamming=min_h,
        cardinality=len(best),
        amplitude=amplitude,
        case="sparse",
        target_distance=d,
        achieved_ctilde=min_h / p0,
        log_card_exponent=math.log(len(best)) / (p0 * math.log(p * math.e / p0)),
    )


def packing_theta_feasible(ps: PackingSet, dm: DesignMatrix, fam: NaturalFamily) -> bool:
    """Whether every packed vector maps into the family's interval through the design.

    Infeasibility is reported, not repaired: the prescribed amplitude is part
    of the construction.
    """
    for beta in ps.vectors:
        theta = dm.X @ beta
        if not fam.contains(theta):
            return False
    return True
