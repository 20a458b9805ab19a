"""Complexity-penalty families, weight certificates, and the risk-bound constant.

Theory-mode penalties (``RIC``, ``KLOGPK``, ``STRUCTURAL``) carry the
curvature ratio upper/lower and, for guaranteed behaviour, a constant C > 16;
a separate practical mode exposes arbitrary C > 0 for empirical comparison
outside the guarantee.  The certificate machinery evaluates the weight sum S
and the pointwise penalty condition that back the oracle risk bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import gammaln

THEORY_C_MIN = 16.0
DEFAULT_THEORY_C = 17.0

KINDS = ("AIC", "BIC", "EBIC", "RIC", "KLOGPK", "STRUCTURAL", "CUSTOM", "NONE")


def log_binom(p: int, k: int) -> float:
    """log C(p, k), computed in log-space to avoid overflow for large p."""
    if not 0 <= k <= p:
        return -math.inf
    return float(gammaln(p + 1) - gammaln(k + 1) - gammaln(p - k + 1))


@dataclass(frozen=True)
class PenaltyRule:
    """A complexity penalty Pen(k), parameterized by its kind.

    ``curvature_ratio`` is the family's upper/lower curvature ratio, used by
    the theory-mode penalties.  ``practical`` marks constants outside the
    C > 16 guarantee.  ``CUSTOM`` rules carry explicit weights ``L`` (length
    r), a slack constant ``A`` > 1 and a multiplier >= 1.
    """

    kind: str
    C: float = DEFAULT_THEORY_C
    gamma: float = 0.5
    curvature_ratio: float = 1.0
    L: tuple[float, ...] | None = None
    A: float | None = None
    multiplier: float = 1.0
    practical: bool = False
    m_table: tuple[int, ...] | None = None  # m_table[k-1] = m(k) for STRUCTURAL

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "EBIC" and not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"EBIC gamma must lie in [0, 1], got {self.gamma}")
        if self.kind in ("RIC", "KLOGPK", "STRUCTURAL"):
            if not self.C > 0:
                raise ValueError(f"{self.kind} constant C must be positive, got {self.C}")
            if not self.practical and not self.C > THEORY_C_MIN:
                raise ValueError(
                    f"{self.kind} theory mode requires C > {THEORY_C_MIN}; "
                    f"got C={self.C} (set practical=True to bypass the guarantee)"
                )
        if self.curvature_ratio < 1.0:
            raise ValueError(f"curvature ratio must be >= 1, got {self.curvature_ratio}")
        if self.kind == "CUSTOM":
            if self.L is None or self.A is None:
                raise ValueError("CUSTOM penalty requires explicit weights L and slack A")
            if any(not l > 0 for l in self.L):
                raise ValueError("CUSTOM weights must all be positive")
            if not self.A > 1:
                raise ValueError(f"CUSTOM slack A must exceed 1, got {self.A}")
            if not self.multiplier >= 1:
                raise ValueError(f"CUSTOM multiplier must be >= 1, got {self.multiplier}")
        if self.kind == "STRUCTURAL" and self.m_table is not None:
            if any(m < 0 for m in self.m_table):
                raise ValueError("m(k) counts must be nonnegative")

    # --- constructors -----------------------------------------------------

    @classmethod
    def aic(cls) -> "PenaltyRule":
        return cls(kind="AIC")

    @classmethod
    def bic(cls) -> "PenaltyRule":
        return cls(kind="BIC")

    @classmethod
    def ebic(cls, gamma: float = 0.5) -> "PenaltyRule":
        return cls(kind="EBIC", gamma=gamma)

    @classmethod
    def ric(cls, C: float = DEFAULT_THEORY_C, curvature_ratio: float = 1.0,
            practical: bool = False) -> "PenaltyRule":
        return cls(kind="RIC", C=C, curvature_ratio=curvature_ratio, practical=practical)

    @classmethod
    def klogpk(cls, C: float = DEFAULT_THEORY_C, curvature_ratio: float = 1.0,
               practical: bool = False) -> "PenaltyRule":
        return cls(kind="KLOGPK", C=C, curvature_ratio=curvature_ratio, practical=practical)

    @classmethod
    def structural(cls, C: float = DEFAULT_THEORY_C, curvature_ratio: float = 1.0,
                   m_table: tuple[int, ...] | None = None, practical: bool = False) -> "PenaltyRule":
        return cls(kind="STRUCTURAL", C=C, curvature_ratio=curvature_ratio,
                   m_table=m_table, practical=practical)

    @classmethod
    def custom(cls, L, A: float, curvature_ratio: float = 1.0,
               multiplier: float = 1.0) -> "PenaltyRule":
        return cls(kind="CUSTOM", L=tuple(float(x) for x in L), A=float(A),
                   curvature_ratio=curvature_ratio, multiplier=multiplier)

    @classmethod
    def none(cls) -> "PenaltyRule":
        """Pen(k) = 0 for every k: diagnostic only (forced-model calibration runs)."""
        return cls(kind="NONE")

    def slack_constants(self) -> tuple[float, float]:
        """The (A, C-tilde) pair backing a theory-mode constant C > 16.

        Both are set to sqrt(C/16), a symmetric deterministic choice
        satisfying C >= 16 * A * C-tilde.
        """
        if self.kind not in ("RIC", "KLOGPK", "STRUCTURAL"):
            raise ValueError(f"slack constants are defined for theory-mode kinds, not {self.kind}")
        if not self.C > THEORY_C_MIN:
            raise ValueError(f"slack constants require C > {THEORY_C_MIN}, got {self.C}")
        s = math.sqrt(self.C / THEORY_C_MIN)
        return s, s


def custom_pen_term(k: int, L_k: float, A: float) -> float:
    """The pointwise lower bound 2*k*(A + 2*sqrt(2 L_k) + 4 L_k) / curvature ratio 1."""
    return 2.0 * k * (A + 2.0 * math.sqrt(2.0 * L_k) + 4.0 * L_k)


def pen_value(
    rule: PenaltyRule,
    k: int,
    *,
    p: int | None = None,
    r: int | None = None,
    n: int | None = None,
    m: int | None = None,
) -> float:
    """Pen(k) for the given rule; Pen(0) = 0 for every kind.

    Context requirements: BIC/EBIC need n, EBIC/RIC/KLOGPK need p, KLOGPK
    needs r (saturation case), STRUCTURAL needs m(k) (from the rule's table or
    the ``m`` argument).
    """
    if k == 0:
        return 0.0
    if k < 0 or (r is not None and k > r):
        raise ValueError(f"model size k={k} out of range 1..{r}")
    kind = rule.kind
    ratio = rule.curvature_ratio
    if kind == "NONE":
        return 0.0
    if kind == "AIC":
        return float(k)
    if kind == "BIC":
        _need(n, "n", kind)
        return 0.5 * k * math.log(n)
    if kind == "EBIC":
        _need(n, "n", kind)
        _need(p, "p", kind)
        return 0.5 * k * math.log(n) + rule.gamma * k * math.log(p)
    if kind == "RIC":
        _need(p, "p", kind)
        return rule.C * ratio * k * math.log(p)
    if kind == "KLOGPK":
        _need(p, "p", kind)
        _need(r, "r", kind)
        if k == r:
            return rule.C * ratio * r
        return rule.C * ratio * k * math.log(p * math.e / k)
    if kind == "STRUCTURAL":
        if m is None and rule.m_table is not None and k <= len(rule.m_table):
            m = rule.m_table[k - 1]
        if m is None:
            raise ValueError("STRUCTURAL penalty needs the admissible-model count m(k)")
        if m < 1:
            raise ValueError(f"STRUCTURAL penalty undefined for m({k})={m} < 1")
        return rule.C * ratio * max(math.log(m), float(k))
    if kind == "CUSTOM":
        if k > len(rule.L):
            raise ValueError(f"CUSTOM weights cover k <= {len(rule.L)}, got {k}")
        return rule.multiplier * ratio * custom_pen_term(k, rule.L[k - 1], rule.A)
    raise AssertionError(kind)


def _need(value, name: str, kind: str) -> None:
    if value is None:
        raise ValueError(f"{kind} penalty requires context value {name!r}")


@dataclass(frozen=True)
class WeightCertificate:
    """The weight sum S and the pointwise penalty condition for a rule."""

    S: float
    penalty_ok: bool
    A: float


def weights_certificate(
    L,
    A: float,
    rule: PenaltyRule,
    *,
    p: int,
    r: int,
    n: int | None = None,
    m_table: tuple[int, ...] | None = None,
) -> WeightCertificate:
    """Evaluate the weight sum S and check Pen(k) against its pointwise bound.

    S is the complete-selection sum ``sum_{k<r} C(p,k) e^{-k L_k} + e^{-r L_r}``
    or, when ``m_table`` is given, the structural variant with m(k) in place
    of the binomial coefficient.  The penalty condition requires
    ``Pen(k) >= 2 * ratio * k * (A + 2 sqrt(2 L_k) + 4 L_k)`` for every
    admissible k.
    """
    L = [float(x) for x in L]
    if len(L) != r:
        raise ValueError(f"need r={r} weights, got {len(L)}")
    if any(not x > 0 for x in L):
        raise ValueError("weights must all be positive")
    if not A > 1:
        raise ValueError(f"slack A must exceed 1, got {A}")

    terms = []
    for k in range(1, r):
        count_log = log_binom(p, k) if m_table is None else _log_or_none(m_table, k)
        if count_log is None:
            continue
        terms.append(math.exp(count_log - k * L[k - 1]))
    terms.append(math.exp(-r * L[r - 1]))
    S = float(sum(terms))

    ok = True
    for k in range(1, r + 1):
        if m_table is not None:
            mk = m_table[k - 1] if k <= len(m_table) else 0
            if mk < 1:
                continue
            pen = pen_value(rule, k, p=p, r=r, n=n, m=mk)
        else:
            pen = pen_value(rule, k, p=p, r=r, n=n)
        bound = 2.0 * rule.curvature_ratio * k * (A + 2.0 * math.sqrt(2.0 * L[k - 1]) + 4.0 * L[k - 1])
        if pen < bound:
            ok = False
            break
    return WeightCertificate(S=S, penalty_ok=ok, A=float(A))


def _log_or_none(m_table, k: int) -> float | None:
    mk = m_table[k - 1] if k <= len(m_table) else 0
    if mk < 1:
        return None
    return math.log(mk)


def implied_weights(rule: PenaltyRule, p: int, r: int) -> tuple[list[float], float]:
    """The weight sequence and slack A implied by a theory-mode rule.

    KLOGPK: L_k = C-tilde * ln(pe/k) for k < r and L_r = C-tilde.
    RIC: constant weights L_k = C-tilde * ln p.
    """
    A, ctilde = rule.slack_constants()
    if rule.kind == "KLOGPK":
        L = [ctilde * math.log(p * math.e / k) for k in range(1, r)] + [ctilde]
        return L, A
    if rule.kind == "RIC":
        return [ctilde * math.log(p)] * r, A
    raise ValueError(f"implied weights are defined for RIC/KLOGPK, not {rule.kind}")


def risk_bound_constant(A: float, S: float, curvature_ratio: float) -> float:
    """The additive constant (16/3) * ratio * (2A-1)/(A-1) * S of the risk bound."""
    if not A > 1:
        raise ValueError(f"slack A must exceed 1, got {A}")
    if S < 0:
        raise ValueError(f"weight sum S must be nonnegative, got {S}")
    return (16.0 / 3.0) * curvature_ratio * ((2.0 * A - 1.0) / (A - 1.0)) * S
