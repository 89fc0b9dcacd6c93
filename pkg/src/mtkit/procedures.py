"""Step-down and step-up multiple test procedures over critical-value ramps.

Every procedure here is linear in the nominal level: rank i is compared
against min(1, c_i * alpha) for a nondecreasing coefficient sequence c_i
fixed by the procedure kind.  That linearity is what makes adjusted
p-values exact: rejection at level alpha is equivalent to adjusted p <=
alpha for every alpha in (0, 1).

The per-family tail conventions match the rest of the package: the k-FWER
kinds control P(V > k), so the step-down coefficient sequences use k+1
where the classical constructions use their own k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DecisionVector, PVector

__all__ = [
    "KINDS",
    "STEP_UP_KINDS",
    "ProcedureSpec",
    "ThresholdSequence",
    "thresholds",
    "step_down",
    "step_up",
    "stepdown_mask",
    "stepup_mask",
    "adjusted_p",
    "apply",
]

BONFERRONI = "bonferroni"
HOLM = "holm"
HOCHBERG = "hochberg"
BH = "bh"
BY = "by"
KFWER_SS = "kfwer-ss"  # single-step generalized Bonferroni for P(V > k)
KFWER_SD = "kfwer-sd"  # step-down for P(V > k)
FDP_SD = "fdp-sd"      # step-down for P(FDP > gamma)

KINDS = (BONFERRONI, HOLM, HOCHBERG, BH, BY, KFWER_SS, KFWER_SD, FDP_SD)
STEP_UP_KINDS = frozenset({HOCHBERG, BH, BY})


@dataclass(frozen=True)
class ProcedureSpec:
    """A named procedure plus its parameters.

    ``k`` (>= 0) applies to the k-FWER kinds, ``gamma`` in [0, 1) to the
    FDP step-down.  ``cap`` is an optional per-hypothesis p-value ceiling:
    rejections whose raw p exceeds it are demoted after the procedure has
    run.  ``directional`` attaches an effect direction to each rejection,
    taken from the sign of the observed statistic.
    """

    kind: str
    k: int | None = None
    gamma: float | None = None
    cap: float | None = None
    directional: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown procedure kind: {self.kind!r}")
        needs_k = self.kind in (KFWER_SS, KFWER_SD)
        if needs_k:
            if self.k is None or int(self.k) != self.k or self.k < 0:
                raise ValueError("k must be a nonnegative integer")
            object.__setattr__(self, "k", int(self.k))
        elif self.k is not None:
            raise ValueError(f"k is not a parameter of {self.kind}")
        if self.kind == FDP_SD:
            if self.gamma is None or not 0.0 <= self.gamma < 1.0:
                raise ValueError("gamma must lie in [0, 1)")
        elif self.gamma is not None:
            raise ValueError(f"gamma is not a parameter of {self.kind}")
        if self.cap is not None and not 0.0 < self.cap <= 1.0:
            raise ValueError("cap must lie in (0, 1]")

    @property
    def is_step_up(self) -> bool:
        return self.kind in STEP_UP_KINDS

    def label(self) -> str:
        base = self.kind
        if self.kind in (KFWER_SS, KFWER_SD):
            base = f"{self.kind}:{self.k}"
        elif self.kind == FDP_SD:
            base = f"{self.kind}:{self.gamma!r}"
        return base


@dataclass(frozen=True)
class ThresholdSequence:
    """Coefficients c_1..c_m; the rank-i critical value is min(1, c_i*a)."""

    m: int
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.coefficients, dtype=np.float64))
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        if c.shape != (self.m,) or self.m < 1:
            raise ValueError("coefficients must have length m >= 1")
        if np.any(c <= 0.0):
            raise ValueError("coefficients must be positive")
        if np.any(np.diff(c) < 0.0):
            raise ValueError("coefficients must be nondecreasing")

    def critical_values(self, alpha: float) -> np.ndarray:
        _check_alpha(alpha)
        return np.minimum(1.0, self.coefficients * alpha)


def _check_alpha(alpha: float) -> None:
    # alpha = 1 is admitted so adaptive procedures can run at a capped
    # level min(alpha / pi0_hat, 1) through the same kernels.
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")


def _coefficients(spec: ProcedureSpec, m: int) -> ThresholdSequence:
    if m < 1 or int(m) != m:
        raise ValueError("m must be a positive integer")
    m = int(m)
    i = np.arange(1, m + 1, dtype=np.float64)
    kind = spec.kind
    if kind == BONFERRONI:
        c = np.full(m, 1.0 / m)
    elif kind in (HOLM, HOCHBERG):
        c = 1.0 / (m - i + 1.0)
    elif kind == BH:
        c = i / m
    elif kind == BY:
        c = i / (m * np.sum(1.0 / np.arange(1, m + 1)))
    elif kind == KFWER_SS:
        c = np.full(m, (spec.k + 1.0) / m)
    elif kind == KFWER_SD:
        k1 = spec.k + 1.0
        c = np.where(i <= k1, k1 / m, k1 / (m + k1 - i))
    elif kind == FDP_SD:
        gi = np.floor(spec.gamma * i) + 1.0
        c = gi / (m + gi - i)
    else:  # pragma: no cover - guarded by ProcedureSpec
        raise ValueError(kind)
    return ThresholdSequence(m, c)


def thresholds(spec: ProcedureSpec, m: int, alpha: float) -> ThresholdSequence:
    """Build the coefficient sequence of ``spec`` for a family of size m."""
    _check_alpha(alpha)
    return _coefficients(spec, m)


def _order(p: np.ndarray, order: np.ndarray | None) -> np.ndarray:
    if order is not None:
        return order
    # Stable sort: tied p-values keep their input rank order.  Because the
    # critical values are nondecreasing, tied values always share a fate.
    return np.argsort(p, kind="stable")


def stepdown_mask(
    p: np.ndarray, crit: np.ndarray, order: np.ndarray | None = None
) -> np.ndarray:
    """Reject the longest prefix of sorted p-values that clears every rank."""
    order = _order(p, order)
    ok = p[order] <= crit
    bad = np.flatnonzero(~ok)
    j_star = bad[0] if bad.size else ok.size
    mask = np.zeros(p.shape[0], dtype=bool)
    mask[order[:j_star]] = True
    return mask


def stepup_mask(
    p: np.ndarray, crit: np.ndarray, order: np.ndarray | None = None
) -> np.ndarray:
    """Reject through the largest rank whose p-value clears its threshold."""
    order = _order(p, order)
    ok = np.flatnonzero(p[order] <= crit)
    k_star = ok[-1] + 1 if ok.size else 0
    mask = np.zeros(p.shape[0], dtype=bool)
    mask[order[:k_star]] = True
    return mask


def _engine(p: PVector, t: ThresholdSequence, alpha: float, up: bool) -> DecisionVector:
    if p.m != t.m:
        raise ValueError("p-vector and threshold sequence sizes differ")
    crit = t.critical_values(alpha)
    mask = stepup_mask(p.p, crit) if up else stepdown_mask(p.p, crit)
    return DecisionVector(p.ids, mask)


def step_down(p: PVector, t: ThresholdSequence, alpha: float) -> DecisionVector:
    return _engine(p, t, alpha, up=False)


def step_up(p: PVector, t: ThresholdSequence, alpha: float) -> DecisionVector:
    return _engine(p, t, alpha, up=True)


def adjusted_p(spec: ProcedureSpec, p: PVector) -> np.ndarray:
    """Adjusted p-values aligned with the input order.

    Step-down kinds take a running maximum of p_(j)/c_j over ranks j <= i,
    step-up kinds a running minimum over ranks j >= i, both clamped to 1.
    The result q satisfies: spec rejects hypothesis h at level alpha if
    and only if q_h <= alpha.
    """
    t = thresholds(spec, p.m, 0.5)  # coefficients only; alpha is irrelevant
    order = np.argsort(p.p, kind="stable")
    ratio = np.minimum(1.0, p.p[order] / t.coefficients)
    if spec.is_step_up:
        q_sorted = np.minimum.accumulate(ratio[::-1])[::-1]
    else:
        q_sorted = np.maximum.accumulate(ratio)
    q = np.empty_like(q_sorted)
    q[order] = q_sorted
    return q


def apply(spec: ProcedureSpec, p: PVector, alpha: float) -> DecisionVector:
    """Run ``spec`` on ``p`` at level alpha.

    Applies the optional p-value cap as a post-filter and, in directional
    mode, labels each surviving rejection with the sign of its observed
    statistic (upper for z > 0, lower otherwise).
    """
    t = thresholds(spec, p.m, alpha)
    crit = t.critical_values(alpha)
    mask = (
        stepup_mask(p.p, crit) if spec.is_step_up else stepdown_mask(p.p, crit)
    )
    if spec.cap is not None:
        mask = mask & (p.p <= spec.cap)
    direction = None
    if spec.directional:
        if p.z is None:
            raise ValueError("directional mode requires signed statistics")
        direction = np.where(mask, np.where(p.z > 0, 1, -1), 0).astype(np.int8)
    return DecisionVector(p.ids, mask, direction)
