"""Domain types and error-rate metrics for families of hypothesis tests.

The quantities follow the standard two-by-two bookkeeping for multiple
tests: among m hypotheses, m0 null hypotheses are true and m1 are false;
a procedure rejects R of them, of which V are true nulls (false
discoveries) and S are false nulls (true discoveries).  U and T count the
non-rejected true and false nulls.  Everything downstream (FDR, FWER,
k-FWER, FNR, power variants, classification losses) is an expectation or
tail probability of these counts, estimated here by Monte Carlo averages
over replicates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "PVector",
    "DecisionVector",
    "ConfusionTable",
    "ReplicateIndicators",
    "MetricValue",
    "MetricsReport",
    "tabulate",
    "replicate_indicators",
    "aggregate",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PVector:
    """An identified vector of p-values, optionally with ground truth.

    ``truth[i]`` is True when hypothesis i is a true null.  ``sign[i]`` is
    the true effect direction in {-1, 0, +1}; when both are present a zero
    sign must coincide with a true null.  ``z`` carries observed signed
    test statistics, needed only for directional decision-making.
    """

    ids: tuple[str, ...]
    p: np.ndarray
    truth: np.ndarray | None = None
    sign: np.ndarray | None = None
    z: np.ndarray | None = None

    def __post_init__(self):
        p = _readonly(np.asarray(self.p, dtype=np.float64))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        m = len(self.ids)
        if p.ndim != 1 or p.shape[0] != m:
            raise ValueError("p must be a 1-d array matching ids")
        if m == 0:
            raise ValueError("empty p-value vector")
        if len(set(self.ids)) != m:
            raise ValueError("duplicate ids")
        if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("p-values must lie in [0, 1]")
        for name in ("truth", "sign", "z"):
            a = getattr(self, name)
            if a is None:
                continue
            dtype = {"truth": bool, "sign": np.int8, "z": np.float64}[name]
            a = _readonly(np.asarray(a, dtype=dtype))
            if a.shape != (m,):
                raise ValueError(f"{name} must match the number of entries")
            object.__setattr__(self, name, a)
        if self.sign is not None and np.any(~np.isin(self.sign, (-1, 0, 1))):
            raise ValueError("sign entries must be -1, 0 or +1")
        if self.sign is not None and self.truth is not None:
            if np.any((self.sign == 0) != self.truth):
                raise ValueError("sign = 0 must coincide with true nulls")

    @property
    def m(self) -> int:
        return len(self.ids)

    @classmethod
    def from_pairs(
        cls,
        pairs: Iterable[tuple[str, float]],
        truth: Sequence[bool] | None = None,
        sign: Sequence[int] | None = None,
        z: Sequence[float] | None = None,
    ) -> "PVector":
        ids, p = zip(*pairs)
        return cls(tuple(ids), np.asarray(p, dtype=np.float64), truth, sign, z)


@dataclass(frozen=True)
class DecisionVector:
    """Per-hypothesis accept/reject decisions, id-aligned with a PVector.

    ``direction`` is present only for directional procedures: +1 for an
    upper (positive-effect) rejection, -1 for a lower one, 0 where the
    hypothesis was not rejected.
    """

    ids: tuple[str, ...]
    reject: np.ndarray
    direction: np.ndarray | None = None

    def __post_init__(self):
        r = _readonly(np.asarray(self.reject, dtype=bool))
        object.__setattr__(self, "reject", r)
        object.__setattr__(self, "ids", tuple(self.ids))
        if r.shape != (len(self.ids),):
            raise ValueError("reject must match ids")
        if self.direction is not None:
            d = _readonly(np.asarray(self.direction, dtype=np.int8))
            if d.shape != r.shape:
                raise ValueError("direction must match ids")
            if np.any((d != 0) & ~r) or np.any(r & (d == 0)):
                raise ValueError("direction must be set exactly on rejections")
            object.__setattr__(self, "direction", d)

    @property
    def n_reject(self) -> int:
        return int(self.reject.sum())

    def rejected_ids(self) -> set[str]:
        return {i for i, r in zip(self.ids, self.reject) if r}


@dataclass(frozen=True)
class ConfusionTable:
    """Counts of true/false nulls crossed with reject/accept decisions."""

    U: int
    V: int
    T: int
    S: int

    def __post_init__(self):
        for name in ("U", "V", "T", "S"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValueError(f"{name} must be a nonnegative integer")
            object.__setattr__(self, name, int(v))

    @property
    def m0(self) -> int:
        return self.U + self.V

    @property
    def m1(self) -> int:
        return self.T + self.S

    @property
    def R(self) -> int:
        return self.V + self.S

    @property
    def m(self) -> int:
        return self.m0 + self.m1


@dataclass(frozen=True)
class ReplicateIndicators:
    """Per-replicate error and power indicators derived from one table.

    ``exceed_k[j]`` is the indicator of V > k_list[j]; ``fdp_exceed[j]`` of
    FDP > gamma_list[j].  ``target_rejections`` optionally records 0/1
    rejection indicators for specific false-null hypotheses so per-target
    power can be aggregated.
    """

    fdp: float
    fnp: float
    v: int
    r: int
    s: int
    any_power: int
    all_power: int
    frac_power: float
    misclassified: int
    any_error_family: int
    exceed_k: tuple[int, ...] = ()
    fdp_exceed: tuple[int, ...] = ()
    target_rejections: tuple[int, ...] | None = None


@dataclass(frozen=True)
class MetricValue:
    """A Monte Carlo estimate with its empirical standard error.

    ``estimate`` is None when the criterion is undefined on the given
    replicates (pFDR with no rejections anywhere); ``se`` is None when a
    standard error cannot be formed (fewer than two contributing
    replicates).
    """

    estimate: float | None
    se: float | None
    n: int


@dataclass
class MetricsReport:
    """Aggregated criteria, keyed by canonical criterion label."""

    criteria: dict[str, MetricValue] = field(default_factory=dict)
    replicate_count: int = 0

    def __getitem__(self, key: str) -> MetricValue:
        return self.criteria[key]

    def labels(self) -> list[str]:
        return list(self.criteria)


def _truth_array(ids: tuple[str, ...], truth) -> np.ndarray:
    if isinstance(truth, Mapping):
        missing = set(ids) ^ set(truth)
        if missing:
            raise ValueError(f"truth ids do not match decisions: {sorted(missing)}")
        return np.array([bool(truth[i]) for i in ids])
    arr = np.asarray(truth, dtype=bool)
    if arr.shape != (len(ids),):
        raise ValueError("truth flags must cover every decision id")
    return arr


def tabulate(decisions: DecisionVector, truth) -> ConfusionTable:
    """Cross-count decisions against true states.

    ``truth`` is a mapping id -> bool or a bool array aligned with
    ``decisions.ids``; True marks a true null hypothesis.
    """
    t = _truth_array(decisions.ids, truth)
    r = decisions.reject
    return ConfusionTable(
        U=int((t & ~r).sum()),
        V=int((t & r).sum()),
        T=int((~t & ~r).sum()),
        S=int((~t & r).sum()),
    )


def replicate_indicators(
    table: ConfusionTable,
    k_list: Sequence[int] = (),
    gamma_list: Sequence[float] = (),
    target_rejections: Sequence[int] | None = None,
) -> ReplicateIndicators:
    """Reduce one confusion table to the indicators used by `aggregate`.

    Ratio conventions: FDP = V/R and the fraction of false nulls rejected
    are 0 when their denominator is 0; FNP = T/(m-R), also 0 on 0/0.
    """
    r = table.R
    m = table.m
    fdp = table.V / r if r > 0 else 0.0
    fnp = table.T / (m - r) if m - r > 0 else 0.0
    frac = table.S / table.m1 if table.m1 > 0 else 0.0
    return ReplicateIndicators(
        fdp=fdp,
        fnp=fnp,
        v=table.V,
        r=r,
        s=table.S,
        any_power=int(table.S >= 1),
        all_power=int(table.m1 > 0 and table.S == table.m1),
        frac_power=frac,
        misclassified=table.V + table.T,
        any_error_family=int(table.V + table.T > 0),
        exceed_k=tuple(int(table.V > k) for k in k_list),
        fdp_exceed=tuple(int(fdp > g) for g in gamma_list),
        target_rejections=None
        if target_rejections is None
        else tuple(int(x) for x in target_rejections),
    )


def _mean_se(values: np.ndarray) -> MetricValue:
    # fsum keeps the reduction exact, hence independent of any upstream
    # evaluation order or thread count.
    n = values.shape[0]
    mean = math.fsum(values) / n
    if n < 2:
        return MetricValue(mean, None, n)
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return MetricValue(mean, math.sqrt(var / n), n)


def aggregate(
    replicates: Iterable[ReplicateIndicators],
    m: int,
    m1: int,
    k_list: Sequence[int] = (),
    gamma_list: Sequence[float] = (),
    lam: float = 1.0,
    per_id_power_targets: Sequence[str] = (),
) -> MetricsReport:
    """Aggregate replicate indicators into every supported criterion.

    Parameters
    ----------
    replicates : iterable of ReplicateIndicators
        One entry per Monte Carlo replicate, in replicate-index order.
    m, m1 : int
        Family size and number of false nulls, shared by all replicates.
    k_list, gamma_list : sequences
        Thresholds for the V > k and FDP > gamma tail criteria.
    lam : float
        Weight of FDR in the combined risk FNR + lam * FDR.
    per_id_power_targets : sequence of str
        Ids labelling the columns of ``target_rejections``; when set,
        every replicate must carry an aligned tuple.

    Returns a MetricsReport whose labels are stable across runs.  pFDR is
    flagged undefined (estimate None) when no replicate rejected anything.
    """
    reps = list(replicates)
    n = len(reps)
    if n == 0:
        raise ValueError("at least one replicate is required")
    if m <= 0 or not 0 <= m1 <= m:
        raise ValueError("invalid m, m1")

    fdp = np.array([x.fdp for x in reps])
    fnp = np.array([x.fnp for x in reps])
    v = np.array([x.v for x in reps], dtype=np.float64)
    r = np.array([x.r for x in reps], dtype=np.float64)
    s = np.array([x.s for x in reps], dtype=np.float64)
    mis = np.array([x.misclassified for x in reps], dtype=np.float64)
    t_cnt = mis - v
    if np.any(v > r) or np.any(r > m) or np.any(s > m1):
        raise ValueError("replicate counts inconsistent with m, m1")

    rep = MetricsReport(replicate_count=n)
    crit = rep.criteria
    crit["pcer"] = _mean_se(v / m)
    crit["pfer"] = _mean_se(v)
    crit["fwer"] = _mean_se((v > 0).astype(np.float64))
    crit["fdr"] = _mean_se(fdp)

    cond = r > 0
    if cond.any():
        crit["pfdr"] = _mean_se(fdp[cond])
    else:
        crit["pfdr"] = MetricValue(None, None, 0)

    for k in k_list:
        crit[f"kfwer({k})"] = _mean_se((v > k).astype(np.float64))
    for g in gamma_list:
        crit[f"fdp_exceedance({g!r})"] = _mean_se((fdp > g).astype(np.float64))

    crit["fnr"] = _mean_se(fnp)
    crit["frr"] = crit["pfer"]
    crit["far"] = _mean_se(t_cnt)

    crit["power_any"] = _mean_se((s >= 1).astype(np.float64))
    crit["power_all"] = _mean_se(
        (s == m1).astype(np.float64) if m1 > 0 else np.zeros(n)
    )
    if per_id_power_targets:
        cols = np.array(
            [x.target_rejections for x in reps], dtype=np.float64
        )
        if cols.shape != (n, len(per_id_power_targets)):
            raise ValueError("target_rejections missing or misaligned")
        for j, tid in enumerate(per_id_power_targets):
            crit[f"power_target({tid})"] = _mean_se(cols[:, j])
    crit["power_avg"] = _mean_se(np.array([x.frac_power for x in reps]))
    for k in k_list:
        crit[f"power_exceedance({k})"] = _mean_se((s > k).astype(np.float64))

    crit["classification_risk"] = _mean_se(mis / m)
    crit["family_loss"] = _mean_se(
        np.array([x.any_error_family for x in reps], dtype=np.float64)
    )
    combined = fnp + lam * fdp
    cv = _mean_se(combined)
    fdr_e = crit["fdr"].estimate
    fnr_e = crit["fnr"].estimate
    crit[f"combined_risk({lam!r})"] = MetricValue(fnr_e + lam * fdr_e, cv.se, n)
    return rep
