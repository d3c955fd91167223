"""Pairwise tests, Bartlett's test and Benjamini-Yekutieli adjustment.

All difference tests use normal p-values: the per-machine estimates are
asymptotically normal with a random number of summands, and no small-sample
distribution is claimed. Results for machines with fewer than
``min_count_warn`` observations carry a warning instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from qnet.errors import DegenerateVariance, InsufficientData, InvalidPValue, NodeAbsent
from qnet.estimators import Estimates
from qnet.numerics import chi_square_sf, std_normal_cdf, std_normal_sf, two_sided_normal_p

ALTERNATIVES = ("two-sided", "greater", "less")
MIN_COUNT_WARN = 30


@dataclass
class TestResult:
    statistic: float
    p_value: float
    test_kind: str
    nodes: tuple[tuple[int, int], ...]
    df: int | None = None
    estimate: float | None = None
    degenerate: bool = False
    warnings: list[str] = field(default_factory=list)

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return {
            "kind": self.test_kind,
            "statistic": self.statistic if math.isfinite(self.statistic) else None,
            "p_value": self.p_value,
            "df": self.df,
            "estimate": self.estimate,
            "nodes": [{"row": i, "col": j} for i, j in self.nodes],
            "degenerate": self.degenerate,
            "warnings": list(self.warnings),
        }


def _p_value(z: float, alternative: str) -> float:
    if alternative == "two-sided":
        return two_sided_normal_p(z)
    if alternative == "greater":
        return std_normal_sf(z)
    if alternative == "less":
        return std_normal_cdf(z)
    raise ValueError(f"alternative must be one of {ALTERNATIVES}")


def _pair(est: Estimates, j: int, i: int, i2: int, min_count_warn: int):
    a = est.node(j, i)
    b = est.node(j, i2)
    for row, (count, *_rest) in ((i, a), (i2, b)):
        if count < 2:
            raise InsufficientData(f"machine ({row}, {j}) has {count} observation(s), need >= 2", node=(row, j))
    warnings = [f"machine ({row}, {j}) has only {count} observations"
                for row, (count, *_rest) in ((i, a), (i2, b)) if count < min_count_warn]
    return a, b, warnings


def _standardise(diff: float, se: float, kind: str, nodes, alternative: str, warnings) -> TestResult:
    if se > 0:
        z = diff / se
        return TestResult(z, _p_value(z, alternative), kind, nodes, estimate=diff, warnings=warnings)
    # zero standard error: the difference is either exactly zero or certain
    if diff == 0:
        return TestResult(0.0, 1.0, kind, nodes, estimate=0.0, degenerate=True, warnings=warnings)
    z = math.copysign(math.inf, diff)
    p = 0.0 if alternative == "two-sided" or (alternative == "greater") == (diff > 0) else 1.0
    return TestResult(z, p, kind, nodes, estimate=diff, degenerate=True, warnings=warnings)


def mean_diff_test(est: Estimates, j: int, i: int, i2: int, equal_variance: bool = True,
                   alternative: str = "two-sided", min_count_warn: int = MIN_COUNT_WARN) -> TestResult:
    """z-test of ``E[S(i, j)] = E[S(i2, j)]``.

    With ``equal_variance`` the pooled scale is
    ``sqrt((n1 * Sigma1 + n2 * Sigma2) / (n1 + n2))`` and the statistic
    ``sqrt(n1 * n2 / (n1 + n2)) * (T1 - T2) / scale``. Otherwise the
    Welch-type ``(T1 - T2) / sqrt(Sigma1 / n1 + Sigma2 / n2)`` is used.
    """
    (n1, t1, s1, _), (n2, t2, s2, _), warnings = _pair(est, j, i, i2, min_count_warn)
    nodes = ((i, j), (i2, j))
    if i == i2:
        return TestResult(0.0, 1.0, "mean_diff", nodes, estimate=0.0, warnings=warnings)
    diff = t1 - t2
    if equal_variance:
        pooled = math.sqrt((n1 * s1 + n2 * s2) / (n1 + n2))
        se = pooled * math.sqrt((n1 + n2) / (n1 * n2))
    else:
        se = math.sqrt(s1 / n1 + s2 / n2)
    return _standardise(diff, se, "mean_diff", nodes, alternative, warnings)


def variance_diff_test(est: Estimates, j: int, i: int, i2: int, alternative: str = "two-sided",
                       min_count_warn: int = MIN_COUNT_WARN) -> TestResult:
    """z-test of equal machine variances, scaled by the fourth-moment term ``Tau2``."""
    (n1, _, s1, q1), (n2, _, s2, q2), warnings = _pair(est, j, i, i2, min_count_warn)
    nodes = ((i, j), (i2, j))
    if i == i2:
        return TestResult(0.0, 1.0, "var_diff", nodes, estimate=0.0, warnings=warnings)
    return _standardise(s1 - s2, math.sqrt(q1 / n1 + q2 / n2), "var_diff", nodes, alternative, warnings)


def bartlett_test(est: Estimates, j: int) -> TestResult:
    """Bartlett's homogeneity-of-variance test over all machines of column ``j``."""
    if not 1 <= j <= est.topology.c:
        raise NodeAbsent(f"column {j} does not exist")
    size = est.topology.column_sizes[j - 1]
    if size < 2:
        raise InsufficientData(f"column {j} has a single machine; nothing to compare")
    counts = np.empty(size)
    variances = np.empty(size)
    for i in range(1, size + 1):
        count = int(est.counts[i - 1, j - 1])
        if count < 2:
            raise InsufficientData(f"machine ({i}, {j}) has {count} observation(s), need >= 2", node=(i, j))
        counts[i - 1] = count
        variances[i - 1] = count * est.Sigma[i - 1, j - 1] / (count - 1)
    if (variances <= 0).any():
        bad = int(np.argmax(variances <= 0)) + 1
        raise DegenerateVariance(f"machine ({bad}, {j}) has zero variance; Bartlett's statistic is undefined")
    dof = counts - 1.0
    total = dof.sum()
    pooled = (dof * variances).sum() / total
    numerator = total * math.log(pooled) - (dof * np.log(variances)).sum()
    correction = 1.0 + ((1.0 / dof).sum() - 1.0 / total) / (3.0 * (size - 1))
    stat = max(float(numerator / correction), 0.0)
    return TestResult(stat, chi_square_sf(stat, size - 1), "bartlett",
                      tuple((i, j) for i in range(1, size + 1)), df=size - 1)


def by_adjust(p_values: Sequence[float]) -> list[float]:
    """Benjamini-Yekutieli step-up adjusted p-values, in input order."""
    p = [float(v) for v in p_values]
    if not p:
        raise InvalidPValue("need at least one p-value")
    for v in p:
        if not 0.0 <= v <= 1.0:
            raise InvalidPValue(f"p-value {v} outside [0, 1]")
    m = len(p)
    harmonic = math.fsum(1.0 / k for k in range(1, m + 1))
    order = sorted(range(m), key=p.__getitem__)
    adjusted = [0.0] * m
    running = 1.0
    for rank in range(m, 0, -1):
        idx = order[rank - 1]
        running = min(running, harmonic * m / rank * p[idx], 1.0)
        adjusted[idx] = running
    return adjusted


@dataclass
class Comparison:
    node: tuple[int, int]
    reference: tuple[int, int]
    estimate: float
    statistic: float
    p_raw: float
    p_adj: float
    degenerate: bool = False


@dataclass
class ColumnComparisonReport:
    column: int
    kind: str
    alpha: float
    adjust: str
    reference_row: int | None
    comparisons: list[Comparison]
    flagged: list[Comparison]
    warnings: list[str] = field(default_factory=list)

    @property
    def flagged_nodes(self) -> list[tuple[int, int]]:
        return [c.node for c in self.flagged]

    def to_dict(self) -> dict:
        def row(c: Comparison) -> dict:
            return {
                "row": c.node[0], "ref_row": c.reference[0], "estimate": c.estimate,
                "statistic": c.statistic if math.isfinite(c.statistic) else None,
                "p_raw": c.p_raw, "p_adj": c.p_adj, "degenerate": c.degenerate,
            }
        return {
            "col": self.column, "kind": self.kind, "alpha": self.alpha, "adjust": self.adjust,
            "reference_row": self.reference_row,
            "comparisons": [row(c) for c in self.comparisons],
            "flagged": [{"row": c.node[0], "ref_row": c.reference[0], "p_adj": c.p_adj} for c in self.flagged],
            "warnings": list(self.warnings),
        }


def column_report(est: Estimates, j: int, alpha: float = 0.05, kind: str = "mean", *,
                  reference: int | None = None, all_pairs: bool = False, adjust: str = "by",
                  equal_variance: bool = True, alternative: str = "two-sided",
                  min_count_warn: int = MIN_COUNT_WARN) -> ColumnComparisonReport:
    """Compare every machine of column ``j`` with a reference machine (default the last).

    With ``all_pairs`` every unordered pair is tested instead. The p-values of
    the column are adjusted jointly and comparisons with adjusted p < alpha
    are flagged.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if kind not in ("mean", "variance"):
        raise ValueError("kind must be 'mean' or 'variance'")
    if adjust not in ("by", "none"):
        raise ValueError("adjust must be 'by' or 'none'")
    if not 1 <= j <= est.topology.c:
        raise NodeAbsent(f"column {j} does not exist")
    size = est.topology.column_sizes[j - 1]
    if all_pairs:
        reference = None
        pairs = [(i, i2) for i in range(1, size + 1) for i2 in range(i + 1, size + 1)]
    else:
        reference = size if reference is None else reference
        if not 1 <= reference <= size:
            raise NodeAbsent(f"reference machine {reference} does not exist in column {j}")
        pairs = [(i, reference) for i in range(1, size + 1) if i != reference]

    results = []
    for i, i2 in pairs:
        if kind == "mean":
            res = mean_diff_test(est, j, i, i2, equal_variance, alternative, min_count_warn)
        else:
            res = variance_diff_test(est, j, i, i2, alternative, min_count_warn)
        results.append(res)

    raw = [res.p_value for res in results]
    adjusted = (by_adjust(raw) if adjust == "by" else raw) if raw else []
    comparisons = [
        Comparison((i, j), (i2, j), res.estimate, res.statistic, p, q, res.degenerate)
        for (i, i2), res, p, q in zip(pairs, results, raw, adjusted)
    ]
    warnings = sorted({w for res in results for w in res.warnings})
    return ColumnComparisonReport(j, kind, alpha, adjust, reference, comparisons,
                                  [c for c in comparisons if c.p_adj < alpha], warnings)
