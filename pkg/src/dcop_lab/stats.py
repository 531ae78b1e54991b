"""Kruskal-Wallis omnibus test with Dunn/Bonferroni pairwise post-hoc."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaincc

from .problems import ConfigurationError


def midranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with tied values sharing the average of their positions."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _tie_sum(values: np.ndarray) -> float:
    _, counts = np.unique(values, return_counts=True)
    return float(np.sum(counts**3 - counts))


def _validate(samples: Mapping[str, Sequence[float]] | Sequence[Sequence[float]]) -> tuple[list[str], list[np.ndarray]]:
    if isinstance(samples, Mapping):
        names = list(samples)
        groups = [np.asarray(samples[k], dtype=float) for k in names]
    else:
        groups = [np.asarray(g, dtype=float) for g in samples]
        names = [str(i) for i in range(len(groups))]
    if len(groups) < 2:
        raise ConfigurationError("need at least two groups")
    for name, g in zip(names, groups):
        if len(g) < 2:
            raise ConfigurationError(f"group {name!r} needs at least two observations")
        if not np.all(np.isfinite(g)):
            raise ConfigurationError(f"group {name!r} contains non-finite values")
    return names, groups


def chi2_sf(x: float, df: int) -> float:
    if x <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def kruskal_wallis(samples) -> tuple[float, float]:
    """(H, p) with midranks and the usual tie correction."""
    _, groups = _validate(samples)
    pooled = np.concatenate(groups)
    n = len(pooled)
    ranks = midranks(pooled)
    correction = 1.0 - _tie_sum(pooled) / (n**3 - n)
    if correction <= 0:
        return 0.0, 1.0
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start : start + len(g)]
        h += r.sum() ** 2 / len(g)
        start += len(g)
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    h = max(h / correction, 0.0)
    return float(h), chi2_sf(h, len(groups) - 1)


@dataclass(frozen=True)
class PairResult:
    first: str
    second: str
    z: float  # positive when ``first`` ranks higher (worse MOF)
    p_corrected: float
    significant: bool

    @property
    def worse(self) -> str:
        return self.first if self.z > 0 else self.second

    @property
    def better(self) -> str:
        return self.second if self.z > 0 else self.first


@dataclass
class ComparisonReport:
    h_statistic: float
    p_value: float
    omnibus_significant: bool
    pairs: list[PairResult] = field(default_factory=list)

    @property
    def ordered_pairs(self) -> list[tuple[str, str]]:
        return [(p.worse, p.better) for p in self.pairs if p.significant]


def bonferroni_posthoc(samples, alpha: float = 0.05) -> ComparisonReport:
    """Dunn z on the joint KW ranks, Bonferroni-corrected over all pairs.

    A pair is reported only when both the omnibus test and the corrected
    pairwise test reject at ``alpha``.
    """
    names, groups = _validate(samples)
    h, p = kruskal_wallis(groups)
    omnibus = p < alpha
    pooled = np.concatenate(groups)
    n = len(pooled)
    ranks = midranks(pooled)
    bounds = np.cumsum([0] + [len(g) for g in groups])
    mean_rank = [ranks[bounds[i] : bounds[i + 1]].mean() for i in range(len(groups))]
    var_unit = n * (n + 1) / 12.0 - _tie_sum(pooled) / (12.0 * (n - 1))
    m = len(groups) * (len(groups) - 1) // 2
    report = ComparisonReport(h, p, omnibus)
    for i, j in combinations(range(len(groups)), 2):
        se = math.sqrt(max(var_unit, 0.0) * (1.0 / len(groups[i]) + 1.0 / len(groups[j])))
        diff = float(mean_rank[i] - mean_rank[j])
        z = diff / se if se > 0 else 0.0
        p_pair = math.erfc(abs(z) / math.sqrt(2.0))
        p_corr = min(1.0, p_pair * m)
        report.pairs.append(PairResult(names[i], names[j], z, p_corr, omnibus and p_corr < alpha))
    return report


def table2_relations(report: ComparisonReport, numbers: Mapping[str, int]) -> list[str]:
    """``"i>j"`` strings (worse > better) sorted by the numeric labels."""
    rel = [(numbers[w], numbers[b]) for w, b in report.ordered_pairs]
    return [f"{w}>{b}" for w, b in sorted(rel)]
