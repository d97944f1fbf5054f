"""Trait subgrouping, descriptive statistics, two-sample tests and KDE.

Quantiles everywhere use linear interpolation between order statistics
(position ``q * (n - 1)`` in the sorted sample, Hyndman-Fan type 7), so
subgroup cut points and reported quartiles agree.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import AnalysisError

STAR_LEVELS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))
ALPHA = 0.05
REPORT_COLUMNS = (
    "trait", "subgroup", "n", "median", "q1", "q3", "kw_stat", "kw_p", "ks_stat", "ks_p",
)
HIGH, LOW, MIDDLE = "high", "low", "middle"


class DegeneratePartitionWarning(UserWarning):
    """Low and high cut points coincide, so the groups overlap."""


def quantile(sample: Iterable[float], q: float) -> float:
    xs = sorted(float(x) for x in sample)
    if not xs:
        raise ValueError("quantile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    pos = q * (len(xs) - 1)
    lo = math.floor(pos)
    frac = pos - lo
    if frac == 0.0:
        return xs[lo]
    return xs[lo] + frac * (xs[lo + 1] - xs[lo])


@dataclass(frozen=True)
class SubgroupPartition:
    trait: str
    low: frozenset[str]
    middle: frozenset[str]
    high: frozenset[str]
    low_cut: float
    high_cut: float
    degenerate: bool = False

    def __post_init__(self) -> None:
        if not self.degenerate:
            if self.low & self.high or self.low & self.middle or self.high & self.middle:
                raise ValueError("subgroups overlap")

    def groups(self) -> dict[str, frozenset[str]]:
        return {HIGH: self.high, LOW: self.low, MIDDLE: self.middle}

    @property
    def members(self) -> frozenset[str]:
        return self.low | self.middle | self.high


def _score(profile, trait: str) -> float:
    if isinstance(profile, (int, float)):
        return float(profile)
    return float(profile.score(trait))


def percentile_split(
    profiles: Mapping[str, object],
    trait: str,
    low_q: float = 0.25,
    high_q: float = 0.75,
    egos: Iterable[str] | None = None,
) -> SubgroupPartition:
    """Split egos into low (score <= P_low), high (score >= P_high) and middle.

    ``profiles`` maps ego id to a :class:`~egodyn.ingest.TraitProfile` or to a
    bare score. ``egos`` restricts the population (e.g. to retained egos).
    """
    if not 0.0 <= low_q <= high_q <= 1.0:
        raise ValueError("need 0 <= low_q <= high_q <= 1")
    ids = sorted(profiles if egos is None else set(egos) & set(profiles))
    if len(ids) < 4:
        raise AnalysisError(f"percentile split needs at least 4 profiles, got {len(ids)}")
    scores = {e: _score(profiles[e], trait) for e in ids}
    low_cut = quantile(scores.values(), low_q)
    high_cut = quantile(scores.values(), high_q)
    low = frozenset(e for e in ids if scores[e] <= low_cut)
    high = frozenset(e for e in ids if scores[e] >= high_cut)
    middle = frozenset(ids) - low - high
    degenerate = bool(low & high)
    if degenerate:
        warnings.warn(
            f"{trait}: low and high cut points coincide at {low_cut:g}; groups overlap",
            DegeneratePartitionWarning,
            stacklevel=2,
        )
    return SubgroupPartition(trait, low, middle, high, low_cut, high_cut, degenerate)


@dataclass(frozen=True, slots=True)
class DescriptiveStats:
    median: float
    q1: float
    q3: float
    n: int


def descriptive(sample: Sequence[float]) -> DescriptiveStats:
    if len(sample) == 0:
        raise AnalysisError("descriptive statistics of an empty sample")
    return DescriptiveStats(
        median=quantile(sample, 0.5),
        q1=quantile(sample, 0.25),
        q3=quantile(sample, 0.75),
        n=len(sample),
    )


def significance_stars(p: float) -> str:
    for level, mark in STAR_LEVELS:
        if p < level:
            return mark
    return "ns"


@dataclass(frozen=True, slots=True)
class TestResult:
    test: str
    statistic: float
    p_value: float
    stars: str = field(init=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value!r} outside [0, 1]")
        object.__setattr__(self, "stars", significance_stars(self.p_value))

    @property
    def significant(self) -> bool:
        return self.p_value < ALPHA

    def format(self, digits: int = 2) -> str:
        """Table cell such as ``9.31**``."""
        suffix = "" if self.stars == "ns" else self.stars
        return f"{self.statistic:.{digits}f}{suffix}"

    __test__ = False  # not a pytest class


def midranks(values: Sequence[float]) -> tuple[list[float], list[int]]:
    """1-based average ranks and the sizes of every tie block."""
    order = sorted(range(len(values)), key=lambda k: values[k])
    ranks = [0.0] * len(values)
    ties = []
    start = 0
    while start < len(order):
        stop = start + 1
        while stop < len(order) and values[order[stop]] == values[order[start]]:
            stop += 1
        avg = (start + stop + 1) / 2.0
        for k in order[start:stop]:
            ranks[k] = avg
        ties.append(stop - start)
        start = stop
    return ranks, ties


def _check_sizes(a: Sequence[float], b: Sequence[float], name: str) -> None:
    if len(a) < 3 or len(b) < 3:
        raise AnalysisError(f"{name} needs at least 3 values per sample, got {len(a)} and {len(b)}")


def chi2_sf_1df(x: float) -> float:
    return math.erfc(math.sqrt(max(x, 0.0) / 2.0))


def kruskal_wallis(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-group Kruskal-Wallis H with midranks and tie correction.

    The p-value is the upper tail of chi-square with one degree of freedom.
    """
    _check_sizes(a, b, "Kruskal-Wallis")
    pooled = [float(x) for x in a] + [float(x) for x in b]
    n = len(pooled)
    ranks, ties = midranks(pooled)
    r_a = math.fsum(ranks[: len(a)])
    r_b = math.fsum(ranks[len(a):])
    h = 12.0 / (n * (n + 1)) * (r_a * r_a / len(a) + r_b * r_b / len(b)) - 3.0 * (n + 1)
    correction = 1.0 - sum(t**3 - t for t in ties) / (n**3 - n)
    if correction <= 0.0:
        return TestResult("KW", 0.0, 1.0)
    h = h / correction if h > 0.0 else 0.0
    return TestResult("KW", h, min(1.0, chi2_sf_1df(h)))


def ks_statistic(a: Sequence[float], b: Sequence[float]) -> float:
    """sup |F_a - F_b| evaluated with integer arithmetic at every sample value."""
    xa, xb = sorted(a), sorted(b)
    na, nb = len(xa), len(xb)
    best = 0
    for v in set(xa) | set(xb):
        diff = abs(bisect_right(xa, v) * nb - bisect_right(xb, v) * na)
        best = max(best, diff)
    return best / (na * nb)


def kolmogorov_sf(x: float) -> float:
    """Survival function of the Kolmogorov distribution, P(K > x)."""
    if x <= 0.0:
        return 1.0
    if x < 1.18:
        y = math.exp(-(math.pi**2) / (8.0 * x * x))
        cdf = math.sqrt(2.0 * math.pi) / x * sum(y ** ((2 * k - 1) ** 2) for k in range(1, 8))
        return min(1.0, max(0.0, 1.0 - cdf))
    s = sum((-1) ** (k - 1) * math.exp(-2.0 * k * k * x * x) for k in range(1, 101))
    return min(1.0, max(0.0, 2.0 * s))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sample Kolmogorov-Smirnov D with the asymptotic two-sided p-value."""
    _check_sizes(a, b, "Kolmogorov-Smirnov")
    d = ks_statistic(a, b)
    en = len(a) * len(b) / (len(a) + len(b))
    return TestResult("KS", d, kolmogorov_sf(math.sqrt(en) * d))


def scott_factor(n: int, d: int = 1) -> float:
    return n ** (-1.0 / (d + 4))


def scott_bandwidth(sample: Sequence[float], d: int = 1) -> float:
    x = np.asarray(sample, dtype=float)
    return float(x.std(ddof=1)) * scott_factor(len(x), d)


def kde_1d(sample: Sequence[float], grid: Sequence[float]) -> np.ndarray:
    """Gaussian KDE with Scott's bandwidth ``sd * n**(-1/5)``."""
    x = np.asarray(sample, dtype=float)
    if x.size < 2:
        raise AnalysisError("KDE needs at least 2 sample values")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise AnalysisError(
            "KDE of a zero-variance sample; add a small jitter or report the point mass directly"
        )
    h = sd * scott_factor(x.size, 1)
    g = np.asarray(grid, dtype=float)
    z = (g[:, None] - x[None, :]) / h
    return np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * math.sqrt(2.0 * math.pi))


def kde_2d(
    points: Sequence[tuple[float, float]],
    grid_x: Sequence[float],
    grid_y: Sequence[float],
) -> np.ndarray:
    """Product-Gaussian KDE, per-axis bandwidth ``sd_d * n**(-1/6)``.

    Returns an array of shape ``(len(grid_x), len(grid_y))``.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    n = p.shape[0]
    if n < 2:
        raise AnalysisError("2-D KDE needs at least 2 points")
    sd = p.std(axis=0, ddof=1)
    if not np.all(sd > 0):
        raise AnalysisError("2-D KDE: one axis has zero spread")
    hx, hy = sd * scott_factor(n, 2)
    zx = (np.asarray(grid_x, dtype=float)[:, None] - p[None, :, 0]) / hx
    zy = (np.asarray(grid_y, dtype=float)[:, None] - p[None, :, 1]) / hy
    kx = np.exp(-0.5 * zx * zx)
    ky = np.exp(-0.5 * zy * zy)
    return (kx @ ky.T) / (n * hx * hy * 2.0 * math.pi)


def kde_grid(sample: Sequence[float], n_points: int = 200, pad: float = 3.0) -> np.ndarray:
    """Evenly spaced grid covering the sample plus ``pad`` bandwidths each side."""
    x = np.asarray(sample, dtype=float)
    h = scott_bandwidth(x) if x.size > 1 else 0.0
    return np.linspace(x.min() - pad * h, x.max() + pad * h, n_points)


@dataclass(frozen=True)
class ReportRow:
    trait: str
    subgroup: str
    stats: DescriptiveStats
    kw: TestResult
    ks: TestResult


def _pool(samples: Mapping[str, Sequence[float]], egos: Iterable[str], label: str) -> list[float]:
    pooled = []
    for ego in sorted(egos):
        values = samples.get(ego)
        if not values:
            raise AnalysisError(f"ego {ego!r} ({label}) has no metric values")
        pooled.extend(float(v) for v in values)
    if not pooled:
        raise AnalysisError(f"subgroup {label!r} has an empty sample")
    return pooled


def compare_subgroups(
    samples: Mapping[str, Sequence[float]], partition: SubgroupPartition
) -> list[ReportRow]:
    """Descriptives for the high and low groups plus KW and KS between them.

    Each ego may contribute several values (e.g. one per interval pair); they
    are pooled per group.
    """
    high = _pool(samples, partition.high, HIGH)
    low = _pool(samples, partition.low, LOW)
    kw = kruskal_wallis(high, low)
    ks = ks_two_sample(high, low)
    return [
        ReportRow(partition.trait, HIGH, descriptive(high), kw, ks),
        ReportRow(partition.trait, LOW, descriptive(low), kw, ks),
    ]


def write_report(rows: Iterable[ReportRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in rows:
            writer.writerow([
                r.trait, r.subgroup, r.stats.n,
                f"{r.stats.median:.6f}", f"{r.stats.q1:.6f}", f"{r.stats.q3:.6f}",
                f"{r.kw.statistic:.6f}", f"{r.kw.p_value:.6f}",
                f"{r.ks.statistic:.6f}", f"{r.ks.p_value:.6f}",
            ])


def render_table(rows: Sequence[ReportRow], title: str = "") -> str:
    """Fixed-width text table; test cells appear on the high row only when p < 0.05."""
    header = f"{'trait':<22}{'group':<8}{'median':>10}{'Q1':>10}{'Q3':>10}{'KW':>12}{'KS':>10}"
    lines = [title] if title else []
    lines += [header, "-" * len(header)]
    previous = None
    for r in rows:
        trait = r.trait if r.trait != previous else ""
        previous = r.trait
        kw = r.kw.format() if r.subgroup == HIGH and r.kw.significant else ""
        ks = r.ks.format() if r.subgroup == HIGH and r.ks.significant else ""
        lines.append(
            f"{trait:<22}{r.subgroup:<8}{r.stats.median:>10.3f}{r.stats.q1:>10.3f}"
            f"{r.stats.q3:>10.3f}{kw:>12}{ks:>10}"
        )
    lines.append("* p<0.05, ** p<0.01, *** p<0.001")
    return "\n".join(lines) + "\n"


def write_kde_1d(grid: Sequence[float], density: Sequence[float], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "density"])
        for x, d in zip(grid, density):
            writer.writerow([f"{x:.6f}", f"{d:.6f}"])


def write_kde_2d(grid_x, grid_y, density: np.ndarray, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "density"])
        for i, x in enumerate(grid_x):
            for j, y in enumerate(grid_y):
                writer.writerow([f"{x:.6f}", f"{y:.6f}", f"{density[i, j]:.6f}"])
