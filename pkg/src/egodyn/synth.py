"""Seeded synthetic populations with known churn and rank-noise parameters.

Each ego keeps an ordered list of alters. Rank ``r`` carries weight
``r ** -exponent``. Between intervals every alter is replaced with the ego's
churn probability (the newcomer takes over the slot) and surviving alters'
log-weights are jittered by Gaussian noise of the ego's rank-noise scale, after
which the list is re-sorted. Calls in an interval are spread over the list by
the rank weights. Trait scores shift churn and noise linearly.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError
from .ingest import (
    CALL_COLUMNS,
    OUTGOING,
    SCORE_MAX,
    SCORE_MIN,
    TRAIT_COLUMNS,
    TRAITS,
    CallRecord,
    IntervalSpec,
    TraitProfile,
    build_networks,
    partition_intervals,
    retain_active_egos,
)

MULTINOMIAL = "multinomial"
PROPORTIONAL = "proportional"
SCORE_CENTER = (SCORE_MIN + SCORE_MAX) / 2
SCORE_HALF_RANGE = (SCORE_MAX - SCORE_MIN) / 2


@dataclass(frozen=True)
class TraitEffect:
    churn_slope: float = 0.0
    noise_slope: float = 0.0


@dataclass(frozen=True)
class GeneratorConfig:
    n_egos: int = 100
    n_intervals: int = 3
    # defaults give a population mean Jaccard of about 0.257 at 80 alters
    calls_per_ego: int = 600
    network_size: int = 80
    signature_exponent: float = 1.0
    churn_prob: float = 0.56
    rank_noise: float = 0.3
    trait_effect: Mapping[str, TraitEffect] = field(default_factory=dict)
    seed: int = 0
    # per-ego heterogeneity (log-normal sigma for size/volume, sd for the exponent)
    size_spread: float = 0.2
    exponent_spread: float = 0.3
    alter_pool: int = 2000
    allocation: str = MULTINOMIAL
    trait_mean: float = 45.0
    trait_sd: float = 8.0
    study_start: date = date(2013, 10, 1)
    interval_days: int = 153

    def __post_init__(self) -> None:
        problems = []
        if self.n_egos < 1:
            problems.append("n_egos must be positive")
        if self.n_intervals < 2:
            problems.append("n_intervals must be at least 2")
        if self.calls_per_ego < 1 or self.network_size < 1:
            problems.append("calls_per_ego and network_size must be positive")
        if not 0.0 <= self.churn_prob <= 1.0:
            problems.append("churn_prob must lie in [0, 1]")
        if not self.signature_exponent > 0:
            problems.append("signature_exponent must be positive")
        if self.rank_noise < 0:
            problems.append("rank_noise must be non-negative")
        if self.size_spread < 0 or self.exponent_spread < 0:
            problems.append("spreads must be non-negative")
        if self.allocation not in (MULTINOMIAL, PROPORTIONAL):
            problems.append(f"allocation must be {MULTINOMIAL!r} or {PROPORTIONAL!r}")
        if self.interval_days < 1:
            problems.append("interval_days must be positive")
        unknown = set(self.trait_effect) - set(TRAITS)
        if unknown:
            problems.append(f"unknown trait(s) in trait_effect: {sorted(unknown)}")
        # churn draws replacements from outside the current list, so keep headroom
        if self.max_network_size() * 2 > self.alter_pool:
            problems.append(
                f"alter_pool={self.alter_pool} too small for networks up to "
                f"{self.max_network_size()} alters"
            )
        if problems:
            raise ConfigError("; ".join(problems))

    def max_network_size(self) -> int:
        return int(math.ceil(self.network_size * math.exp(4 * self.size_spread)))

    def intervals(self) -> list[IntervalSpec]:
        return partition_intervals(
            self.study_start, self.n_intervals, timedelta(days=self.interval_days)
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trait_effect"] = {k: asdict(v) for k, v in sorted(self.trait_effect.items())}
        d["study_start"] = self.study_start.isoformat()
        return d


@dataclass
class SyntheticDataset:
    records: list[CallRecord]
    profiles: dict[str, TraitProfile]
    manifest: dict


def _standardized(score: float) -> float:
    return (score - SCORE_CENTER) / SCORE_HALF_RANGE


def _apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder split of ``total`` calls, ties to the better rank."""
    exact = total * weights
    base = np.floor(exact).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        order = np.argsort(-(exact - base), kind="stable")
        base[order[:short]] += 1
    return base


def _generate_ego(config: GeneratorConfig, index: int, intervals: list[IntervalSpec]):
    rng = np.random.default_rng([config.seed, index])
    ego = f"e{index:04d}"
    scores = {
        t: float(np.clip(np.rint(rng.normal(config.trait_mean, config.trait_sd)), SCORE_MIN, SCORE_MAX))
        for t in TRAITS
    }
    churn = config.churn_prob
    noise = config.rank_noise
    for trait, eff in config.trait_effect.items():
        z = _standardized(scores[trait])
        churn += eff.churn_slope * z
        noise += eff.noise_slope * z
    churn = float(min(1.0, max(0.0, churn)))
    noise = float(max(0.0, noise))
    jitter = rng.normal(size=3)
    size = max(1, int(round(config.network_size * math.exp(config.size_spread * min(4, max(-4, jitter[0]))))))
    volume = max(1, int(round(config.calls_per_ego * math.exp(config.size_spread * min(4, max(-4, jitter[1]))))))
    exponent = max(0.05, config.signature_exponent + config.exponent_spread * jitter[2])

    ranks = np.arange(1, size + 1, dtype=float)
    log_w = -exponent * np.log(ranks)
    weights = np.exp(log_w)
    weights /= weights.sum()

    pool = config.alter_pool
    order = [int(a) for a in rng.choice(pool, size=size, replace=False)]
    rows = []
    for t, iv in enumerate(intervals):
        if t > 0:
            current = set(order)
            survived = np.ones(size, dtype=bool)
            for slot in range(size):
                if rng.random() < churn:
                    current.discard(order[slot])
                    while True:
                        candidate = int(rng.integers(pool))
                        if candidate not in current and candidate != order[slot]:
                            break
                    current.add(candidate)
                    order[slot] = candidate
                    survived[slot] = False
            keys = log_w + noise * rng.normal(size=size) * survived
            perm = np.argsort(-keys, kind="stable")
            order = [order[k] for k in perm]
        if config.allocation == MULTINOMIAL:
            counts = rng.multinomial(int(rng.poisson(volume)), weights)
        else:
            counts = _apportion(volume, weights)
        n_calls = int(counts.sum())
        span = int((iv.end - iv.start).total_seconds())
        offsets = np.sort(rng.integers(0, span, size=n_calls))
        durations = rng.integers(5, 900, size=n_calls)
        owners = rng.permutation(np.repeat(np.arange(size), counts))
        base = int(iv.start.timestamp())
        names = [f"{ego}_a{a:05d}" for a in order]
        rows.extend(
            (base + off, ego, names[slot], dur)
            for off, dur, slot in zip(offsets.tolist(), durations.tolist(), owners.tolist())
        )

    truth = {
        "ego_id": ego,
        "churn": round(churn, 6),
        "rank_noise": round(noise, 6),
        "network_size": size,
        "calls_per_interval": volume,
        "signature_exponent": round(float(exponent), 6),
    }
    return rows, TraitProfile(ego, **scores), truth


def generate(config: GeneratorConfig) -> SyntheticDataset:
    """Build a population; the same config (including seed) gives identical output."""
    intervals = config.intervals()
    rows = []
    profiles: dict[str, TraitProfile] = {}
    egos = []
    for index in range(config.n_egos):
        ego_rows, profile, truth = _generate_ego(config, index, intervals)
        rows.extend(ego_rows)
        profiles[profile.ego_id] = profile
        egos.append(truth)
    rows.sort()
    epoch = datetime(1970, 1, 1, tzinfo=timezone.utc)
    records = [
        CallRecord(ego, alter, epoch + timedelta(seconds=ts), OUTGOING, dur)
        for ts, ego, alter, dur in rows
    ]
    manifest = {"config": config.to_dict(), "egos": egos}
    return SyntheticDataset(records, profiles, manifest)


def write_dataset(dataset: SyntheticDataset, out_dir: str | os.PathLike) -> dict[str, Path]:
    """Write ``calls.csv``, ``traits.csv`` and ``manifest.json`` in ingest format."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"calls": out / "calls.csv", "traits": out / "traits.csv", "manifest": out / "manifest.json"}
    with open(paths["calls"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CALL_COLUMNS)
        for r in dataset.records:
            writer.writerow([
                r.ego_id, r.alter_id, r.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
                r.direction, "" if r.duration_s is None else r.duration_s,
            ])
    with open(paths["traits"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAIT_COLUMNS)
        for ego in sorted(dataset.profiles):
            p = dataset.profiles[ego]
            writer.writerow([ego] + [f"{p.score(t):g}" for t in TRAITS])
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(dataset.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def _pipeline_networks(config: GeneratorConfig, min_calls: int, min_alters: int):
    data = generate(config)
    intervals = config.intervals()
    networks = build_networks(data.records, intervals)
    retained = retain_active_egos(networks, min_calls, min_alters, [iv.index for iv in intervals])
    return data, intervals, networks, retained


def metric_samples(metric: str, networks, retained, intervals) -> dict[str, list[float]]:
    """Per-ego metric values: ``turnover``, ``persistence`` or ``netsize``."""
    from .signatures import build_signatures, self_distances
    from .turnover import pooled_by_ego, turnover_series

    if metric == "turnover":
        return pooled_by_ego(turnover_series(networks, retained, intervals))
    if metric == "persistence":
        sigs = build_signatures({k: v for k, v in networks.items() if k[0] in retained})
        out: dict[str, list[float]] = {}
        for rec in self_distances(sigs, retained, intervals):
            out.setdefault(rec.ego_id, []).append(rec.value)
        return out
    if metric == "netsize":
        return {
            ego: [networks[(ego, iv.index)].size for iv in intervals] for ego in sorted(retained)
        }
    raise ValueError(f"unknown metric {metric!r}")


def effect_recovery_trial(
    config: GeneratorConfig,
    metric: str = "turnover",
    trait: str = "openness",
    *,
    min_calls: int = 150,
    min_alters: int = 20,
    low_q: float = 0.25,
    high_q: float = 0.75,
):
    """Run generate -> ingest -> metric -> split -> compare; return the KW result."""
    from .stats import compare_subgroups, percentile_split

    data, intervals, networks, retained = _pipeline_networks(config, min_calls, min_alters)
    samples = metric_samples(metric, networks, retained, intervals)
    partition = percentile_split(data.profiles, trait, low_q, high_q, egos=retained)
    rows = compare_subgroups(samples, partition)
    return rows[0].kw


def stability_trial(
    config: GeneratorConfig,
    trait: str = "openness",
    *,
    min_calls: int = 150,
    min_alters: int = 20,
    low_q: float = 0.25,
    high_q: float = 0.75,
    max_rank: int = 20,
) -> dict[str, float]:
    """``C`` for the high, low and middle groups of ``trait`` on generated data."""
    from .rank_dynamics import subgroup_rank_report
    from .stats import percentile_split

    data, intervals, networks, retained = _pipeline_networks(config, min_calls, min_alters)
    partition = percentile_split(data.profiles, trait, low_q, high_q, egos=retained)
    report = subgroup_rank_report(networks, partition, intervals, max_rank)
    return {label: c for label, (_, c) in report.items()}
