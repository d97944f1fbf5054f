"""Run configuration: a flat ``key = value`` file plus command-line overrides.

Recognised keys (defaults in parentheses)::

    calls, traits          input CSV paths (relative to the config file)
    snapshot               network snapshot (<out_dir>/networks.csv)
    out_dir                output directory (out)
    study_start            first instant of I1, ISO date (2013-10-01)
    n_intervals            number of intervals (3)
    interval_mode          fixed | calendar (fixed)
    interval_days          fixed-mode length (153)
    interval_months        calendar-mode length (5)
    min_calls, min_alters  retention thresholds per interval (150, 20)
    max_malformed          tolerated malformed-row fraction (0.10)
    max_rank               tracked ranks in transition matrices (20)
    stability_n            ranks entering the stability metric (20)
    low_q, high_q          subgroup percentile bounds (0.25, 0.75)
    reference_mode         cross | same (cross)
    normalizer             matrices | egos (matrices)
    workers                process pool size (1)
    metrics                comma list of persistence,turnover,rankdyn,netsize (all)
    trait                  one trait or "all" (all)
    kde_points             grid size for 1-D KDE output (200)
    seed                   generator seed (0)
    synth_*                GeneratorConfig fields, e.g. synth_n_egos, synth_churn_prob
    synth_effect_<trait>_churn / synth_effect_<trait>_noise   trait slopes
    trial_metric           metric used by ``synth --trial`` (turnover)
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

from .errors import ConfigError
from .ingest import MAX_MALFORMED_FRACTION, TRAITS, IntervalSpec, partition_intervals
from .rank_dynamics import PER_EGO, PER_MATRIX
from .signatures import CROSS_INTERVAL, SAME_INTERVAL

METRICS = ("persistence", "turnover", "rankdyn", "netsize")
FIXED, CALENDAR = "fixed", "calendar"
_SECTION = "run"

# excluded from the config hash: they must not change any output byte
_NON_SEMANTIC = ("out_dir", "workers")


@dataclass
class RunConfig:
    calls: Path | None = None
    traits: Path | None = None
    snapshot: Path | None = None
    out_dir: Path = Path("out")
    study_start: date = date(2013, 10, 1)
    n_intervals: int = 3
    interval_mode: str = FIXED
    interval_days: int = 153
    interval_months: int = 5
    min_calls: int = 150
    min_alters: int = 20
    max_malformed: float = MAX_MALFORMED_FRACTION
    max_rank: int = 20
    stability_n: int = 20
    low_q: float = 0.25
    high_q: float = 0.75
    reference_mode: str = CROSS_INTERVAL
    normalizer: str = PER_MATRIX
    workers: int = 1
    metrics: tuple[str, ...] = METRICS
    trait: str = "all"
    kde_points: int = 200
    seed: int = 0
    trial_metric: str = "turnover"
    synth: dict = field(default_factory=dict)
    synth_effects: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        problems = []
        if self.n_intervals < 2:
            problems.append("n_intervals must be at least 2")
        if self.interval_mode not in (FIXED, CALENDAR):
            problems.append(f"interval_mode must be {FIXED} or {CALENDAR}")
        if self.interval_days < 1 or self.interval_months < 1:
            problems.append("interval lengths must be positive")
        if self.min_calls < 0 or self.min_alters < 0:
            problems.append("retention thresholds must be non-negative")
        if not 0.0 <= self.max_malformed <= 1.0:
            problems.append("max_malformed must lie in [0, 1]")
        if self.max_rank < 1 or not 1 <= self.stability_n <= self.max_rank:
            problems.append("need 1 <= stability_n <= max_rank")
        if not 0.0 <= self.low_q <= self.high_q <= 1.0:
            problems.append("need 0 <= low_q <= high_q <= 1")
        if self.reference_mode not in (CROSS_INTERVAL, SAME_INTERVAL):
            problems.append(f"reference_mode must be {CROSS_INTERVAL} or {SAME_INTERVAL}")
        if self.normalizer not in (PER_MATRIX, PER_EGO):
            problems.append(f"normalizer must be {PER_MATRIX} or {PER_EGO}")
        if self.workers < 1:
            problems.append("workers must be at least 1")
        bad = [m for m in self.metrics if m not in METRICS]
        if bad or not self.metrics:
            problems.append(f"metrics must be a non-empty subset of {','.join(METRICS)}")
        if self.trait != "all" and self.trait not in TRAITS:
            problems.append(f"trait must be 'all' or one of {', '.join(TRAITS)}")
        if self.trial_metric not in ("turnover", "persistence", "netsize"):
            problems.append("trial_metric must be turnover, persistence or netsize")
        if self.kde_points < 2:
            problems.append("kde_points must be at least 2")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    @property
    def snapshot_path(self) -> Path:
        return self.snapshot if self.snapshot is not None else self.out_dir / "networks.csv"

    @property
    def traits_selected(self) -> tuple[str, ...]:
        return TRAITS if self.trait == "all" else (self.trait,)

    def intervals(self) -> list[IntervalSpec]:
        if self.interval_mode == CALENDAR:
            return partition_intervals(self.study_start, self.n_intervals, months=self.interval_months)
        return partition_intervals(
            self.study_start, self.n_intervals, timedelta(days=self.interval_days)
        )

    def as_dict(self) -> dict:
        d = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (Path, date)):
                value = str(value)
            elif isinstance(value, tuple):
                value = list(value)
            d[f.name] = value
        return d

    def config_hash(self) -> str:
        """SHA-256 over the settings that influence outputs."""
        d = self.as_dict()
        for key in _NON_SEMANTIC:
            d.pop(key, None)
        for key in ("calls", "traits", "snapshot"):
            if d[key] not in (None, "None"):
                d[key] = Path(d[key]).name
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _coerce(name: str, raw: str, current):
    raw = raw.strip()
    try:
        if name in ("calls", "traits", "snapshot", "out_dir"):
            return Path(raw)
        if name == "study_start":
            return date.fromisoformat(raw)
        if name == "metrics":
            return tuple(m.strip() for m in raw.split(",") if m.strip())
        if isinstance(current, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r} ({exc})") from None
    return raw


def _synth_value(raw: str):
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw.strip()


def parse_config_text(text: str, base_dir: Path | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    cfg = RunConfig()
    known = {f.name for f in dataclasses.fields(RunConfig)} - {"synth", "synth_effects"}
    for key, raw in parser.items(_SECTION):
        if key.startswith("synth_effect_"):
            rest = key[len("synth_effect_"):]
            trait, _, kind = rest.rpartition("_")
            if trait not in TRAITS or kind not in ("churn", "noise"):
                raise ConfigError(f"unknown config key {key!r}")
            try:
                cfg.synth_effects.setdefault(trait, {})[kind] = float(raw)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        elif key.startswith("synth_"):
            cfg.synth[key[len("synth_"):]] = _synth_value(raw)
        elif key in known:
            setattr(cfg, key, _coerce(key, raw, getattr(cfg, key)))
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if base_dir is not None:
        for key in ("calls", "traits", "snapshot", "out_dir"):
            value = getattr(cfg, key)
            if value is not None and not value.is_absolute():
                setattr(cfg, key, base_dir / value)
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, base_dir=path.parent)
