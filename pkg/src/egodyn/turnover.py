"""Alter-set turnover between consecutive intervals (Jaccard coefficient)."""

from __future__ import annotations

import csv
import os
from collections import defaultdict
from dataclasses import dataclass
from typing import AbstractSet, Iterable, Mapping

from .errors import AnalysisError
from .ingest import EgoIntervalNetwork, IntervalSpec

TURNOVER_COLUMNS = ("ego_id", "interval_pair", "jaccard")


@dataclass(frozen=True, slots=True)
class TurnoverRecord:
    ego_id: str
    interval_pair: tuple[int, int]
    jaccard: float


def jaccard(a: AbstractSet, b: AbstractSet) -> float:
    """|A & B| / |A | B|. Lower values mean higher turnover."""
    a, b = set(a), set(b)
    union = len(a | b)
    if union == 0:
        raise ValueError("Jaccard coefficient undefined for two empty sets")
    return len(a & b) / union


def turnover_series(
    networks: Mapping[tuple[str, int], EgoIntervalNetwork],
    egos: Iterable[str],
    intervals: Iterable[IntervalSpec | int],
) -> list[TurnoverRecord]:
    idx = sorted(iv.index if isinstance(iv, IntervalSpec) else int(iv) for iv in intervals)
    out = []
    for ego in sorted(egos):
        for t, t1 in zip(idx, idx[1:]):
            try:
                a, b = networks[(ego, t)], networks[(ego, t1)]
            except KeyError:
                missing = t if (ego, t) not in networks else t1
                raise AnalysisError(f"no network for ego {ego!r} in interval {missing}") from None
            out.append(TurnoverRecord(ego, (t, t1), jaccard(a.alters, b.alters)))
    return out


def pooled_by_ego(records: Iterable[TurnoverRecord]) -> dict[str, list[float]]:
    """All consecutive-pair values of each ego, in interval order."""
    pooled: dict[str, list[float]] = defaultdict(list)
    for r in sorted(records, key=lambda r: (r.ego_id, r.interval_pair)):
        pooled[r.ego_id].append(r.jaccard)
    return dict(pooled)


def write_turnover(records: Iterable[TurnoverRecord], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TURNOVER_COLUMNS)
        for r in sorted(records, key=lambda r: (r.ego_id, r.interval_pair)):
            writer.writerow([r.ego_id, f"{r.interval_pair[0]}-{r.interval_pair[1]}", f"{r.jaccard:.6f}"])
