"""Alter rank transition matrices and the stability metric ``C``.

Rows are source ranks ``1..max_rank`` at ``I_t`` followed by two boundary
states: ``i`` (present but ranked beyond ``max_rank``) and ``in`` (absent).
Columns are destination ranks at ``I_{t+1}`` followed by ``o`` (beyond
``max_rank``) and ``on`` (absent). Every alter present in either interval adds
exactly one count.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import AnalysisError
from .ingest import EgoIntervalNetwork, IntervalSpec
from .signatures import rank_alters

DEFAULT_MAX_RANK = 20
PER_MATRIX = "matrices"
PER_EGO = "egos"


def row_labels(max_rank: int = DEFAULT_MAX_RANK) -> list[str]:
    return [str(r) for r in range(1, max_rank + 1)] + ["i", "in"]


def col_labels(max_rank: int = DEFAULT_MAX_RANK) -> list[str]:
    return [str(r) for r in range(1, max_rank + 1)] + ["o", "on"]


@dataclass(frozen=True)
class TransitionMatrix:
    ego_id: str
    interval_pair: tuple[int, int]
    counts: np.ndarray

    @property
    def max_rank(self) -> int:
        return self.counts.shape[0] - 2


@dataclass(frozen=True)
class AggregateMatrix:
    label: str
    values: np.ndarray
    n_matrices: int
    n_egos: int

    @property
    def max_rank(self) -> int:
        return self.values.shape[0] - 2


def _positions(network: EgoIntervalNetwork, max_rank: int) -> dict[str, int]:
    """0-based row/column slot of each alter: its rank, or the ``beyond`` slot."""
    return {
        alter: min(pos, max_rank)
        for pos, alter in enumerate(rank_alters(network.call_counts))
    }


def transition_matrix(
    network_t: EgoIntervalNetwork,
    network_t1: EgoIntervalNetwork,
    max_rank: int = DEFAULT_MAX_RANK,
) -> TransitionMatrix:
    if network_t.ego_id != network_t1.ego_id:
        raise AnalysisError(
            f"networks belong to different egos ({network_t.ego_id!r}, {network_t1.ego_id!r})"
        )
    if max_rank < 1:
        raise ValueError("max_rank must be positive")
    absent = max_rank + 1
    before = _positions(network_t, max_rank)
    after = _positions(network_t1, max_rank)
    counts = np.zeros((max_rank + 2, max_rank + 2), dtype=np.int64)
    for alter in before.keys() | after.keys():
        counts[before.get(alter, absent), after.get(alter, absent)] += 1
    return TransitionMatrix(
        network_t.ego_id, (network_t.interval_index, network_t1.interval_index), counts
    )


def ego_matrices(
    networks: Mapping[tuple[str, int], EgoIntervalNetwork],
    egos: Iterable[str],
    intervals: Iterable[IntervalSpec | int],
    max_rank: int = DEFAULT_MAX_RANK,
) -> list[TransitionMatrix]:
    """One matrix per ego per consecutive interval pair, sorted by ego."""
    idx = sorted(iv.index if isinstance(iv, IntervalSpec) else int(iv) for iv in intervals)
    out = []
    for ego in sorted(egos):
        for t, t1 in zip(idx, idx[1:]):
            if (ego, t) not in networks or (ego, t1) not in networks:
                missing = t if (ego, t) not in networks else t1
                raise AnalysisError(f"no network for ego {ego!r} in interval {missing}")
            out.append(transition_matrix(networks[(ego, t)], networks[(ego, t1)], max_rank))
    return out


def aggregate(
    matrices: Sequence[TransitionMatrix], label: str, normalizer: str = PER_MATRIX
) -> AggregateMatrix:
    """Sum per-ego matrices and divide by the number of matrices (or egos).

    Integer sums happen before the single division, so the result does not
    depend on the order of ``matrices``.
    """
    if not matrices:
        raise AnalysisError(f"cannot aggregate an empty set of matrices ({label!r})")
    shapes = {m.counts.shape for m in matrices}
    if len(shapes) != 1:
        raise AnalysisError("matrices have different max_rank")
    total = np.zeros(shapes.pop(), dtype=np.int64)
    for m in matrices:
        total += m.counts
    n_egos = len({m.ego_id for m in matrices})
    if normalizer == PER_MATRIX:
        denom = len(matrices)
    elif normalizer == PER_EGO:
        denom = n_egos
    else:
        raise ValueError(f"unknown normalizer {normalizer!r}")
    return AggregateMatrix(label, total / denom, len(matrices), n_egos)


def stability(b: AggregateMatrix | np.ndarray, n: int = DEFAULT_MAX_RANK) -> float:
    """Mean distance of the rank-to-rank mass from the diagonal.

    ``C = (1/n) * sum_{i,j<=n} B_ij |i - j|``; boundary rows and columns are
    left out. ``C == 0`` exactly when every rank is kept.
    """
    values = b.values if isinstance(b, AggregateMatrix) else np.asarray(b, dtype=float)
    if n > values.shape[0] - 2:
        raise ValueError(f"n={n} exceeds the matrix max_rank {values.shape[0] - 2}")
    ranks = np.arange(n)
    dist = np.abs(ranks[:, None] - ranks[None, :])
    return float((values[:n, :n] * dist).sum() / n)


def transition_points(
    matrices: Iterable[TransitionMatrix], max_rank: int | None = None
) -> list[tuple[int, int]]:
    """(source rank, destination rank) of every rank-to-rank event, for 2-D KDE."""
    points = []
    for m in matrices:
        n = m.max_rank if max_rank is None else max_rank
        rows, cols = np.nonzero(m.counts[:n, :n])
        for r, c in zip(rows.tolist(), cols.tolist()):
            points.extend([(r + 1, c + 1)] * int(m.counts[r, c]))
    return sorted(points)


def subgroup_rank_report(
    networks: Mapping[tuple[str, int], EgoIntervalNetwork],
    partition,
    intervals: Iterable[IntervalSpec | int],
    max_rank: int = DEFAULT_MAX_RANK,
    n: int | None = None,
    normalizer: str = PER_MATRIX,
) -> dict[str, tuple[AggregateMatrix, float]]:
    """Aggregate matrix and ``C`` for the high, low and middle groups of a trait.

    ``partition`` is a :class:`egodyn.stats.SubgroupPartition` or any mapping of
    group label to ego ids.
    """
    groups = partition.groups() if hasattr(partition, "groups") else dict(partition)
    intervals = list(intervals)
    n = max_rank if n is None else n
    out = {}
    for label, egos in groups.items():
        if not egos:
            raise AnalysisError(f"subgroup {label!r} is empty")
        b = aggregate(ego_matrices(networks, egos, intervals, max_rank), label, normalizer)
        out[label] = (b, stability(b, n))
    return out


def write_matrix(b: AggregateMatrix, path: str | os.PathLike) -> None:
    rows, cols = row_labels(b.max_rank), col_labels(b.max_rank)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["from"] + cols)
        for label, values in zip(rows, b.values):
            writer.writerow([label] + [f"{v:.6f}" for v in values])


def write_stability(entries: Iterable[dict], path: str | os.PathLike) -> None:
    """``entries`` hold subgroup, C and n_matrices (plus optional trait)."""
    payload = []
    for e in entries:
        e = dict(e)
        e["C"] = float(f"{e['C']:.6f}")
        payload.append(e)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
