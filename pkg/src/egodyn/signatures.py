"""Social signatures and their persistence.

A signature is the rank-ordered list of call fractions of one ego in one
interval. Two signatures are compared with the Jensen-Shannon divergence on
rank space (alter identities are ignored), natural log, so values lie in
``[0, ln 2]``.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from functools import partial
from typing import Iterable, Mapping, Sequence, Union

from ._parallel import chunked, parallel_map
from .errors import AnalysisError
from .ingest import EgoIntervalNetwork, IntervalSpec

LN2 = math.log(2.0)
SELF = "self"
REFERENCE = "reference"
CROSS_INTERVAL = "cross"
SAME_INTERVAL = "same"
DISTANCE_COLUMNS = ("ego_id", "kind", "interval_pair", "counterpart", "value")


@dataclass(frozen=True)
class SocialSignature:
    ego_id: str
    interval_index: int
    fractions: tuple[float, ...]
    alter_order: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.fractions:
            raise ValueError("empty signature")
        if len(self.fractions) != len(self.alter_order):
            raise ValueError("fractions and alter_order differ in length")
        if any(p <= 0 for p in self.fractions):
            raise ValueError("signature fractions must be positive")
        if any(a < b for a, b in zip(self.fractions, self.fractions[1:])):
            raise ValueError("signature fractions must be non-increasing")
        if abs(math.fsum(self.fractions) - 1.0) > 1e-9:
            raise ValueError("signature fractions must sum to 1")

    def __len__(self) -> int:
        return len(self.fractions)


@dataclass(frozen=True, slots=True)
class DistanceRecord:
    ego_id: str
    kind: str
    interval_pair: tuple[int, int]
    counterpart: str | None
    value: float


Distribution = Union[SocialSignature, Sequence[float]]


def rank_alters(call_counts: Mapping[str, int]) -> list[str]:
    """Alters by call count descending, ties by alter id ascending."""
    return sorted(call_counts, key=lambda a: (-call_counts[a], a))


def build_signature(network: EgoIntervalNetwork) -> SocialSignature:
    if network.size == 0:
        raise AnalysisError(
            f"empty network for ego {network.ego_id!r} in interval {network.interval_index}"
        )
    order = rank_alters(network.call_counts)
    total = network.total_calls
    return SocialSignature(
        network.ego_id,
        network.interval_index,
        tuple(network.call_counts[a] / total for a in order),
        tuple(order),
    )


def build_signatures(
    networks: Mapping[tuple[str, int], EgoIntervalNetwork],
) -> dict[tuple[str, int], SocialSignature]:
    return {key: build_signature(net) for key, net in sorted(networks.items())}


def _entropy(p: Iterable[float]) -> float:
    return -math.fsum(x * math.log(x) for x in p if x > 0.0)


def shannon_entropy(p: Sequence[float]) -> float:
    """Shannon entropy in nats, with ``0 ln 0 = 0``."""
    if any(x < 0 for x in p):
        raise ValueError("negative probability")
    if abs(math.fsum(p) - 1.0) > 1e-6:
        raise ValueError(f"probabilities sum to {math.fsum(p)!r}, not 1")
    return _entropy(p)


def _fractions(p: Distribution) -> tuple[float, ...]:
    if isinstance(p, SocialSignature):
        return p.fractions
    p = tuple(float(x) for x in p)
    if any(x < 0 for x in p) or abs(math.fsum(p) - 1.0) > 1e-6:
        raise ValueError("not a probability vector")
    return p


def jsd(p1: Distribution, p2: Distribution) -> float:
    """Jensen-Shannon divergence between two rank distributions.

    The shorter input is zero-padded. Every step is commutative in its two
    operands, so ``jsd(a, b) == jsd(b, a)`` holds bit for bit.
    """
    a, b = _fractions(p1), _fractions(p2)
    n = max(len(a), len(b))
    a = a + (0.0,) * (n - len(a))
    b = b + (0.0,) * (n - len(b))
    mix = [0.5 * x + 0.5 * y for x, y in zip(a, b)]
    value = _entropy(mix) - 0.5 * (_entropy(a) + _entropy(b))
    if not value > 0.0:
        return 0.0
    return min(value, LN2)


def _interval_indices(intervals: Iterable[IntervalSpec | int]) -> list[int]:
    return sorted(iv.index if isinstance(iv, IntervalSpec) else int(iv) for iv in intervals)


def _lookup(signatures, ego: str, idx: int) -> SocialSignature:
    try:
        return signatures[(ego, idx)]
    except KeyError:
        raise AnalysisError(f"no signature for ego {ego!r} in interval {idx}") from None


def self_distances(
    signatures: Mapping[tuple[str, int], SocialSignature],
    egos: Iterable[str],
    intervals: Iterable[IntervalSpec | int],
) -> list[DistanceRecord]:
    idx = _interval_indices(intervals)
    out = []
    for ego in sorted(egos):
        for t, t1 in zip(idx, idx[1:]):
            value = jsd(_lookup(signatures, ego, t), _lookup(signatures, ego, t1))
            out.append(DistanceRecord(ego, SELF, (t, t1), None, value))
    return out


def _reference_chunk(chunk, signatures, egos, pairs, mode):
    out = []
    for ego in chunk:
        for t, t1 in pairs:
            mine = _lookup(signatures, ego, t)
            other_idx = t1 if mode == CROSS_INTERVAL else t
            for other in egos:
                if other == ego:
                    continue
                value = jsd(mine, _lookup(signatures, other, other_idx))
                out.append(DistanceRecord(ego, REFERENCE, (t, t1), other, value))
    return out


def reference_distances(
    signatures: Mapping[tuple[str, int], SocialSignature],
    egos: Iterable[str],
    intervals: Iterable[IntervalSpec | int],
    mode: str = CROSS_INTERVAL,
    workers: int = 1,
) -> list[DistanceRecord]:
    """JSD between ego ``i`` at ``I_t`` and every other ego ``j``.

    In ``cross`` mode (default) ``j`` is taken at ``I_{t+1}``, mirroring the
    self-distance; ``same`` mode takes ``j`` at ``I_t`` as well.
    """
    if mode not in (CROSS_INTERVAL, SAME_INTERVAL):
        raise ValueError(f"unknown reference mode {mode!r}")
    idx = _interval_indices(intervals)
    pairs = list(zip(idx, idx[1:]))
    egos = sorted(egos)
    for ego in egos:
        for t in idx:
            _lookup(signatures, ego, t)
    work = partial(_reference_chunk, signatures=dict(signatures), egos=egos, pairs=pairs, mode=mode)
    parts = parallel_map(work, chunked(egos, max(1, workers)), workers)
    return [rec for part in parts for rec in part]


def sort_distances(records: Iterable[DistanceRecord]) -> list[DistanceRecord]:
    return sorted(
        records,
        key=lambda r: (r.kind != SELF, r.ego_id, r.interval_pair, r.counterpart or ""),
    )


def write_distances(records: Iterable[DistanceRecord], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DISTANCE_COLUMNS)
        for r in sort_distances(records):
            writer.writerow([
                r.ego_id,
                r.kind,
                f"{r.interval_pair[0]}-{r.interval_pair[1]}",
                r.counterpart or "",
                f"{r.value:.6f}",
            ])
