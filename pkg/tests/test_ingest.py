import gzip
import random
from datetime import date, datetime, timedelta, timezone

import pytest
from hypothesis import given, settings, strategies as st

from egodyn.errors import IngestError
from egodyn.ingest import (
    CallRecord,
    EgoIntervalNetwork,
    build_networks,
    parse_call_records,
    parse_trait_profiles,
    partition_intervals,
    read_snapshot,
    retain_active_egos,
    write_snapshot,
)

HEADER = "ego_id,alter_id,timestamp,direction,duration_s\n"
UTC = timezone.utc


def utc(*args):
    return datetime(*args, tzinfo=UTC)


def calls_csv(*rows):
    return (HEADER + "".join(r + "\n" for r in rows)).encode()


class TestParseCallRecords:
    def test_direct_field_mapping(self):
        report = parse_call_records(calls_csv("e1,a9,2013-10-02T08:00:00Z,outgoing,60"))
        assert report.errors == []
        assert report.records == [CallRecord("e1", "a9", utc(2013, 10, 2, 8), "outgoing", 60)]

    def test_ego_equal_alter_rejected(self):
        rows = ["e1,e1,2013-10-02T08:00:00Z,outgoing,60"] + [
            f"e1,a{k},2013-10-02T08:00:00Z,outgoing,60" for k in range(20)
        ]
        report = parse_call_records(calls_csv(*rows))
        assert len(report.records) == 20
        assert [e.line for e in report.errors] == [2]
        assert "ego equals alter" in report.errors[0].reason

    def test_bad_date_rejected_with_line_number(self):
        rows = [f"e1,a{k},2013-10-02T08:00:00Z,outgoing,60" for k in range(15)]
        rows.insert(3, "e1,a9,not-a-date,outgoing,60")
        report = parse_call_records(calls_csv(*rows))
        assert len(report.records) == 15
        assert report.errors[0].line == 5  # header is line 1

    def test_epoch_timestamps_detected(self):
        report = parse_call_records(calls_csv("e1,a1,1380700800,outgoing,", "e1,a2,1380700801,incoming,3"))
        assert report.records[0].timestamp == utc(2013, 10, 2, 8)
        assert report.records[0].duration_s is None
        assert report.records[1].direction == "incoming"

    def test_mixed_timestamp_styles_are_malformed(self):
        rows = [f"e1,a{k},1380700800,outgoing,1" for k in range(20)]
        rows.append("e1,a9,2013-10-02T08:00:00Z,outgoing,60")
        report = parse_call_records(calls_csv(*rows))
        assert len(report.errors) == 1

    def test_too_many_malformed_rows_is_fatal(self):
        rows = ["e1,a1,2013-10-02T08:00:00Z,outgoing,60"] * 8 + ["e1,a1,garbage,outgoing,1"] * 2
        with pytest.raises(IngestError, match="malformed"):
            parse_call_records(calls_csv(*rows))

    def test_exactly_ten_percent_is_tolerated(self):
        rows = ["e1,a1,2013-10-02T08:00:00Z,outgoing,60"] * 9 + ["e1,a1,garbage,outgoing,1"]
        assert len(parse_call_records(calls_csv(*rows)).errors) == 1

    def test_gzip_input(self, tmp_path):
        path = tmp_path / "calls.csv.gz"
        path.write_bytes(gzip.compress(calls_csv("e1,a9,2013-10-02T08:00:00Z,outgoing,60")))
        assert len(parse_call_records(path).records) == 1

    def test_empty_stream_is_fatal(self):
        with pytest.raises(IngestError, match="empty"):
            parse_call_records(b"")

    def test_missing_column_is_fatal(self):
        with pytest.raises(IngestError, match="direction"):
            parse_call_records(b"ego_id,alter_id,timestamp\ne1,a1,2013-10-02T08:00:00Z\n")

    def test_unreadable_path_is_fatal(self, tmp_path):
        with pytest.raises(IngestError):
            parse_call_records(tmp_path / "nope.csv")

    def test_window_counts_out_of_range_rows(self):
        report = parse_call_records(
            calls_csv("e1,a1,2013-09-30T23:59:59Z,outgoing,1", "e1,a1,2013-10-01T00:00:00Z,outgoing,1"),
            window=(utc(2013, 10, 1), utc(2015, 1, 3)),
        )
        assert len(report.records) == 1
        assert report.out_of_window == 1


class TestParseTraits:
    HEADER = "ego_id,extraversion,agreeableness,conscientiousness,emotional_stability,openness\n"

    def test_direct_mapping(self):
        report = parse_trait_profiles((self.HEADER + "e1,50,41,62,33,55\n").encode())
        assert report.profiles["e1"].openness == 55
        assert report.profiles["e1"].score("conscientiousness") == 62

    def test_out_of_scale_rejected(self):
        report = parse_trait_profiles((self.HEADER + "e1,80,41,62,33,55\n").encode())
        assert report.profiles == {}
        assert "extraversion" in report.errors[0].reason

    def test_duplicate_is_fatal(self):
        text = self.HEADER + "e1,50,41,62,33,55\ne1,50,41,62,33,56\n"
        with pytest.raises(IngestError, match="duplicate"):
            parse_trait_profiles(text.encode())


class TestPartitionIntervals:
    def test_default_153_day_windows(self):
        ivs = partition_intervals(date(2013, 10, 1), 3, timedelta(days=153))
        # oracle: proleptic ordinals, independent of timedelta arithmetic
        start = date(2013, 10, 1).toordinal()
        expected = [date.fromordinal(start + 153 * k) for k in range(4)]
        assert expected == [date(2013, 10, 1), date(2014, 3, 3), date(2014, 8, 3), date(2015, 1, 3)]
        assert [(iv.start.date(), iv.end.date()) for iv in ivs] == list(zip(expected, expected[1:]))
        assert [iv.index for iv in ivs] == [1, 2, 3]

    def test_two_day_windows(self):
        ivs = partition_intervals(date(2014, 1, 1), 2, timedelta(days=1))
        assert ivs[0].end == ivs[1].start == utc(2014, 1, 2)

    def test_single_interval_is_rejected(self):
        with pytest.raises(ValueError):
            partition_intervals(date(2013, 10, 1), 1)

    def test_calendar_months(self):
        ivs = partition_intervals(date(2013, 10, 1), 3, months=5)
        assert [iv.end.date() for iv in ivs] == [date(2014, 3, 1), date(2014, 8, 1), date(2015, 1, 1)]

    def test_calendar_months_clamp_day(self):
        ivs = partition_intervals(date(2014, 1, 31), 2, months=1)
        assert ivs[0].end.date() == date(2014, 2, 28)


def _rec(ego, alter, ts, direction="outgoing"):
    return CallRecord(ego, alter, ts, direction)


class TestBuildNetworks:
    ivs = partition_intervals(date(2013, 10, 1), 3)

    def test_counting(self):
        recs = [_rec("e1", "a1", utc(2013, 10, 5)), _rec("e1", "a1", utc(2013, 11, 5)),
                _rec("e1", "a2", utc(2013, 12, 5))]
        nets = build_networks(recs, self.ivs)
        net = nets[("e1", 1)]
        assert net.call_counts == {"a1": 2, "a2": 1}
        assert net.size == 2 and net.total_calls == 3

    def test_incoming_only_ego_has_no_network(self):
        nets = build_networks([_rec("e2", "a1", utc(2013, 10, 5), "incoming")], self.ivs)
        assert nets == {}

    def test_boundary_instant_goes_to_later_interval(self):
        boundary = self.ivs[1].start
        nets = build_networks([_rec("e1", "a1", boundary)], self.ivs)
        assert list(nets) == [("e1", 2)]

    def test_calls_outside_intervals_ignored(self):
        recs = [_rec("e1", "a1", utc(2013, 9, 30)), _rec("e1", "a1", self.ivs[-1].end)]
        assert build_networks(recs, self.ivs) == {}


def _random_records(seed, n=300):
    rng = random.Random(seed)
    base = utc(2013, 9, 1)
    return [
        _rec(f"e{rng.randrange(4)}", f"a{rng.randrange(12)}",
             base + timedelta(seconds=rng.randrange(0, 500 * 86400)),
             rng.choice(["outgoing", "outgoing", "incoming"]))
        for _ in range(n)
    ]


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_partition_property_and_order_independence(seed):
    ivs = partition_intervals(date(2013, 10, 1), 3)
    recs = _random_records(seed)
    nets = build_networks(recs, ivs)
    inside = [r for r in recs if r.direction == "outgoing" and ivs[0].start <= r.timestamp < ivs[-1].end]
    assert sum(n.total_calls for n in nets.values()) == len(inside)
    shuffled = recs[:]
    random.Random(seed + 1).shuffle(shuffled)
    assert build_networks(shuffled, ivs) == nets


def _nets(profile):
    """profile: {ego: [(calls, alters) per interval]} -> synthetic networks."""
    out = {}
    for ego, per_interval in profile.items():
        for idx, (calls, alters) in enumerate(per_interval, start=1):
            counts = {f"a{k}": 1 for k in range(alters)}
            counts["a0"] += calls - alters
            out[(ego, idx)] = EgoIntervalNetwork(ego, idx, counts)
    return out


class TestRetention:
    def test_all_thresholds_met(self):
        nets = _nets({"e1": [(200, 25), (180, 22), (151, 20)]})
        assert retain_active_egos(nets, 150, 20) == {"e1"}

    def test_one_interval_fails_calls(self):
        nets = _nets({"e1": [(200, 25), (149, 22), (300, 30)]})
        assert retain_active_egos(nets, 150, 20) == set()

    def test_degenerate_thresholds(self):
        nets = _nets({"e1": [(3, 1), (2, 2), (5, 1)], "e2": [(3, 1), (2, 2), (5, 1)]})
        del nets[("e2", 2)]
        assert retain_active_egos(nets, 0, 0, [1, 2, 3]) == {"e1"}

    @given(st.integers(0, 400), st.integers(0, 40), st.integers(0, 50), st.integers(0, 10))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_thresholds(self, calls, alters, extra_calls, extra_alters):
        rng = random.Random(calls * 41 + alters)
        profile = {
            f"e{k}": [(rng.randrange(40, 400), rng.randrange(1, 40)) for _ in range(3)] for k in range(12)
        }
        profile = {e: [(max(c, a), a) for c, a in v] for e, v in profile.items()}
        nets = _nets(profile)
        loose = retain_active_egos(nets, calls, alters)
        tight = retain_active_egos(nets, calls + extra_calls, alters + extra_alters)
        assert tight <= loose


def test_snapshot_round_trip(tmp_path):
    ivs = partition_intervals(date(2013, 10, 1), 3)
    nets = build_networks(_random_records(7), ivs)
    path = tmp_path / "networks.csv"
    write_snapshot(nets, path)
    assert read_snapshot(path) == nets
    assert path.read_text().splitlines()[0] == "ego_id,interval_index,alter_id,call_count"
