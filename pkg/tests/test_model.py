"""Trace/tower parsing and the hour-of-week index."""

import io
from datetime import datetime, timedelta, timezone
from zoneinfo import ZoneInfo

import pytest
from hypothesis import given, strategies as st

from eigenplaces.errors import EmptyCorpusError, InputError
from eigenplaces.model import (
    TRACE_HEADER,
    GeoPoint,
    parse_tower_registry,
    parse_trace,
    records_to_rows,
    week_hour_index,
)


def trace_csv(rows):
    return io.StringIO(",".join(TRACE_HEADER) + "\n" + "\n".join(rows) + "\n")


class TestWeekHourIndex:
    def test_wednesday_six_am(self):
        # hour 6 on a weekday maps to slot 6
        ts = datetime(2024, 3, 6, 6, 15, tzinfo=timezone.utc)
        assert week_hour_index(ts, "UTC") == 6

    def test_saturday_midnight(self):
        ts = datetime(2024, 3, 9, 0, 30, tzinfo=timezone.utc)
        assert week_hour_index(ts, "UTC") == 24

    def test_sunday_last_hour(self):
        ts = datetime(2024, 3, 10, 23, 59, tzinfo=timezone.utc)
        assert week_hour_index(ts, "UTC") == 47

    def test_timezone_shifts_slot(self):
        # 23:30 UTC Friday is already Saturday morning in Shanghai
        ts = datetime(2024, 3, 8, 23, 30, tzinfo=timezone.utc)
        assert week_hour_index(ts, "UTC") == 23
        assert week_hour_index(ts, "Asia/Shanghai") == 24 + 7

    def test_full_week_covers_every_slot(self):
        start = datetime(2024, 3, 4, 0, 30, tzinfo=timezone.utc)  # Monday
        slots = {
            week_hour_index(start + timedelta(hours=h), "UTC")
            for h in range(7 * 24)
        }
        assert slots == set(range(48))

    @given(st.integers(min_value=0, max_value=10**9))
    def test_total_and_in_range(self, epoch):
        ts = datetime.fromtimestamp(epoch, tz=timezone.utc)
        assert 0 <= week_hour_index(ts, "America/New_York") <= 47


class TestParseTrace:
    def test_direct_field_mapping(self):
        records, report = parse_trace(
            trace_csv(["u1,2024-03-04T08:30:00,T9,call"]), "UTC"
        )
        rec = records[0]
        assert rec.user_id == "u1"
        assert rec.tower_id == "T9"
        assert rec.event_type == "call"
        assert rec.timestamp == datetime(2024, 3, 4, 8, 30, tzinfo=ZoneInfo("UTC"))
        assert rec.timestamp.weekday() == 0  # Monday, local 08:30
        assert report.kept == 1

    def test_unknown_tower_dropped_and_tallied(self):
        registry = parse_tower_registry(io.StringIO("tower_id,lat,lon\nT1,0,0\n"))
        records, report = parse_trace(
            trace_csv(
                ["u1,2024-03-04T08:30:00,T1,call", "u1,2024-03-04T09:30:00,TX,call"]
            ),
            "UTC",
            registry,
        )
        assert len(records) == 1
        assert report.dropped == {"unknown_tower": 1}

    def test_malformed_timestamps_counted(self):
        # 10 rows, 2 with broken timestamps -> 8 records (counted by hand)
        good = [f"u{i},2024-03-0{1 + i % 5}T10:00:00,T1,sms" for i in range(8)]
        bad = ["u8,not-a-time,T1,call", "u9,2024-13-77T99:00:00,T1,call"]
        records, report = parse_trace(trace_csv(good + bad), "UTC")
        assert len(records) == 8
        assert report.total_records == 10
        assert report.dropped == {"bad_timestamp": 2}

    def test_epoch_seconds_are_utc(self):
        records, _ = parse_trace(trace_csv(["u1,1709543700,T1,data"]), "Asia/Shanghai")
        assert records[0].timestamp == datetime.fromtimestamp(
            1709543700, tz=ZoneInfo("Asia/Shanghai")
        )

    def test_explicit_offset_honored(self):
        records, _ = parse_trace(
            trace_csv(["u1,2024-03-04T08:30:00+08:00,T1,call"]), "UTC"
        )
        assert records[0].timestamp == datetime(2024, 3, 4, 0, 30, tzinfo=ZoneInfo("UTC"))

    def test_bad_event_type_is_malformed(self):
        records, report = parse_trace(
            trace_csv(["u1,2024-03-04T08:30:00,T1,call", "u1,2024-03-04T08:31:00,T1,fax"]),
            "UTC",
        )
        assert len(records) == 1
        assert report.dropped == {"malformed_line": 1}

    def test_empty_valid_set_raises(self):
        with pytest.raises(EmptyCorpusError):
            parse_trace(trace_csv(["u1,nope,T1,call"]), "UTC")

    def test_bad_header_raises(self):
        with pytest.raises(InputError):
            parse_trace(io.StringIO("a,b,c,d\n"), "UTC")

    def test_tallies_sum_to_row_count(self):
        rows = [
            "u1,2024-03-04T08:30:00,T1,call",
            "u2,broken,T1,call",
            "u3,2024-03-04T08:30:00,T1,fax",
            "u4,2024-03-04T08:30:00,,call",
        ]
        records, report = parse_trace(trace_csv(rows), "UTC")
        assert report.total_records == 4
        assert report.kept == len(records) == 1
        assert report.dropped_total == 3

    def test_roundtrip_is_lossless(self):
        rows = [
            "u1,2024-03-04T08:30:00,T9,call",
            "u2,2024-03-09T23:10:00,T7,data",
            "u1,1709543700,T9,sms",
        ]
        records, _ = parse_trace(trace_csv(rows), "Asia/Shanghai")
        serialized = [",".join(str(c) for c in row) for row in records_to_rows(records)]
        records2, _ = parse_trace(trace_csv(serialized), "Asia/Shanghai")
        assert records == records2

    def test_validation_report_json_keys(self):
        _, report = parse_trace(trace_csv(["u1,2024-03-04T08:30:00,T1,call"]), "UTC")
        doc = report.to_json_dict()
        assert set(doc) == {
            "total_records",
            "dropped",
            "reasons",
            "distinct_users",
            "span_start",
            "span_end",
        }


class TestParseTowerRegistry:
    def test_basic_entry(self):
        registry = parse_tower_registry(io.StringIO("tower_id,lat,lon\nT1,31.20,121.45\n"))
        assert registry["T1"] == GeoPoint(31.20, 121.45)

    def test_out_of_range_dropped(self):
        registry = parse_tower_registry(
            io.StringIO("tower_id,lat,lon\nT1,0,0\nT2,95.0,10.0\n")
        )
        assert "T2" not in registry
        assert registry.dropped_bad_coordinate == 1

    def test_duplicate_last_wins(self):
        registry = parse_tower_registry(
            io.StringIO("tower_id,lat,lon\nT3,0,0\nT3,1,1\n")
        )
        assert len(registry) == 1
        assert registry["T3"] == GeoPoint(1.0, 1.0)
        assert registry.duplicate_ids == 1

    def test_empty_registry_fatal(self):
        with pytest.raises(InputError):
            parse_tower_registry(io.StringIO("tower_id,lat,lon\nT1,99,0\n"))
