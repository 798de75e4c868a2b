import json

import numpy as np
import pytest

from lanehmm.dataset_io import (
    FrameRecord,
    LineEntry,
    ResultRecord,
    SequenceHeader,
    read_results,
    read_sequence,
    validate_sequence,
    write_results,
    write_sequence,
)
from lanehmm.errors import SequenceFormatError

from conftest import FIXTURES


def random_frame(rng, frame_id, n=3):
    lines = tuple(
        LineEntry(
            track_id=f"b{j}",
            offset_m=float(rng.uniform(-20, 20)),
            continuous=bool(rng.integers(2)),
            detected=bool(rng.integers(2)),
        )
        for j in range(rng.integers(0, 5))
    )
    return FrameRecord(
        frame_id=frame_id,
        timestamp_s=float(rng.uniform(0, 1000)),
        lines=lines,
        gnss=(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180)))
        if rng.integers(2)
        else None,
        gt_lane=int(rng.integers(1, n + 1)) if rng.integers(2) else None,
        crossing=bool(rng.integers(2)),
    )


# --- reading -----------------------------------------------------------------

def test_logged_lri_fixture_parses():
    header, frames = read_sequence(FIXTURES / "logged_lri.seq")
    assert header.n_lanes == 3 and header.lri_source == "log"
    (frame,) = list(frames)
    offsets = [line.offset_m for line in frame.lines]
    assert offsets == [-9.15, -6.47, -2.15, 0.99]
    assert [line.lri for line in frame.lines] == [10, 9, 7, 0]
    assert [line.is_valid for line in frame.lines] == [True, False, True, False]
    assert [line.continuous for line in frame.lines] == [True, False, False, True]


def test_header_only_is_empty_stream():
    header, frames = read_sequence(FIXTURES / "minimal.seq")
    assert header.n_lanes == 3
    assert list(frames) == []


def test_gt_out_of_range_reports_line():
    header, frames = read_sequence(FIXTURES / "bad_gt.seq")
    with pytest.raises(SequenceFormatError, match="gt_lane 5"):
        list(frames)


def test_missing_header(tmp_path):
    path = tmp_path / "empty.seq"
    path.write_text("# only a comment\n")
    with pytest.raises(SequenceFormatError, match="no header"):
        read_sequence(path)


def test_non_monotonic_ids_rejected(tmp_path):
    path = tmp_path / "dup.seq"
    path.write_text(
        '{"format": 1, "n_lanes": 2}\n'
        '{"id": 3, "t": 0.0, "lines": [], "crossing": false}\n'
        '{"id": 3, "t": 0.1, "lines": [], "crossing": false}\n'
    )
    header, frames = read_sequence(path)
    with pytest.raises(SequenceFormatError, match="strictly increasing"):
        list(frames)


def test_bad_json_reports_line_number(tmp_path):
    path = tmp_path / "bad.seq"
    path.write_text('{"format": 1, "n_lanes": 2}\n{oops\n')
    header, frames = read_sequence(path)
    with pytest.raises(SequenceFormatError, match=":2:"):
        list(frames)


def test_log_source_requires_lri_fields(tmp_path):
    path = tmp_path / "log.seq"
    path.write_text(
        '{"format": 1, "n_lanes": 2, "lri_source": "log"}\n'
        '{"id": 0, "t": 0.0, "lines": [{"track": "a", "offset": 1.0, "cont": false, "det": true}], "crossing": false}\n'
    )
    header, frames = read_sequence(path)
    with pytest.raises(SequenceFormatError, match="lri"):
        list(frames)


# --- round trips ----------------------------------------------------------------

def test_sequence_round_trip(tmp_path):
    rng = np.random.default_rng(31)
    header = SequenceHeader(n_lanes=3, lane_width_m=3.7, fps=10.0, source="rt")
    frames = [random_frame(rng, i) for i in range(200)]
    path = tmp_path / "rt.seq"
    write_sequence(path, header, frames)
    header2, frames2 = read_sequence(path)
    assert header2 == header
    assert list(frames2) == frames


def test_results_round_trip_exact(tmp_path):
    rng = np.random.default_rng(32)
    header = SequenceHeader(n_lanes=4)
    records = []
    for i in range(1000):
        marginal = rng.uniform(0.01, 1.0, 4)
        marginal /= marginal.sum()
        records.append(
            ResultRecord(
                frame_id=i,
                map_lane=int(np.argmax(marginal)) + 1,
                lane_marginal=tuple(float(x) for x in marginal),
                sensor_ok_prob=float(rng.uniform(0, 1)),
                tentative=tuple(float(x) for x in rng.uniform(0, 9, 4)),
                wor_frac=float(rng.uniform(0, 1)),
            )
        )
    path = tmp_path / "rt.res"
    write_results(path, header, records)
    header2, records2 = read_results(path)
    assert header2 == header
    assert records2 == records  # exact field equality, floats included


def test_write_unwritable_path(tmp_path):
    header = SequenceHeader(n_lanes=2)
    with pytest.raises(SequenceFormatError, match="cannot write"):
        write_results(tmp_path / "no" / "such" / "dir.res", header, [])


def test_results_reject_unnormalized_marginal():
    with pytest.raises(SequenceFormatError, match="sum to 1"):
        ResultRecord(
            frame_id=0,
            map_lane=1,
            lane_marginal=(0.9, 0.3),
            sensor_ok_prob=0.5,
            tentative=(1.0, 0.0),
            wor_frac=0.5,
        )


def test_reading_results_as_sequence_fails(tmp_path):
    path = tmp_path / "r.res"
    write_results(path, SequenceHeader(n_lanes=2), [])
    with pytest.raises(SequenceFormatError, match="expected a sequence"):
        read_sequence(path)


def test_parsing_is_locale_independent(tmp_path):
    import locale

    path = tmp_path / "loc.seq"
    write_sequence(
        path,
        SequenceHeader(n_lanes=2),
        [FrameRecord(frame_id=0, timestamp_s=1.5,
                     lines=(LineEntry("a", -1.75, False, True),))],
    )
    candidates = ["de_DE.UTF-8", "de_DE.utf8", "fr_FR.UTF-8"]
    original = locale.setlocale(locale.LC_NUMERIC)
    chosen = None
    for name in candidates:
        try:
            locale.setlocale(locale.LC_NUMERIC, name)
            chosen = name
            break
        except locale.Error:
            continue
    if chosen is None:
        pytest.skip("no comma-decimal locale installed")
    try:
        header, frames = read_sequence(path)
        (frame,) = list(frames)
        assert frame.timestamp_s == 1.5
        assert frame.lines[0].offset_m == -1.75
    finally:
        locale.setlocale(locale.LC_NUMERIC, original)


# --- validation -------------------------------------------------------------------

def test_validate_clean_fixture():
    header, frames = read_sequence(FIXTURES / "logged_lri.seq")
    report = validate_sequence(header, list(frames))
    assert report.ok and report.issues == []
    assert report.n_frames == 1


def test_validate_duplicate_frame_reports_both_positions():
    header = SequenceHeader(n_lanes=2)
    frames = [
        FrameRecord(frame_id=0, timestamp_s=0.0, lines=()),
        FrameRecord(frame_id=7, timestamp_s=0.1, lines=()),
        FrameRecord(frame_id=7, timestamp_s=0.2, lines=()),
    ]
    report = validate_sequence(header, frames)
    assert not report.ok
    (issue,) = report.issues
    assert "positions 1 and 2" in issue.message


def test_validate_all_crossing_warns():
    header = SequenceHeader(n_lanes=2)
    frames = [
        FrameRecord(frame_id=i, timestamp_s=0.1 * i, lines=(), gt_lane=1, crossing=True)
        for i in range(5)
    ]
    report = validate_sequence(header, frames)
    assert report.ok  # warning, not error
    assert any("crossing" in issue.message for issue in report.issues)
    assert report.crossing_fraction == 1.0


def test_validate_stats_and_machine_readable():
    header = SequenceHeader(n_lanes=3)
    frames = [
        FrameRecord(frame_id=0, timestamp_s=0.0, lines=(), gt_lane=1),
        FrameRecord(
            frame_id=1, timestamp_s=0.1,
            lines=(LineEntry("a", 1.0, False, True),), crossing=True,
        ),
    ]
    report = validate_sequence(header, frames)
    as_dict = report.to_dict()
    assert json.loads(json.dumps(as_dict)) == as_dict
    assert as_dict["zero_line_fraction"] == 0.5
    assert as_dict["crossing_fraction"] == 0.5
    assert as_dict["gt_fraction"] == 0.5
