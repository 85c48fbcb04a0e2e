import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fr3sounder.array import (
    FACES, beam_gain_db, build_beam_table, build_scan_schedule, default_peak_gain, effective_rx_gain_db,
    scan_loss_db, wrap_deg, write_beam_table_csv,
)
from fr3sounder.channel import PathTap
from fr3sounder.core import default_config


@pytest.fixture(scope="module")
def beams():
    return build_beam_table(default_config(14.5).band)


def test_beam_counts():
    assert len(build_beam_table(default_config(14.5).band)) == 80
    assert len(build_beam_table(default_config(8.3).band)) == 60
    with pytest.raises(ValueError):
        build_beam_table(default_config(7.0).band)


def test_beam_table_invariants(beams):
    assert [b.beam_id for b in beams] == list(range(80))
    for b in beams:
        daz, el = b.boresight_offset
        assert abs(daz) <= 45 and abs(el) <= 32.5
        assert -180 <= b.pointing[0] < 180
        assert b.peak_gain == pytest.approx(default_peak_gain(default_config(14.5).band))
    per_face = {f.face_id: sum(b.face_id == f.face_id for b in beams) for f in FACES}
    assert set(per_face.values()) == {20}


def test_peak_gain_from_elements():
    assert default_peak_gain(default_config(14.5).band) == pytest.approx(10 * np.log10(64) + 5)


def test_gain_on_axis_and_half_beamwidth(beams):
    b = beams[7]
    assert beam_gain_db(b, b.pointing) == b.peak_gain - b.scan_loss
    half = (b.pointing[0] + b.beamwidth_3db[0] / 2, b.pointing[1])
    assert beam_gain_db(b, half) == pytest.approx(b.on_axis_gain - 3.0, abs=0.01)
    half_el = (b.pointing[0], b.pointing[1] + b.beamwidth_3db[1] / 2)
    assert beam_gain_db(b, half_el) == pytest.approx(b.on_axis_gain - 3.0, abs=0.01)


def test_scan_loss_model():
    assert scan_loss_db(60.0, 0.0) == pytest.approx(6.0)
    assert scan_loss_db(0.0, 0.0) == 0.0
    assert scan_loss_db(90.0, 40.0) == 6.0


def test_sidelobe_floor_and_mainlobe_profile(beams):
    b = beams[0]
    assert beam_gain_db(b, (b.pointing[0] + 90, b.pointing[1])) == b.peak_gain - 20.0
    az = b.pointing[0] + np.linspace(-10, 10, 41)
    g = beam_gain_db(b, (az, np.full_like(az, b.pointing[1])))
    expect = b.peak_gain - b.scan_loss - 12 * ((az - b.pointing[0]) / b.beamwidth_3db[0]) ** 2
    assert np.max(np.abs(g - expect)) <= 1e-9


def test_effective_gain_with_rotation(beams):
    b = beams[12]
    tap = PathTap(0.0, 1.0, aoa=b.pointing)
    assert effective_rx_gain_db(b, tap) == pytest.approx(b.on_axis_gain)
    rotated = PathTap(0.0, 1.0, aoa=(b.pointing[0] + 90.0, b.pointing[1]))
    assert effective_rx_gain_db(b, rotated, rotation_deg=90.0) == pytest.approx(b.on_axis_gain)


@given(st.floats(-1e4, 1e4))
def test_wrap_deg_range(a):
    w = wrap_deg(a)
    assert -180 <= w < 180
    assert np.isclose(np.cos(np.radians(w)), np.cos(np.radians(a)), atol=1e-9)


@pytest.mark.parametrize("f,guard,expect", [(8.3, 0.0, 0.5e-3), (14.5, 0.0, 0.6667e-3), (14.5, 11.6e-6, 0.899e-3)])
def test_scan_schedule_durations(f, guard, expect):
    cfg = default_config(f)
    s = build_scan_schedule(build_beam_table(cfg.band), cfg, guard)
    assert s.total_duration == pytest.approx(expect, abs=1e-6)
    assert s.total_duration <= 0.9e-3
    assert not s.overlapping_entries()
    # faces run in parallel: every offset is shared by all four faces
    offsets = {}
    for e in s.entries:
        offsets.setdefault(e.time_offset, set()).add(e.face_id)
    assert all(v == {0, 1, 2, 3} for v in offsets.values())


def test_scan_schedule_rejects_negative_guard(beams):
    with pytest.raises(ValueError):
        build_scan_schedule(beams, default_config(14.5), -1e-6)


def test_beam_table_csv(tmp_path, beams):
    p = tmp_path / "beams.csv"
    write_beam_table_csv(beams, p)
    rows = list(csv.DictReader(open(p)))
    assert len(rows) == 80
    assert float(rows[5]["az_deg"]) == beams[5].pointing[0]
