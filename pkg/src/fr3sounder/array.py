"""Four-face phased-array receiver: beam grid, pattern model and scan timing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import BandPlan, SounderConfig

N_FACES = 4
FACE_AZ_SPAN = 45.0  # deg either side of boresight
EL_SPAN = 32.5
AZ_COLUMNS = 5

# scan-loss model: 6 dB at the edge of the normalised scan ellipse, clamped
SCAN_LOSS_MAX_DB = 6.0
SCAN_LOSS_AZ_REF = 60.0
SCAN_LOSS_EL_REF = 45.0

DEFAULT_BEAMWIDTH_AZ = 24.0
DEFAULT_BEAMWIDTH_EL = 26.0
DEFAULT_SIDELOBE_DB = -20.0
ELEMENT_FACTOR_DB = 5.0


@dataclass(frozen=True)
class ArrayFace:
    face_id: int
    boresight_azimuth: float


FACES = tuple(ArrayFace(i, 90.0 * i) for i in range(N_FACES))


@dataclass(frozen=True)
class BeamDefinition:
    beam_id: int
    face_id: int
    pointing: tuple  # (az, el) deg, global frame
    beamwidth_3db: tuple  # (az, el) deg
    peak_gain: float  # dBi

    @property
    def boresight_offset(self) -> tuple:
        """Pointing relative to the face boresight, (az, el) deg."""
        return (wrap_deg(self.pointing[0] - FACES[self.face_id].boresight_azimuth), self.pointing[1])

    @property
    def scan_loss(self) -> float:
        return scan_loss_db(*self.boresight_offset)

    @property
    def on_axis_gain(self) -> float:
        return self.peak_gain - self.scan_loss


def wrap_deg(a):
    """Wrap an angle (or array of angles) to [-180, 180)."""
    out = (np.asarray(a, dtype=float) + 180.0) % 360.0 - 180.0
    return float(out) if out.ndim == 0 else out


def scan_loss_db(az_offset: float, el_offset: float) -> float:
    r2 = (az_offset / SCAN_LOSS_AZ_REF) ** 2 + (el_offset / SCAN_LOSS_EL_REF) ** 2
    return min(SCAN_LOSS_MAX_DB, SCAN_LOSS_MAX_DB * r2)


def default_peak_gain(band: BandPlan) -> float:
    return 10.0 * math.log10(band.elements_per_array) + ELEMENT_FACTOR_DB


def build_beam_table(
    band: BandPlan,
    beamwidth_az: float = DEFAULT_BEAMWIDTH_AZ,
    beamwidth_el: float = DEFAULT_BEAMWIDTH_EL,
    peak_gain: float | None = None,
) -> list[BeamDefinition]:
    """Uniform 5 × rows grid per face; faces tile 360° in azimuth."""
    if not band.has_array:
        raise ValueError(f"{band.center_frequency} GHz is an omni-only band; no beam table")
    if band.beams_per_array % AZ_COLUMNS:
        raise ValueError(f"{band.beams_per_array} beams do not form {AZ_COLUMNS} azimuth columns")
    rows = band.beams_per_array // AZ_COLUMNS
    az_step = 2 * FACE_AZ_SPAN / AZ_COLUMNS
    el_step = 2 * EL_SPAN / rows
    az_offsets = -FACE_AZ_SPAN + az_step * (np.arange(AZ_COLUMNS) + 0.5)
    el_centres = -EL_SPAN + el_step * (np.arange(rows) + 0.5)
    gain = default_peak_gain(band) if peak_gain is None else peak_gain
    beams = []
    for face in FACES:
        for el in el_centres:
            for daz in az_offsets:
                az = float(wrap_deg(face.boresight_azimuth + daz))
                beams.append(
                    BeamDefinition(len(beams), face.face_id, (az, float(el)), (beamwidth_az, beamwidth_el), gain)
                )
    return beams


def beam_gain_db(beam: BeamDefinition, direction, sidelobe_db: float = DEFAULT_SIDELOBE_DB):
    """Gaussian mainlobe less scan loss, floored at peak_gain + sidelobe_db.

    ``direction`` is (az, el) in degrees; arrays of directions broadcast.
    """
    az, el = direction
    daz = wrap_deg(np.subtract(az, beam.pointing[0]))
    de = np.subtract(el, beam.pointing[1])
    bw_az, bw_el = beam.beamwidth_3db
    g = beam.peak_gain - 12.0 * ((daz / bw_az) ** 2 + (de / bw_el) ** 2) - beam.scan_loss
    out = np.maximum(g, beam.peak_gain + sidelobe_db)
    return float(out) if np.ndim(out) == 0 else out


def effective_rx_gain_db(beam: BeamDefinition, tap, rotation_deg: float = 0.0, sidelobe_db=DEFAULT_SIDELOBE_DB):
    """Beam gain toward a tap's angle of arrival. ``rotation_deg`` rotates the
    array platform (positive = counter-clockwise) before evaluation."""
    az, el = tap.aoa
    return beam_gain_db(beam, (az - rotation_deg, el), sidelobe_db)


def beams_by_face(beams) -> dict:
    out = {}
    for b in beams:
        out.setdefault(b.face_id, []).append(b)
    return out


# ---------------------------------------------------------------------------
# Scan schedule
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleEntry:
    time_offset: float
    face_id: int
    beam_id: int
    dwell: float


@dataclass(frozen=True)
class ScanSchedule:
    entries: tuple
    total_duration: float

    def overlapping_entries(self):
        """Pairs of same-face entries that overlap in time (should be empty)."""
        bad = []
        for face, group in beams_by_face_entries(self.entries).items():
            group = sorted(group, key=lambda e: e.time_offset)
            for a, b in zip(group, group[1:]):
                if a.time_offset + a.dwell > b.time_offset + 1e-15:
                    bad.append((a, b))
        return bad


def beams_by_face_entries(entries):
    out = {}
    for e in entries:
        out.setdefault(e.face_id, []).append(e)
    return out


def build_scan_schedule(beams, cfg: SounderConfig, guard: float = 0.0) -> ScanSchedule:
    """Each face steps through its beams sequentially; the four faces run in parallel."""
    if guard < 0:
        raise ValueError(f"guard time must be >= 0, got {guard}")
    dwell = cfg.n_repetitions / cfg.subcarrier_spacing
    entries = []
    longest = 0
    for face_id, group in sorted(beams_by_face(beams).items()):
        for i, b in enumerate(sorted(group, key=lambda b: b.beam_id)):
            entries.append(ScheduleEntry(i * (dwell + guard), face_id, b.beam_id, dwell))
        longest = max(longest, len(group))
    entries.sort(key=lambda e: (e.time_offset, e.face_id))
    return ScanSchedule(tuple(entries), longest * (dwell + guard))


def omni_acquisition_time(cfg: SounderConfig) -> float:
    return cfg.frame_duration


def write_beam_table_csv(beams, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["beam_id", "face_id", "az_deg", "el_deg", "bw_az_deg", "bw_el_deg", "peak_gain_dbi"])
        for b in beams:
            w.writerow([b.beam_id, b.face_id, repr(b.pointing[0]), repr(b.pointing[1]),
                        repr(b.beamwidth_3db[0]), repr(b.beamwidth_3db[1]), repr(b.peak_gain)])
