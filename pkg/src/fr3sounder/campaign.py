"""Multi-node orchestration: clocks, TX/RX schedules and the end-to-end
simulation driver that produces recordings of CIRs."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import calibration as cal
from .array import build_beam_table, build_scan_schedule, effective_rx_gain_db, beams_by_face
from .channel import FrontEndModel, Scene, apply_channel, direction_deg, realize_channel
from .core import SounderConfig
from .receiver import CaptureInfo, Cir, correlate, noise_threshold, pdp_from_cir
from .waveform import apply_tx_coefficients, build_sounding_frame

OMNI_PORT = "omni"
TX_ANTENNA_GAIN_DBI = 10.0  # standard horn

# ---------------------------------------------------------------------------
# Clocks
# ---------------------------------------------------------------------------

CLOCK_PRESETS = {
    # source: (offset std s, drift s/s, jitter std s)
    "ideal": (0.0, 0.0, 0.0),
    "gnss": (10e-9, 0.0, 0.0),
    "rubidium": (0.0, 1e-12, 0.0),
    "ptp": (100e-9, 0.0, 0.0),
}


@dataclass(frozen=True)
class NodeClock:
    source: str = "ideal"
    offset: float = 0.0
    drift: float = 0.0
    jitter_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.source == "ideal" and (self.offset or self.drift or self.jitter_std):
            raise ValueError("an ideal clock has no offset, drift or jitter")

    @classmethod
    def preset(cls, source: str, seed: int = 0) -> "NodeClock":
        offset_std, drift, jitter = CLOCK_PRESETS[source]
        offset = float(np.random.default_rng([seed, 1]).normal(0.0, offset_std)) if offset_std else 0.0
        return cls(source, offset, drift, jitter, seed)

    def worst_case_error(self, horizon: float) -> float:
        return abs(self.offset) + abs(self.drift) * horizon + 5 * self.jitter_std


def apply_clock(t_nominal: float, clock: NodeClock) -> float:
    """Local time read by ``clock`` at true time ``t_nominal``."""
    t = t_nominal + clock.offset + clock.drift * t_nominal
    if clock.jitter_std:
        rng = np.random.default_rng([clock.seed, 2, int(round(t_nominal * 1e9))])
        t += float(rng.normal(0.0, clock.jitter_std))
    return t


# ---------------------------------------------------------------------------
# Schedule
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    node_id: int
    transmits: bool = False
    omni: bool = False
    array: bool = False
    clock: NodeClock = field(default_factory=NodeClock)

    @property
    def receives(self) -> bool:
        return self.omni or self.array


@dataclass(frozen=True)
class Action:
    node_id: int
    port: str  # "tx", "omni", "array<k>"
    kind: str  # "transmit" or "capture"
    start: float
    duration: float
    snapshot: int = 0
    beam_id: int | None = None


class ScheduleError(ValueError):
    def __init__(self, message, minimum_period=None):
        super().__init__(message)
        self.minimum_period = minimum_period


@dataclass(frozen=True)
class TxRxSchedule:
    nodes: tuple
    snapshot_period: float
    n_snapshots: int
    frame_duration: float
    sweep: object = None  # ScanSchedule or None
    epoch: float = 0.0
    clock_margin: float = 0.0

    @property
    def duration(self) -> float:
        return self.snapshot_period * self.n_snapshots

    @property
    def sweep_duration(self) -> float:
        return self.sweep.total_duration if self.sweep is not None else self.frame_duration

    def snapshot_start(self, k: int) -> float:
        return self.epoch + k * self.snapshot_period

    def iter_actions(self, snapshots=None):
        """Actions in time order; transmitters emit one continuous action."""
        for node in self.nodes:
            if node.transmits:
                yield Action(node.node_id, "tx", "transmit", self.epoch - self.clock_margin,
                             self.duration + 2 * self.clock_margin)
        ks = range(self.n_snapshots) if snapshots is None else snapshots
        for k in ks:
            t0 = self.snapshot_start(k)
            for node in self.nodes:
                if node.omni:
                    yield Action(node.node_id, OMNI_PORT, "capture", t0, self.frame_duration, k)
                if node.array and self.sweep is not None:
                    for e in self.sweep.entries:
                        yield Action(node.node_id, f"array{e.face_id}", "capture", t0 + e.time_offset,
                                     e.dwell, k, e.beam_id)

    def violations(self, sample_snapshots: int = 3) -> list[str]:
        v = []
        if self.snapshot_period < self.sweep_duration:
            v.append(f"snapshot period {self.snapshot_period} s shorter than sweep {self.sweep_duration} s")
        if not any(n.transmits for n in self.nodes):
            v.append("no transmitting node")
        if not any(n.receives for n in self.nodes):
            v.append("no receiving node")
        tx = [a for a in self.iter_actions([]) if a.kind == "transmit"]
        ks = sorted({0, self.n_snapshots - 1} | set(range(min(sample_snapshots, self.n_snapshots))))
        caps = [a for a in self.iter_actions(ks) if a.kind == "capture"]
        busy = {}
        for a in caps:
            busy.setdefault((a.node_id, a.port), []).append(a)
            for t in tx:
                if (t.node_id, t.port) == (a.node_id, a.port):
                    v.append(f"node {a.node_id} port {a.port} transmits and captures at once")
                if a.start - self.clock_margin < t.start or a.start + a.duration + self.clock_margin > t.start + t.duration:
                    v.append(f"capture at {a.start} s on node {a.node_id} not covered by transmission")
        for key, acts in busy.items():
            acts.sort(key=lambda a: a.start)
            for a, b in zip(acts, acts[1:]):
                # tolerance scales with the absolute time to absorb float rounding
                if a.start + a.duration > b.start + 1e-12 * max(1.0, abs(b.start)):
                    v.append(f"overlapping captures on node {key[0]} port {key[1]} at {b.start} s")
        return sorted(set(v))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.summary(), sort_keys=True).encode()).hexdigest()

    def summary(self) -> dict:
        return {
            "epoch": self.epoch,
            "snapshot_period": self.snapshot_period,
            "n_snapshots": self.n_snapshots,
            "frame_duration": self.frame_duration,
            "sweep_duration": self.sweep_duration,
            "clock_margin": self.clock_margin,
            "nodes": [
                {"node_id": n.node_id, "transmits": n.transmits, "omni": n.omni, "array": n.array,
                 "clock": {"source": n.clock.source, "offset": n.clock.offset, "drift": n.clock.drift,
                           "jitter_std": n.clock.jitter_std, "seed": n.clock.seed}}
                for n in self.nodes
            ],
            "sweep": None if self.sweep is None else [
                [e.time_offset, e.face_id, e.beam_id, e.dwell] for e in self.sweep.entries
            ],
        }


def build_schedule(
    nodes, sweep, snapshot_period: float, n_snapshots: int, cfg: SounderConfig,
    guard: float = 0.0, epoch: float = 0.0,
) -> TxRxSchedule:
    """Snapshot-periodic captures under a continuously repeating transmission."""
    nodes = tuple(nodes)
    needs_sweep = any(n.array for n in nodes)
    if needs_sweep and sweep is None:
        raise ScheduleError("array receivers need a beam sweep")
    sweep_d = sweep.total_duration if needs_sweep else cfg.frame_duration
    if any(n.omni for n in nodes):
        sweep_d = max(sweep_d, cfg.frame_duration)
    minimum = sweep_d + guard
    if snapshot_period < minimum - 1e-15:
        raise ScheduleError(
            f"snapshot period {snapshot_period * 1e3:.4g} ms is shorter than the minimum "
            f"{minimum * 1e3:.4g} ms", minimum,
        )
    if n_snapshots < 1:
        raise ScheduleError("need at least one snapshot")
    horizon = epoch + snapshot_period * n_snapshots
    margin = max((n.clock.worst_case_error(horizon) for n in nodes), default=0.0)
    sched = TxRxSchedule(nodes, snapshot_period, n_snapshots, cfg.frame_duration,
                         sweep if needs_sweep else None, epoch, margin)
    v = sched.violations()
    if v:
        raise ScheduleError("; ".join(v))
    return sched


# ---------------------------------------------------------------------------
# Front ends and bench calibration
# ---------------------------------------------------------------------------


def port_for(info: CaptureInfo) -> str:
    return OMNI_PORT if info.beam_id is None else f"array{info.array_id}"


def build_frontends(cfg: SounderConfig, seed: int, gain_error_db: float = 3.0, ripple_db: float = 1.5,
                    noise_enabled: bool = True) -> dict:
    """Seeded impairments for the omni port and the four array ports.

    All ports share the transmitter's ripple; each receive port has its own
    ripple and an unknown gain error drawn within ±gain_error_db.
    """
    rng = np.random.default_rng([seed, 99])
    ports = [OMNI_PORT] + [f"array{k}" for k in range(4)]
    out = {}
    for i, port in enumerate(ports):
        nf = cfg.rx_noise_figure_omni if port == OMNI_PORT else cfg.rx_noise_figure_array
        offset = float(rng.uniform(-gain_error_db, gain_error_db)) if gain_error_db else 0.0
        out[port] = FrontEndModel.seeded(cfg, seed * 10 + i + 1, nf, offset, tx_seed=seed * 10,
                                         max_ripple_db=ripple_db, noise_enabled=noise_enabled)
    return out


def calibrate_flatness(cfg: SounderConfig, frontends: dict, cable_response=None, target_eirp=None,
                       antenna_gain: float = TX_ANTENNA_GAIN_DBI) -> cal.SounderCalibration:
    """Bench steps 1–2 against the simulated front ends."""
    target = cfg.tx_eirp if target_eirp is None else target_eirp
    frame = build_sounding_frame(cfg)
    any_fe = next(iter(frontends.values()))
    tx = cal.cal_tx_flatness(cal.measure_tx_spectrum(frame, any_fe, antenna_gain), target, antenna_gain)
    frame = apply_tx_coefficients(frame, tx.coefficients)
    cable = np.ones(cfg.zc_length, dtype=complex) if cable_response is None else cable_response
    rx = {
        port: cal.cal_rx_flatness(cal.measure_rx_spectrum(frame, fe, cable), cable, port)
        for port, fe in frontends.items()
    }
    report = cal.CalReport((cal.tx_step_result(tx), cal.rx_step_result(rx)))
    return cal.SounderCalibration(tx, rx, {}, report)


# ---------------------------------------------------------------------------
# Recording container
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Recording:
    header: dict
    records: list


def record_sort_key(cir: Cir):
    b = -1 if cir.info.beam_id is None else cir.info.beam_id
    return (cir.info.timestamp, cir.info.node_id, cir.info.array_id, b)


# ---------------------------------------------------------------------------
# Simulation driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CampaignSeeds:
    noise: int = 0
    frontend: int = 0


def run_campaign(
    schedule: TxRxSchedule,
    scene: Scene,
    cfg: SounderConfig,
    seeds: CampaignSeeds = CampaignSeeds(),
    calibration: cal.SounderCalibration | None = None,
    frontends: dict | None = None,
    beams=None,
    rotations=None,
    noise_enabled: bool = True,
) -> Recording:
    """Simulate every scheduled capture and correlate it into a CIR.

    The channel is realized once per snapshot (target RCS redrawn per
    snapshot); each capture then applies its beam pattern toward every tap,
    its port's front end, clock skew and noise. ``rotations`` optionally
    gives the array platform azimuth per snapshot.
    """
    t_lo, t_hi = scene.time_range()
    if schedule.epoch < t_lo - 1e-12 or schedule.snapshot_start(schedule.n_snapshots - 1) > t_hi + 1e-12:
        raise ValueError(
            f"schedule spans {schedule.epoch}..{schedule.snapshot_start(schedule.n_snapshots - 1)} s "
            f"but the scene is defined on {t_lo}..{t_hi} s"
        )
    if frontends is None:
        frontends = build_frontends(cfg, seeds.frontend, noise_enabled=noise_enabled)
    if beams is None and schedule.sweep is not None:
        beams = build_beam_table(cfg.band)
    beam_lut = {b.beam_id: b for b in beams} if beams else {}
    frame = build_sounding_frame(cfg)
    if calibration is not None and calibration.tx is not None:
        frame = apply_tx_coefficients(frame, calibration.tx.coefficients)
    tx_node = next(n for n in schedule.nodes if n.transmits)

    records = []
    snapshots = {}
    for a in schedule.iter_actions():
        if a.kind != "capture":
            continue
        if a.snapshot not in snapshots:
            snapshots.clear()
            snapshots[a.snapshot] = realize_channel(scene, schedule.snapshot_start(a.snapshot), cfg)
        ch = snapshots[a.snapshot]
        node = next(n for n in schedule.nodes if n.node_id == a.node_id)
        skew = (apply_clock(a.start, node.clock) - a.start) - (apply_clock(a.start, tx_node.clock) - a.start)
        if a.beam_id is not None:
            beam = beam_lut[a.beam_id]
            rot = 0.0 if rotations is None else rotations[a.snapshot]
            gains = [10 ** (effective_rx_gain_db(beam, tap, rot) / 20) for tap in ch.taps]
            ch_cap = ch.with_gains(gains)
            info = CaptureInfo(a.start, a.node_id, beam.face_id, a.beam_id)
        else:
            ch_cap = ch
            info = CaptureInfo(a.start, a.node_id, 0, None)
        fe = frontends[a.port]
        rng = np.random.default_rng([seeds.noise, a.snapshot, a.node_id, 0xFFFF if a.beam_id is None else a.beam_id])
        rx = apply_channel(frame.baseband, ch_cap, fe, cfg, rng if fe.noise_enabled else None, delay_bias=skew)
        rxc = None if calibration is None else calibration.rx_coeffs(a.port)
        records.append(correlate(rx, frame, cfg, rxc, info))

    records.sort(key=record_sort_key)
    header = {
        "config": cfg.to_dict(),
        "scene": scene.to_dict(),
        "scene_hash": scene.digest(),
        "schedule": schedule.summary(),
        "schedule_digest": schedule.digest(),
        "seeds": {"noise": seeds.noise, "frontend": seeds.frontend},
        "calibration": None if calibration is None else calibration.to_dict(),
        "calibration_pending": calibration is None or not calibration.offsets_db,
        "rotations": None if rotations is None else [float(r) for r in rotations],
        "beams": None if not beams else [
            [b.beam_id, b.face_id, b.pointing[0], b.pointing[1], b.beamwidth_3db[0], b.beamwidth_3db[1], b.peak_gain]
            for b in beams
        ],
    }
    return Recording(header, records)


def snapshot_of(rec_header: dict, cir: Cir) -> int:
    s = rec_header["schedule"]
    return int(math.floor((cir.info.timestamp - s["epoch"]) / s["snapshot_period"] + 1e-9))


def group_by_snapshot(recording: Recording) -> dict:
    out = {}
    for r in recording.records:
        out.setdefault(snapshot_of(recording.header, r), []).append(r)
    return out


# ---------------------------------------------------------------------------
# Incident-power calibration from recordings
# ---------------------------------------------------------------------------


def calibration_rotations(scene: Scene, t: float = 0.0) -> list:
    """Platform azimuths that point faces 0..3 in turn at the transmitter."""
    az_tx, _ = direction_deg(scene.rx_at(t), scene.tx_at(t))
    return [az_tx - 90.0 * k for k in range(4)]


def beam_offset_db(calibration: cal.SounderCalibration, info: CaptureInfo, beams_lut: dict) -> float:
    """Total dB offset applied to a capture: its port offset plus, for beams,
    the modelled scan loss relative to the face boresight."""
    off = calibration.offsets_db.get(port_for(info), 0.0) if calibration else 0.0
    if info.beam_id is not None and beams_lut:
        off += beams_lut[info.beam_id].scan_loss
    return off


def calibrated_pdps(records, calibration, beams_lut, margin_db=None):
    kw = {} if margin_db is None else {"margin_db": margin_db}
    out = []
    for r in records:
        off = beam_offset_db(calibration, r.info, beams_lut)
        out.append(noise_threshold(pdp_from_cir(r.with_offset(off)), **kw))
    return out


def incident_power_calibration(recording: Recording, cfg: SounderConfig, d_ref: float,
                               calibration: cal.SounderCalibration | None = None, beams=None,
                               require_flatness: bool = True) -> cal.SounderCalibration:
    """Step 3 from a calibration recording.

    Snapshot ``r`` of the recording is taken with the array platform rotated
    so face ``r`` looks at the transmitter (four snapshots for arrays). The
    omni offset uses snapshot 0. Unless ``require_flatness`` is False, the
    calibration must carry passed TX and RX flatness steps.
    """
    calibration = calibration or cal.SounderCalibration()
    if require_flatness:
        passed = {s.name: s.passed for s in calibration.report.steps}
        if not (passed.get("tx_flatness") and passed.get("rx_flatness")):
            raise cal.CalibrationError("incident-power step needs passed TX and RX flatness steps first")
    base = cal.SounderCalibration(calibration.tx, calibration.rx, {}, calibration.report)
    groups = group_by_snapshot(recording)
    lut = {b.beam_id: b for b in beams} if beams else {}
    f = cfg.center_frequency
    offsets = {}
    omni = [r for r in groups.get(0, []) if r.info.beam_id is None]
    if omni:
        pdp = calibrated_pdps(omni[:1], base, lut)[0]
        offsets[OMNI_PORT] = cal.cal_incident_power(pdp, d_ref, f, cfg.tx_eirp)
    if lut:
        P = np.zeros((4, 4))
        for rot in range(4):
            caps = [r for r in groups.get(rot, []) if r.info.beam_id is not None]
            if not caps:
                raise cal.CalibrationError(f"missing array captures for platform rotation {rot}")
            for r, pdp in zip(caps, calibrated_pdps(caps, base, lut)):
                if pdp.retained_mw().any():
                    P[rot, r.info.array_id] += cal.los_power_mw(pdp)
        for k, off in enumerate(cal.cal_array_incident_power(P, d_ref, f, cfg.tx_eirp)):
            offsets[f"array{k}"] = float(off)
    step = cal.StepResult("incident_power", True, {"d_ref_m": d_ref, **{f"offset_{k}_db": v for k, v in offsets.items()}})
    report = cal.CalReport(tuple(s for s in calibration.report.steps if s.name != "incident_power") + (step,))
    return calibration.with_offsets(offsets, report)
