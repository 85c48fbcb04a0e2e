"""Four-step sounder calibration: TX flatness/EIRP, RX flatness, incident
power at a reference distance, and the omni-versus-beam-sum check."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import fspl_db
from .receiver import OmniPdp, Pdp, total_power_dbm

TX_RIPPLE_BOUND_DB = 1.0
TX_POWER_BOUND_DB = 1.0
RX_FLATNESS_TRIGGER_DB = 1.0
MAX_CORRECTION_DB = 3.0
OMNI_VS_BEAM_BOUND_DB = 0.2
LOS_WINDOW_BINS = 16


class CalibrationError(RuntimeError):
    pass


def ripple_db(spectrum_db) -> float:
    s = np.asarray(spectrum_db, dtype=float)
    return float(s.max() - s.min())


@dataclass(frozen=True, eq=False)
class CalCoefficients:
    port_id: str
    coefficients: np.ndarray
    derived_at: float = 0.0
    residual_ripple: float = 0.0  # dB peak-to-peak after correction
    power_error: float = 0.0  # dB
    unreachable_bins: tuple = ()

    def to_dict(self) -> dict:
        return {
            "port_id": self.port_id,
            "re": self.coefficients.real.tolist(),
            "im": self.coefficients.imag.tolist(),
            "derived_at": self.derived_at,
            "residual_ripple": self.residual_ripple,
            "power_error": self.power_error,
            "unreachable_bins": list(self.unreachable_bins),
        }

    @classmethod
    def from_dict(cls, d) -> "CalCoefficients":
        c = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
        return cls(d["port_id"], c, d["derived_at"], d["residual_ripple"], d["power_error"],
                   tuple(d.get("unreachable_bins", ())))


# ---------------------------------------------------------------------------
# Step 1: TX flatness and EIRP
# ---------------------------------------------------------------------------


def measure_tx_spectrum(frame, fe, antenna_gain: float) -> np.ndarray:
    """Per-subcarrier power (dBm) seen by a spectrum analyser at the antenna port."""
    L = len(frame.freq_domain_reference)
    mag2 = np.abs(frame.freq_domain_reference * fe.tx_ripple) ** 2
    return frame.baseband.power_ref_dbm - antenna_gain - 10 * math.log10(L) + 10 * np.log10(mag2)


def cal_tx_flatness(
    measured_spectrum,
    target_eirp: float,
    antenna_gain: float,
    port_id: str = "tx0",
    derived_at: float = 0.0,
    max_correction_db: float = MAX_CORRECTION_DB,
) -> CalCoefficients:
    """Coefficients that bring every subcarrier to an equal share of
    (target EIRP − antenna gain) at the antenna port."""
    m = np.asarray(measured_spectrum, dtype=float)
    port_target = target_eirp - antenna_gain
    per_bin = port_target - 10 * math.log10(len(m))
    corr = per_bin - m
    unreachable = tuple(int(i) for i in np.flatnonzero(np.abs(corr) > max_correction_db))
    corr = np.clip(corr, -max_correction_db, max_correction_db)
    coeffs = 10 ** (corr / 20)
    corrected = m + corr
    total = 10 * math.log10(np.sum(10 ** (corrected / 10)))
    return CalCoefficients(
        port_id, coeffs.astype(complex), derived_at, ripple_db(corrected), total - port_target, unreachable
    )


# ---------------------------------------------------------------------------
# Step 2: RX flatness
# ---------------------------------------------------------------------------


def measure_rx_spectrum(frame, fe, cable_response) -> np.ndarray:
    """Complex per-subcarrier response of a flat TX looped through a cable into an RX port."""
    tx = frame.freq_domain_reference / frame.zc
    return tx * fe.tx_ripple * cable_response * fe.rx_ripple * 10 ** (fe.rx_gain_offset / 20)


def cal_rx_flatness(
    rx_spectrum, cable_response, port_id: str = "rx0", derived_at: float = 0.0, min_cable: float = 1e-3
) -> CalCoefficients:
    """Inverse of the RX response with the cable removed, normalised to unit
    geometric mean so only flatness (not absolute level) is corrected."""
    cable = np.asarray(cable_response, dtype=complex)
    weak = np.flatnonzero(np.abs(cable) < min_cable)
    if weak.size:
        raise CalibrationError(f"cable response too small to invert at bins {weak[:10].tolist()}")
    r = np.asarray(rx_spectrum, dtype=complex) / cable
    inv = 1.0 / r
    log_inv = np.log(np.abs(inv)) + 1j * np.unwrap(np.angle(inv))
    coeffs = inv / np.exp(np.mean(log_inv))
    corrected = 20 * np.log10(np.abs(r * coeffs))
    return CalCoefficients(port_id, coeffs, derived_at, ripple_db(corrected), float(np.mean(corrected)))


def needs_rx_flatness(rx_spectrum, cable_response, trigger_db: float = RX_FLATNESS_TRIGGER_DB) -> bool:
    r = np.asarray(rx_spectrum) / np.asarray(cable_response)
    return ripple_db(20 * np.log10(np.abs(r))) > trigger_db


# ---------------------------------------------------------------------------
# Step 3: incident power at the reference distance
# ---------------------------------------------------------------------------


def expected_incident_dbm(d_ref: float, f_ghz: float, tx_eirp: float) -> float:
    return tx_eirp - fspl_db(d_ref, f_ghz, 0.0, 0.0)


def los_power_mw(pdp, window_bins: int = LOS_WINDOW_BINS) -> float:
    """Retained power within ``window_bins`` of the strongest bin."""
    p = pdp.retained_mw()
    if not np.any(p > 0):
        raise CalibrationError("no dominant tap: every bin is below the noise threshold")
    k = int(np.argmax(p))
    idx = np.arange(k - window_bins, k + window_bins + 1) % len(p)
    return float(np.sum(p[idx]))


def cal_incident_power(
    measured_pdp, d_ref: float, f_ghz: float, tx_eirp: float, far_field_m: float = 1.0
) -> float:
    """Scalar dB offset that makes the LOS tap read the expected incident power."""
    if d_ref <= far_field_m:
        raise CalibrationError(f"reference distance {d_ref} m is inside the far-field limit {far_field_m} m")
    if not measured_pdp.thresholded:
        raise CalibrationError("incident-power calibration needs a thresholded PDP")
    measured = 10 * math.log10(los_power_mw(measured_pdp))
    return expected_incident_dbm(d_ref, f_ghz, tx_eirp) - measured


def cal_array_incident_power(face_power_mw, d_ref: float, f_ghz: float, tx_eirp: float) -> np.ndarray:
    """Per-face offsets (dB) from four platform rotations.

    ``face_power_mw[r, f]`` is the LOS power summed over face ``f``'s beams
    while rotation ``r`` points face ``r`` at the transmitter. Every rotation
    must synthesise the expected incident power, which gives one linear
    equation per rotation in the four per-face linear scale factors.
    """
    P = np.asarray(face_power_mw, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise CalibrationError(f"need a square rotation × face matrix, got shape {P.shape}")
    target = 10 ** (expected_incident_dbm(d_ref, f_ghz, tx_eirp) / 10)
    scale = np.linalg.solve(P, np.full(P.shape[0], target))
    if np.any(scale <= 0):
        raise CalibrationError(f"non-physical face scale factors {scale}")
    return 10 * np.log10(scale)


# ---------------------------------------------------------------------------
# Step 4: omni from beams versus the omni antenna
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    reason: str = ""


def verify_omni_vs_beams(omni: OmniPdp, reference_omni: Pdp, bound_db: float = OMNI_VS_BEAM_BOUND_DB) -> StepResult:
    synth = total_power_dbm(omni)
    ref = total_power_dbm(reference_omni)
    if synth is None or ref is None:
        side = "beam synthesis" if synth is None else "omni reference"
        return StepResult("omni_vs_beams", False, {}, f"no signal in {side}")
    delta = synth - ref
    return StepResult(
        "omni_vs_beams",
        abs(delta) <= bound_db,
        {"delta_db": delta, "synthesized_dbm": synth, "reference_dbm": ref, "bound_db": bound_db},
    )


@dataclass(frozen=True)
class CalReport:
    steps: tuple = ()
    omni_vs_beam_delta_db: float | None = None

    @property
    def passed(self) -> bool:
        return bool(self.steps) and all(s.passed for s in self.steps)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "omni_vs_beam_delta_db": self.omni_vs_beam_delta_db,
            "steps": [
                {"name": s.name, "passed": s.passed, "metrics": s.metrics, "reason": s.reason} for s in self.steps
            ],
        }


def tx_step_result(c: CalCoefficients) -> StepResult:
    ok = c.residual_ripple <= TX_RIPPLE_BOUND_DB and abs(c.power_error) <= TX_POWER_BOUND_DB
    return StepResult(
        "tx_flatness",
        ok and not c.unreachable_bins,
        {"residual_ripple_db": c.residual_ripple, "power_error_db": c.power_error,
         "unreachable_bins": len(c.unreachable_bins)},
    )


def rx_step_result(coeffs: dict) -> StepResult:
    worst = max((c.residual_ripple for c in coeffs.values()), default=0.0)
    return StepResult("rx_flatness", worst <= RX_FLATNESS_TRIGGER_DB, {"worst_residual_ripple_db": worst})


# ---------------------------------------------------------------------------
# Calibration bundle carried through simulation and processing
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SounderCalibration:
    """TX/RX flatness coefficients plus per-port incident-power offsets.

    Ports are ``"omni"`` and ``"array0"`` … ``"array3"``. Offsets are None
    until step 3 has run for that port.
    """

    tx: CalCoefficients | None = None
    rx: dict = field(default_factory=dict)
    offsets_db: dict = field(default_factory=dict)
    report: CalReport = field(default_factory=CalReport)

    def rx_coeffs(self, port: str):
        c = self.rx.get(port)
        return None if c is None else c.coefficients

    def with_offsets(self, offsets: dict, report: CalReport | None = None) -> "SounderCalibration":
        merged = dict(self.offsets_db)
        merged.update(offsets)
        return SounderCalibration(self.tx, self.rx, merged, report or self.report)

    def to_dict(self) -> dict:
        return {
            "tx": self.tx.to_dict() if self.tx else None,
            "rx": {k: v.to_dict() for k, v in sorted(self.rx.items())},
            "offsets_db": dict(sorted(self.offsets_db.items())),
            "report": self.report.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "SounderCalibration":
        tx = CalCoefficients.from_dict(d["tx"]) if d.get("tx") else None
        rx = {k: CalCoefficients.from_dict(v) for k, v in d.get("rx", {}).items()}
        steps = tuple(
            StepResult(s["name"], s["passed"], s.get("metrics", {}), s.get("reason", ""))
            for s in d.get("report", {}).get("steps", [])
        )
        report = CalReport(steps, d.get("report", {}).get("omni_vs_beam_delta_db"))
        return cls(tx, rx, dict(d.get("offsets_db", {})), report)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "SounderCalibration":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
