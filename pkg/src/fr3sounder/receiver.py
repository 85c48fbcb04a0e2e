"""Full-correlator receiver: CIR extraction, PDPs, noise thresholding and
omnidirectional synthesis from beam captures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import SounderConfig
from .waveform import ComplexBaseband, TxFrame, subcarrier_bins

OMNI_BEAM = None
DEFAULT_MARGIN_DB = 8.5
TAIL_FRACTION = 0.1
# numerical dynamic-range floor, relative to the strongest tap
NUMERICAL_FLOOR = 1e-20


@dataclass(frozen=True)
class CaptureInfo:
    timestamp: float = 0.0
    node_id: int = 0
    array_id: int = 0
    beam_id: int | None = OMNI_BEAM  # None means the omni antenna

    @property
    def is_omni(self) -> bool:
        return self.beam_id is None


@dataclass(frozen=True, eq=False)
class Cir:
    taps: np.ndarray
    tap_spacing: float
    power_reference_dbm: float = 0.0
    info: CaptureInfo = field(default_factory=CaptureInfo)

    @property
    def delays(self) -> np.ndarray:
        return np.arange(len(self.taps)) * self.tap_spacing

    def with_offset(self, offset_db: float) -> "Cir":
        return replace(self, power_reference_dbm=self.power_reference_dbm + offset_db)


@dataclass(frozen=True, eq=False)
class Pdp:
    """Power per delay bin in linear mW. ``present`` marks bins that survive
    thresholding; ``threshold_mw`` is None until :func:`noise_threshold` runs."""

    power_mw: np.ndarray
    tap_spacing: float
    info: CaptureInfo = field(default_factory=CaptureInfo)
    present: np.ndarray | None = None
    threshold_mw: float | None = None
    noise_floor_mw: float | None = None
    tail_detections: int = 0

    def __post_init__(self):
        if self.present is None:
            object.__setattr__(self, "present", np.ones(len(self.power_mw), dtype=bool))

    @property
    def thresholded(self) -> bool:
        return self.threshold_mw is not None

    @property
    def delays(self) -> np.ndarray:
        return np.arange(len(self.power_mw)) * self.tap_spacing

    def retained_mw(self) -> np.ndarray:
        return np.where(self.present, self.power_mw, 0.0)

    def power_dbm(self) -> np.ndarray:
        """Per-bin dBm with NaN for absent bins."""
        p = self.retained_mw()
        with np.errstate(divide="ignore"):
            out = 10 * np.log10(p)
        return np.where(self.present & (p > 0), out, np.nan)


@dataclass(frozen=True, eq=False)
class OmniPdp:
    power_mw: np.ndarray
    tap_spacing: float
    contributors: np.ndarray  # beams contributing to each bin
    n_beams: int
    info: CaptureInfo = field(default_factory=CaptureInfo)

    @property
    def present(self) -> np.ndarray:
        return self.power_mw > 0

    @property
    def thresholded(self) -> bool:
        return True

    @property
    def delays(self) -> np.ndarray:
        return np.arange(len(self.power_mw)) * self.tap_spacing

    def retained_mw(self) -> np.ndarray:
        return self.power_mw


# ---------------------------------------------------------------------------


def correlate(rx: ComplexBaseband, reference: TxFrame, cfg: SounderConfig, rx_coeffs=None, info=None) -> Cir:
    """Average the repeated periods, divide by the ZC subcarrier values and
    transform to ``zc_length`` delay bins. A unit zero-delay channel gives tap0 = 1."""
    n, reps, L = cfg.fft_size, cfg.n_repetitions, cfg.zc_length
    if len(reference.zc) != L:
        raise ValueError(f"reference ZC length {len(reference.zc)} != configured zc_length {L}")
    if len(rx) < reps * n:
        raise ValueError(f"capture has {len(rx)} samples; need {reps * n} for {reps} periods")
    avg = rx.samples[: reps * n].reshape(reps, n).mean(axis=0)
    h_f = np.fft.fft(avg)[subcarrier_bins(L, n)] / reference.zc
    if rx_coeffs is not None:
        h_f = h_f * rx_coeffs
    return Cir(
        cir_from_frequency_response(h_f),
        cfg.tap_spacing,
        rx.power_ref_dbm,
        info if info is not None else CaptureInfo(),
    )


def cir_from_frequency_response(h_f) -> np.ndarray:
    """Delay-domain taps from per-subcarrier response ordered low→high frequency."""
    h_f = np.asarray(h_f)
    L = len(h_f)
    half = (L - 1) // 2
    arranged = np.empty(L, dtype=complex)
    arranged[np.mod(np.arange(-half, L - half), L)] = h_f
    return np.fft.ifft(arranged)


def frequency_response_from_cir(taps) -> np.ndarray:
    taps = np.asarray(taps)
    L = len(taps)
    half = (L - 1) // 2
    return np.fft.fft(taps)[np.mod(np.arange(-half, L - half), L)]


def pdp_from_cir(cir: Cir) -> Pdp:
    scale = 10 ** (cir.power_reference_dbm / 10)
    return Pdp(np.abs(cir.taps) ** 2 * scale, cir.tap_spacing, cir.info)


def noise_threshold(pdp: Pdp, margin_db: float = DEFAULT_MARGIN_DB, tail_fraction: float = TAIL_FRACTION) -> Pdp:
    """Drop bins below (tail-median floor + margin).

    The floor is the median power of the last ``tail_fraction`` of the delay
    window, which lies beyond the maximum excess delay and holds noise only.
    """
    if margin_db <= 0:
        raise ValueError("threshold margin must be positive")
    p = pdp.power_mw
    n_tail = max(1, int(math.ceil(tail_fraction * len(p))))
    floor = float(np.median(p[-n_tail:]))
    floor = max(floor, float(np.max(p)) * NUMERICAL_FLOOR)
    thr = floor * 10 ** (margin_db / 10)
    present = pdp.present & (p >= thr) & (p > 0)
    return replace(
        pdp,
        present=present,
        threshold_mw=thr,
        noise_floor_mw=floor,
        tail_detections=int(np.count_nonzero(present[-n_tail:])),
    )


def synthesize_omni_pdp(beam_pdps) -> OmniPdp:
    """Linear per-bin sum of thresholded beam PDPs."""
    beam_pdps = list(beam_pdps)
    if not beam_pdps:
        raise ValueError("no beam PDPs to synthesize")
    n = len(beam_pdps[0].power_mw)
    spacing = beam_pdps[0].tap_spacing
    total = np.zeros(n)
    count = np.zeros(n, dtype=int)
    for pdp in beam_pdps:
        if len(pdp.power_mw) != n or abs(pdp.tap_spacing - spacing) > 1e-9 * spacing:
            raise ValueError("beam PDPs differ in length or tap spacing")
        if not pdp.thresholded:
            raise ValueError("beam PDPs must be noise-thresholded before synthesis")
        r = pdp.retained_mw()
        total += r
        count += r > 0
    first = beam_pdps[0].info
    info = CaptureInfo(first.timestamp, first.node_id, first.array_id, OMNI_BEAM)
    return OmniPdp(total, spacing, count, len(beam_pdps), info)


def total_power_dbm(pdp) -> float | None:
    """10·log10 of the summed retained power, or None when nothing is retained."""
    if not pdp.thresholded:
        raise ValueError("total power requires a thresholded PDP")
    s = float(np.sum(pdp.retained_mw()))
    return 10 * math.log10(s) if s > 0 else None


def local_maxima(power) -> np.ndarray:
    """Indices of non-zero bins at least as large as both cyclic neighbours."""
    p = np.asarray(power, dtype=float)
    left, right = np.roll(p, 1), np.roll(p, -1)
    return np.flatnonzero((p > 0) & (p >= left) & (p >= right))
