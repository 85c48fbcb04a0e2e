"""Post-processing analytics: path-loss regression, PAP/PADP grids, target
isolation, RCS estimation and the link budget."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .campaign import calibrated_pdps
from .channel import Scene, SensingGeometry, aperture_gain_db, fspl_db
from .core import SounderConfig, thermal_noise_dbm
from .receiver import total_power_dbm

# ---------------------------------------------------------------------------
# Path loss
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathLossSample:
    distance: float  # m
    path_loss: float  # dB
    run_id: str = ""
    timestamp: float = 0.0

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError(f"distance must be > 0, got {self.distance}")
        if not self.path_loss > 0:
            raise ValueError(f"path loss must be > 0 dB, got {self.path_loss}")


@dataclass(frozen=True)
class PathLossFit:
    ple: float
    sigma_s: float  # dB
    intercept_at_d0: float  # dB
    d0: float
    n_samples: int
    anchored: bool = False

    def predict(self, distance):
        return self.intercept_at_d0 + 10.0 * self.ple * np.log10(np.asarray(distance, dtype=float) / self.d0)


def path_loss_from_capture(tx_eirp: float, omni_power: float | None, g_rx: float = 0.0) -> float | None:
    """PL = EIRP + G_rx − P_rx. A capture with no signal yields None."""
    if omni_power is None or (isinstance(omni_power, float) and math.isnan(omni_power)):
        return None
    return tx_eirp + g_rx - omni_power


def fit_path_loss(samples, d0: float = 1.0, anchor_db: float | None = None) -> PathLossFit:
    """Least-squares close-in fit PL(d) = PL(d0) + 10·n·log10(d/d0).

    The intercept is free by default. Pass ``anchor_db`` (e.g. FSPL at d0) to
    pin it, in which case only the slope is fitted.
    """
    samples = list(samples)
    if d0 <= 0:
        raise ValueError("d0 must be positive")
    if len(samples) < 2:
        raise ValueError(f"need at least 2 samples, got {len(samples)}")
    d = np.array([s.distance for s in samples], dtype=float)
    pl = np.array([s.path_loss for s in samples], dtype=float)
    if len(np.unique(d)) < 2:
        raise ValueError("degenerate distance set: need at least 2 distinct distances")
    x = 10.0 * np.log10(d / d0)
    n = len(samples)
    if anchor_db is None:
        slope, intercept = np.polyfit(x, pl, 1)
        dof = n - 2
    else:
        slope = float(np.dot(x, pl - anchor_db) / np.dot(x, x))
        intercept = anchor_db
        dof = n - 1
    resid = pl - (intercept + slope * x)
    sigma = float(math.sqrt(np.sum(resid**2) / dof)) if dof > 0 else 0.0
    return PathLossFit(float(slope), sigma, float(intercept), d0, n, anchor_db is not None)


def path_loss_samples(recording, calibration=None, g_rx: float = 0.0, margin_db=None, run_id: str = ""):
    """One sample per omni capture of a recording, distance taken from the scene.

    Captures with no retained power are skipped; the count is returned too.
    """
    hdr = recording.header
    scene = Scene.from_dict(hdr["scene"])
    eirp = float(hdr["config"]["tx_eirp"])
    omni = [r for r in recording.records if r.info.beam_id is None]
    out, dropped = [], 0
    for rec, pdp in zip(omni, calibrated_pdps(omni, calibration, {}, margin_db)):
        pl = path_loss_from_capture(eirp, total_power_dbm(pdp), g_rx)
        t = rec.info.timestamp
        dist = float(np.linalg.norm(scene.rx_at(t) - scene.tx_at(t)))
        if pl is None or dist <= 0:
            dropped += 1
            continue
        out.append(PathLossSample(dist, pl, run_id, t))
    return out, dropped


# ---------------------------------------------------------------------------
# Angular grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PadpGrid:
    """Power on a 2-D grid.

    ``kind`` is ``"pap"`` (azimuth × elevation, total power per beam),
    ``"azimuth"`` (azimuth × delay) or ``"elevation"`` (elevation × delay).
    ``power_mw`` holds linear power with 0 for absent cells; ``measured``
    marks cells that had a beam capture at all.
    """

    kind: str
    axis0_deg: np.ndarray
    axis1: np.ndarray  # elevation deg for PAP, delay ns otherwise
    power_mw: np.ndarray
    measured: np.ndarray
    missing_beams: tuple = ()

    @property
    def axis_names(self) -> tuple:
        return {
            "pap": ("az_deg", "el_deg"),
            "azimuth": ("az_deg", "delay_ns"),
            "elevation": ("el_deg", "delay_ns"),
        }[self.kind]

    @property
    def power_dbm(self) -> np.ndarray:
        """dBm per cell, NaN where absent."""
        with np.errstate(divide="ignore"):
            db = 10 * np.log10(self.power_mw)
        return np.where((self.power_mw > 0) & self.measured, db, np.nan)

    def argmax(self) -> tuple:
        i, j = np.unravel_index(int(np.argmax(self.power_mw)), self.power_mw.shape)
        return float(self.axis0_deg[i]), float(self.axis1[j])


def _beam_axes(beam_table):
    az = np.unique(np.round([b.pointing[0] for b in beam_table], 9))
    el = np.unique(np.round([b.pointing[1] for b in beam_table], 9))
    return az, el


def _index_pdps(beam_pdps, beam_table):
    by_beam = {}
    for p in beam_pdps:
        if p.info.beam_id is None:
            raise ValueError("omni PDP passed where beam PDPs are expected")
        if not p.thresholded:
            raise ValueError("beam PDPs must be noise-thresholded")
        by_beam[p.info.beam_id] = p
    missing = tuple(b.beam_id for b in beam_table if b.beam_id not in by_beam)
    return by_beam, missing


def _empty(kind):
    return PadpGrid(kind, np.zeros(0), np.zeros(0), np.zeros((0, 0)), np.zeros((0, 0), dtype=bool),
                    ())


def build_pap(beam_pdps, beam_table) -> PadpGrid:
    """Total retained power per beam on the (azimuth, elevation) pointing grid."""
    beam_pdps = list(beam_pdps)
    if not beam_pdps:
        return _empty("pap")
    az, el = _beam_axes(beam_table)
    by_beam, missing = _index_pdps(beam_pdps, beam_table)
    grid = np.zeros((len(az), len(el)))
    measured = np.zeros_like(grid, dtype=bool)
    for b in beam_table:
        p = by_beam.get(b.beam_id)
        if p is None:
            continue
        i = int(np.searchsorted(az, round(b.pointing[0], 9)))
        j = int(np.searchsorted(el, round(b.pointing[1], 9)))
        grid[i, j] += float(np.sum(p.retained_mw()))
        measured[i, j] = True
    return PadpGrid("pap", az, el, grid, measured, missing)


def build_padp(beam_pdps, beam_table, axis: str = "azimuth") -> PadpGrid:
    """Per azimuth column (or elevation row), the linear sum of beam PDPs."""
    if axis not in ("azimuth", "elevation"):
        raise ValueError(f"axis must be 'azimuth' or 'elevation', got {axis!r}")
    beam_pdps = list(beam_pdps)
    if not beam_pdps:
        return _empty(axis)
    az, el = _beam_axes(beam_table)
    by_beam, missing = _index_pdps(beam_pdps, beam_table)
    first = beam_pdps[0]
    n = len(first.power_mw)
    labels = az if axis == "azimuth" else el
    k = 0 if axis == "azimuth" else 1
    grid = np.zeros((len(labels), n))
    measured = np.zeros_like(grid, dtype=bool)
    for b in beam_table:
        p = by_beam.get(b.beam_id)
        if p is None:
            continue
        if len(p.power_mw) != n:
            raise ValueError("beam PDPs differ in length")
        i = int(np.searchsorted(labels, round(b.pointing[k], 9)))
        grid[i] += p.retained_mw()
        measured[i] = True
    delay_ns = np.arange(n) * first.tap_spacing * 1e9
    return PadpGrid(axis, labels, delay_ns, grid, measured, missing)


# ---------------------------------------------------------------------------
# Target isolation and RCS
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TargetIsolation:
    power_dbm: np.ndarray  # per snapshot, NaN = no signal
    peak_delay_s: np.ndarray  # strongest residual bin in the window, NaN = no signal
    background_mw: np.ndarray
    residual_mw: np.ndarray  # snapshots × bins

    @property
    def detected(self) -> np.ndarray:
        return ~np.isnan(self.power_dbm)


def isolate_target(pdp_series, expected_delay, window: float) -> TargetIsolation:
    """Remove the static background (per-bin temporal median) and sum what
    is left within ``expected_delay ± window`` for every snapshot."""
    pdps = list(pdp_series)
    if not pdps:
        raise ValueError("empty PDP series")
    spacing = pdps[0].tap_spacing
    if window < spacing:
        raise ValueError(f"window {window} s is smaller than one tap spacing ({spacing} s)")
    expected = np.broadcast_to(np.asarray(expected_delay, dtype=float), (len(pdps),))
    for p in pdps:
        if not p.thresholded:
            raise ValueError("target isolation needs thresholded PDPs")
    P = np.vstack([p.retained_mw() for p in pdps])
    background = np.median(P, axis=0)
    residual = np.maximum(P - background, 0.0)
    delays = np.arange(P.shape[1]) * spacing
    power = np.full(len(pdps), np.nan)
    peak = np.full(len(pdps), np.nan)
    for i, tau in enumerate(expected):
        sel = np.flatnonzero(np.abs(delays - tau) <= window)
        r = residual[i, sel]
        s = float(np.sum(r))
        if s > 0:
            power[i] = 10 * math.log10(s)
            peak[i] = delays[sel[int(np.argmax(r))]]
    return TargetIsolation(power, peak, background, residual)


@dataclass(frozen=True)
class RcsEstimate:
    gamma_dbsm: np.ndarray
    n_excluded: int


@dataclass(frozen=True)
class RcsFit:
    mu: float
    sigma: float
    n_samples: int
    target_class: str = ""
    mode: str = ""
    n_excluded: int = 0


def estimate_rcs(
    target_powers_dbm, geometries, f_ghz: float, tx_eirp: float, g_tx: float = 0.0, g_rx: float = 0.0
) -> RcsEstimate:
    """Invert PL_t = PL_1 − G_s + PL_2 per snapshot. NaN powers are skipped."""
    powers = np.asarray(target_powers_dbm, dtype=float)
    geometries = list(geometries)
    if len(geometries) != len(powers):
        raise ValueError(f"{len(powers)} powers but {len(geometries)} geometries")
    ap = aperture_gain_db(f_ghz)
    out = []
    for p, g in zip(powers, geometries):
        if not np.isfinite(p):
            continue
        pl_t = tx_eirp - p
        out.append(fspl_db(g.d1, f_ghz, g_tx, 0.0) + fspl_db(g.d2, f_ghz, 0.0, g_rx) - pl_t - ap)
    return RcsEstimate(np.array(out), int(len(powers) - len(out)))


def fit_normal(estimate: RcsEstimate, target_class: str = "", mode: str = "") -> RcsFit:
    g = estimate.gamma_dbsm
    if len(g) < 2:
        raise ValueError(f"need at least 2 RCS samples, got {len(g)}")
    return RcsFit(float(np.mean(g)), float(np.std(g, ddof=1)), len(g), target_class, mode, estimate.n_excluded)


def target_geometries(scene: Scene, times, target_index: int = 0):
    tr = scene.targets[target_index]
    return [
        SensingGeometry.from_positions(scene.tx_at(t), scene.rx_at(t), tr.position(t), tr.heading_deg)
        for t in times
    ]


# ---------------------------------------------------------------------------
# Link budget
# ---------------------------------------------------------------------------

DEFAULT_LINK_G_RX_DBI = 15.0
DEFAULT_SNR_MIN_DB = 3.0


@dataclass(frozen=True)
class LinkBudget:
    max_path_loss_db: float
    terms: dict = field(default_factory=dict)


def link_budget(
    cfg: SounderConfig,
    g_rx: float = DEFAULT_LINK_G_RX_DBI,
    snr_min: float = DEFAULT_SNR_MIN_DB,
    noise_figure: float | None = None,
) -> LinkBudget:
    """Largest path loss at which the correlated tap still clears ``snr_min``.

    ``noise_figure`` defaults to the array receiver's.
    """
    nf = cfg.rx_noise_figure_array if noise_figure is None else noise_figure
    floor = thermal_noise_dbm(cfg.occupied_bandwidth)
    pg = cfg.processing_gain_db
    pl = cfg.tx_eirp + g_rx + pg - snr_min - floor - nf
    terms = {"tx_eirp_dbm": cfg.tx_eirp, "g_rx_dbi": g_rx, "processing_gain_db": pg,
             "snr_min_db": snr_min, "noise_floor_dbm": floor, "noise_figure_db": nf}
    return LinkBudget(pl, terms)
