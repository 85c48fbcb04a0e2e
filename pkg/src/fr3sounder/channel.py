"""Ground-truth propagation: free-space links, ISAC target scattering, front-end
impairments and receiver noise."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import SounderConfig, SPEED_OF_LIGHT, thermal_noise_dbm, wavelength_m
from .waveform import ComplexBaseband, subcarrier_bins


class TapOrigin(str, Enum):
    LINE_OF_SIGHT = "line_of_sight"
    ENVIRONMENT = "environment"
    TARGET = "target"


@dataclass(frozen=True)
class PathTap:
    delay: float  # s
    gain: complex  # linear voltage, relative to the transmit power reference
    aod: tuple = (0.0, 0.0)  # (az deg, el deg)
    aoa: tuple = (0.0, 0.0)
    origin: TapOrigin = TapOrigin.ENVIRONMENT

    def __post_init__(self):
        if not self.delay >= 0:
            raise ValueError(f"tap delay must be >= 0, got {self.delay}")

    @property
    def power_db(self) -> float:
        return 20.0 * math.log10(abs(self.gain)) if self.gain != 0 else -math.inf


@dataclass(frozen=True)
class ChannelRealization:
    taps: tuple
    timestamp: float = 0.0

    def __post_init__(self):
        taps = tuple(sorted(self.taps, key=lambda t: t.delay))
        object.__setattr__(self, "taps", taps)
        if sum(t.origin is TapOrigin.LINE_OF_SIGHT for t in taps) > 1:
            raise ValueError("at most one line-of-sight tap per realization")

    def frequency_response(self, freqs_hz, delay_bias: float = 0.0) -> np.ndarray:
        f = np.asarray(freqs_hz, dtype=float)
        h = np.zeros(f.shape, dtype=complex)
        for tap in self.taps:
            h += tap.gain * np.exp(-2j * np.pi * f * (tap.delay + delay_bias))
        return h

    def with_gains(self, gains) -> "ChannelRealization":
        taps = [
            PathTap(t.delay, t.gain * g, t.aod, t.aoa, t.origin) for t, g in zip(self.taps, gains)
        ]
        return ChannelRealization(tuple(taps), self.timestamp)

    def of_origin(self, origin: TapOrigin):
        return [t for t in self.taps if t.origin is origin]


# ---------------------------------------------------------------------------
# Link and target path loss
# ---------------------------------------------------------------------------


def fspl_db(d: float, f_ghz: float, g_tx: float = 0.0, g_rx: float = 0.0) -> float:
    """Free-space path loss with d in metres and f in GHz, net of antenna gains."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    if not f_ghz > 0:
        raise ValueError(f"frequency must be positive, got {f_ghz}")
    return 20.0 * math.log10(d * f_ghz) + 32.44 - g_tx - g_rx


def aperture_gain_db(f_ghz: float) -> float:
    """10·log10(4π/λ²): the scattering gain of a 1 m² cross section."""
    lam = wavelength_m(f_ghz)
    return 10.0 * math.log10(4.0 * math.pi / lam**2)


def scattering_gain_db(gamma_dbsm: float, f_ghz: float) -> float:
    return gamma_dbsm + aperture_gain_db(f_ghz)


@dataclass(frozen=True)
class SensingGeometry:
    tx_position: tuple
    rx_position: tuple
    target_position: tuple
    d1: float
    d2: float
    theta_heading: float = 0.0
    theta_b: float = 0.0

    @classmethod
    def from_positions(cls, tx, rx, target, theta_heading: float = 0.0) -> "SensingGeometry":
        tx, rx, target = (np.asarray(p, dtype=float) for p in (tx, rx, target))
        v1 = target - tx
        v2 = rx - target
        d1 = float(np.linalg.norm(v1))
        d2 = float(np.linalg.norm(v2))
        if d1 <= 0 or d2 <= 0:
            raise ValueError("degenerate sensing geometry: target coincides with TX or RX")
        # bistatic angle at the target between the directions to TX and to RX
        cosb = float(np.dot(-v1, v2) / (d1 * d2))
        theta_b = math.degrees(math.acos(max(-1.0, min(1.0, cosb))))
        return cls(tuple(tx), tuple(rx), tuple(target), d1, d2, theta_heading, theta_b)

    @property
    def is_monostatic(self) -> bool:
        return np.allclose(self.tx_position, self.rx_position)


def target_path_loss_db(
    geom: SensingGeometry, gamma_dbsm: float, f_ghz: float, g_tx: float = 0.0, g_rx: float = 0.0
) -> float:
    """PL_t = PL_1 − G_s + PL_2 for the TX→target→RX path."""
    if geom.d1 <= 0 or geom.d2 <= 0:
        raise ValueError("degenerate sensing geometry")
    pl1 = fspl_db(geom.d1, f_ghz, g_tx, 0.0)
    pl2 = fspl_db(geom.d2, f_ghz, 0.0, g_rx)
    return pl1 - scattering_gain_db(gamma_dbsm, f_ghz) + pl2


def bistatic_delay_s(tx, rx, target) -> float:
    tx, rx, target = (np.asarray(p, dtype=float) for p in (tx, rx, target))
    if not (np.all(np.isfinite(tx)) and np.all(np.isfinite(rx)) and np.all(np.isfinite(target))):
        raise ValueError("positions must be finite")
    return float(np.linalg.norm(target - tx) + np.linalg.norm(rx - target)) / SPEED_OF_LIGHT


# ---------------------------------------------------------------------------
# Radar cross section
# ---------------------------------------------------------------------------

# (class, mode) -> (mu dBsm, sigma dBsm)
RCS_CATALOG = {
    ("passenger_car", "bistatic"): (-0.1, 6.1),
    ("passenger_car", "monostatic"): (7.7, 8.4),
    ("pedestrian", "bistatic"): (-14.4, 6.7),
    ("pedestrian", "monostatic"): (-6.2, 10.0),
}


@dataclass(frozen=True)
class RcsModel:
    target_class: str
    mode: str
    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("RCS sigma must be >= 0")

    @classmethod
    def from_catalog(cls, target_class: str, mode: str) -> "RcsModel":
        try:
            mu, sigma = RCS_CATALOG[(target_class, mode)]
        except KeyError:
            raise ValueError(f"no catalog entry for ({target_class!r}, {mode!r})") from None
        return cls(target_class, mode, mu, sigma)


def rcs_sample_dbsm(model: RcsModel, rng: np.random.Generator, size=None):
    """Log-normal RCS: a normal draw in the dB domain."""
    if model.sigma == 0:
        return model.mu if size is None else np.full(size, model.mu)
    return rng.normal(model.mu, model.sigma, size)


# ---------------------------------------------------------------------------
# Front-end impairments
# ---------------------------------------------------------------------------


def ripple_response(n: int, seed: int, max_db: float = 1.5, max_phase: float = 0.1) -> np.ndarray:
    """Smooth complex ripple over ``n`` subcarriers: three seeded sinusoids in
    log-magnitude and in phase, each zero-mean across the band, with peak
    magnitude exactly ``max_db``."""
    rng = np.random.default_rng(seed)
    u = np.linspace(-0.5, 0.5, n)

    def shape(peak):
        s = np.zeros(n)
        for _ in range(3):
            s += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * rng.uniform(0.5, 3.0) * u + rng.uniform(0, 2 * np.pi))
        s -= s.mean()
        return s * (peak / np.max(np.abs(s)))

    mag_db = shape(max_db)
    phase = shape(max_phase)
    return np.exp(mag_db * (math.log(10) / 20.0) + 1j * phase)


@dataclass(frozen=True, eq=False)
class FrontEndModel:
    tx_ripple: np.ndarray
    rx_ripple: np.ndarray
    rx_gain_offset: float = 0.0  # dB
    noise_figure: float = 0.0  # dB
    seed: int = 0
    noise_enabled: bool = True

    def __post_init__(self):
        for name in ("tx_ripple", "rx_ripple"):
            r = np.abs(getattr(self, name))
            if np.any(r == 0) or np.max(np.abs(20 * np.log10(r))) > 3.0 + 1e-9:
                raise ValueError(f"{name} magnitude must stay within ±3 dB of unity")

    @classmethod
    def ideal(cls, cfg: SounderConfig, noise_figure: float = 0.0, noise_enabled: bool = False):
        ones = np.ones(cfg.zc_length, dtype=complex)
        return cls(ones, ones, 0.0, noise_figure, 0, noise_enabled)

    @classmethod
    def seeded(
        cls,
        cfg: SounderConfig,
        seed: int,
        noise_figure: float,
        rx_gain_offset: float = 0.0,
        tx_seed: int | None = None,
        max_ripple_db: float = 1.5,
        noise_enabled: bool = True,
    ) -> "FrontEndModel":
        tx = ripple_response(cfg.zc_length, seed if tx_seed is None else tx_seed, max_ripple_db)
        rx = ripple_response(cfg.zc_length, seed + 7919, max_ripple_db)
        return cls(tx, rx, rx_gain_offset, noise_figure, seed, noise_enabled)


# ---------------------------------------------------------------------------
# Scenes
# ---------------------------------------------------------------------------


def _interp_track(waypoints, t):
    wp = np.asarray(waypoints, dtype=float)
    times = wp[:, 0]
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise ValueError(f"track undefined at t={t}s (covers {times[0]}..{times[-1]} s)")
    return np.array([np.interp(t, times, wp[:, k]) for k in (1, 2, 3)])


def direction_deg(src, dst) -> tuple:
    """(azimuth, elevation) in degrees of the vector from ``src`` to ``dst``."""
    v = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    az = math.degrees(math.atan2(v[1], v[0]))
    el = math.degrees(math.atan2(v[2], math.hypot(v[0], v[1])))
    return (az, el)


@dataclass(frozen=True)
class TargetTrack:
    waypoints: tuple  # ((t, x, y, z), ...)
    target_class: str = "passenger_car"
    mode: str = "bistatic"
    coherence: str = "fresh"  # or "frozen"
    seed: int = 0
    blocked: bool = False
    heading_deg: float = 0.0

    def position(self, t: float) -> np.ndarray:
        return _interp_track(self.waypoints, t)

    def rcs_model(self) -> RcsModel:
        return RcsModel.from_catalog(self.target_class, self.mode)


@dataclass(frozen=True)
class Scene:
    tx_position: tuple = (0.0, 0.0, 0.0)
    rx_position: tuple = (3.0, 0.0, 0.0)
    g_tx_dbi: float = 0.0
    g_rx_dbi: float = 0.0
    environment: tuple = ()  # dicts: delay_s, gain_db, phase_rad, aoa, aod
    targets: tuple = ()
    rx_track: tuple | None = None  # optional ((t, x, y, z), ...) for drive tests
    los_blocked: bool = False
    shadowing_sigma_db: float = 0.0
    shadowing_seed: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "environment", tuple(Scene._env_entry(e) for e in self.environment))

    def rx_at(self, t: float) -> np.ndarray:
        if self.rx_track:
            return _interp_track(self.rx_track, t)
        return np.asarray(self.rx_position, dtype=float)

    def tx_at(self, t: float) -> np.ndarray:
        return np.asarray(self.tx_position, dtype=float)

    def shadowing_db(self, rx) -> float:
        """Location-keyed shadowing: identical for every run over the same path."""
        if self.shadowing_sigma_db == 0:
            return 0.0
        key = [self.shadowing_seed] + [int(round(c * 1000)) & 0xFFFFFFFF for c in rx]
        return float(np.random.default_rng(key).normal(0.0, self.shadowing_sigma_db))

    def time_range(self):
        spans = [np.asarray(tr.waypoints, float)[:, 0] for tr in self.targets]
        if self.rx_track:
            spans.append(np.asarray(self.rx_track, float)[:, 0])
        if not spans:
            return (-math.inf, math.inf)
        return (max(s[0] for s in spans), min(s[-1] for s in spans))

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "tx_position": [float(x) for x in self.tx_position],
            "rx_position": [float(x) for x in self.rx_position],
            "g_tx_dbi": float(self.g_tx_dbi),
            "g_rx_dbi": float(self.g_rx_dbi),
            "los_blocked": self.los_blocked,
            "environment": [Scene._env_entry(e) for e in self.environment],
            "targets": [
                {
                    "waypoints": [[float(x) for x in w] for w in tr.waypoints],
                    "target_class": tr.target_class,
                    "mode": tr.mode,
                    "coherence": tr.coherence,
                    "seed": tr.seed,
                    "blocked": tr.blocked,
                    "heading_deg": tr.heading_deg,
                }
                for tr in self.targets
            ],
            "rx_track": [[float(x) for x in w] for w in self.rx_track] if self.rx_track else None,
            "shadowing": {"sigma_db": float(self.shadowing_sigma_db), "seed": int(self.shadowing_seed)},
        }

    @staticmethod
    def _env_entry(e) -> dict:
        return {
            "delay_s": float(e["delay_s"]),
            "gain_db": float(e["gain_db"]),
            "phase_rad": float(e.get("phase_rad", 0.0)),
            "aoa": [float(a) for a in e.get("aoa", (0.0, 0.0))],
            "aod": [float(a) for a in e.get("aod", (0.0, 0.0))],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        allowed = {
            "name", "tx_position", "rx_position", "g_tx_dbi", "g_rx_dbi", "los_blocked",
            "environment", "targets", "rx_track", "shadowing",
        }
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise ValueError(f"unknown scene keys: {unknown}")
        env = [cls._env_entry(e) for e in d.get("environment", [])]
        targets = []
        for tr in d.get("targets", []):
            coherence = tr.get("coherence", "fresh")
            if coherence not in ("fresh", "frozen"):
                raise ValueError(f"unknown RCS coherence policy {coherence!r}")
            targets.append(
                TargetTrack(
                    tuple(tuple(float(x) for x in w) for w in tr["waypoints"]),
                    tr.get("target_class", "passenger_car"),
                    tr.get("mode", "bistatic"),
                    coherence,
                    int(tr.get("seed", 0)),
                    bool(tr.get("blocked", False)),
                    float(tr.get("heading_deg", 0.0)),
                )
            )
        sh = d.get("shadowing") or {}
        rx_track = d.get("rx_track")
        return cls(
            tuple(float(x) for x in d.get("tx_position", (0, 0, 0))),
            tuple(float(x) for x in d.get("rx_position", (3, 0, 0))),
            float(d.get("g_tx_dbi", 0.0)),
            float(d.get("g_rx_dbi", 0.0)),
            tuple(env),
            tuple(targets),
            tuple(tuple(float(x) for x in w) for w in rx_track) if rx_track else None,
            bool(d.get("los_blocked", False)),
            float(sh.get("sigma_db", 0.0)),
            int(sh.get("seed", 0)),
            d.get("name", ""),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_scene(path) -> Scene:
    with open(path) as fh:
        return Scene.from_dict(json.load(fh))


def _target_rng(track: TargetTrack, index: int, t: float) -> np.random.Generator:
    if track.coherence == "frozen":
        return np.random.default_rng([track.seed, index])
    return np.random.default_rng([track.seed, index, int(round(t * 1e9))])


def realize_channel(scene: Scene, t: float, cfg: SounderConfig, rng: np.random.Generator | None = None):
    """Channel taps at time ``t``. Target draws use ``rng`` when given, otherwise a
    stream keyed on (target seed, index, t) so realizations are reproducible."""
    f = cfg.center_frequency
    fc = f * 1e9
    tx = scene.tx_at(t)
    rx = scene.rx_at(t)
    taps = []
    d_los = float(np.linalg.norm(rx - tx))
    if not scene.los_blocked and d_los > 1e-9:
        pl = fspl_db(d_los, f, scene.g_tx_dbi, scene.g_rx_dbi) + scene.shadowing_db(rx)
        tau = d_los / SPEED_OF_LIGHT
        gain = 10 ** (-pl / 20) * np.exp(-2j * np.pi * fc * tau)
        taps.append(PathTap(tau, complex(gain), direction_deg(tx, rx), direction_deg(rx, tx), TapOrigin.LINE_OF_SIGHT))
    for e in scene.environment:
        gain = 10 ** (e["gain_db"] / 20) * np.exp(1j * e["phase_rad"])
        taps.append(PathTap(e["delay_s"], complex(gain), tuple(e["aod"]), tuple(e["aoa"]), TapOrigin.ENVIRONMENT))
    for i, track in enumerate(scene.targets):
        pos = track.position(t)
        if track.blocked:
            continue
        geom = SensingGeometry.from_positions(tx, rx, pos, track.heading_deg)
        r = rng if rng is not None else _target_rng(track, i, t)
        gamma = rcs_sample_dbsm(track.rcs_model(), r)
        pl_t = target_path_loss_db(geom, gamma, f, scene.g_tx_dbi, scene.g_rx_dbi)
        tau = (geom.d1 + geom.d2) / SPEED_OF_LIGHT
        gain = 10 ** (-pl_t / 20) * np.exp(1j * r.uniform(0, 2 * np.pi))
        taps.append(PathTap(tau, complex(gain), direction_deg(tx, pos), direction_deg(rx, pos), TapOrigin.TARGET))
    return ChannelRealization(tuple(taps), t)


# ---------------------------------------------------------------------------
# Channel application
# ---------------------------------------------------------------------------


def apply_channel(
    tx: ComplexBaseband,
    ch: ChannelRealization,
    fe: FrontEndModel,
    cfg: SounderConfig,
    rng: np.random.Generator | None = None,
    delay_bias: float = 0.0,
) -> ComplexBaseband:
    """Per-subcarrier channel: tx ripple, taps (exact fractional delays), rx ripple,
    rx gain offset, then in-band complex Gaussian noise at kTB·NF."""
    if abs(tx.sample_rate - cfg.sample_rate) > 1e-6 * cfg.sample_rate:
        raise ValueError(f"sample-rate mismatch: {tx.sample_rate} vs configured {cfg.sample_rate}")
    n = cfg.fft_size
    if len(tx) % n:
        raise ValueError(f"baseband length {len(tx)} is not a whole number of {n}-sample periods")
    bins = subcarrier_bins(cfg.zc_length, n)
    h = ch.frequency_response(cfg.subcarrier_frequencies(), delay_bias)
    h = h * fe.tx_ripple * fe.rx_ripple * 10 ** (fe.rx_gain_offset / 20)

    periods = tx.samples.reshape(-1, n)
    if np.all(h == 1):
        out = periods.copy()
    else:
        spec = np.fft.fft(periods, axis=1)
        shaped = np.zeros_like(spec)
        shaped[:, bins] = spec[:, bins] * h
        out = np.fft.ifft(shaped, axis=1)

    if fe.noise_enabled:
        if rng is None:
            raise ValueError("noise enabled but no rng stream supplied")
        noise_dbm = thermal_noise_dbm(cfg.occupied_bandwidth, fe.noise_figure)
        var = 10 ** ((noise_dbm - tx.power_ref_dbm) / 10)
        w = np.zeros(periods.shape, dtype=complex)
        shape = (periods.shape[0], len(bins))
        w[:, bins] = math.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        out = out + np.fft.ifft(w, axis=1)

    return ComplexBaseband(out.reshape(-1), tx.sample_rate, tx.power_ref_dbm)


def capture_power_dbm(samples: ComplexBaseband, cfg: SounderConfig) -> float:
    """Absolute power of a capture in dBm, via its power reference.

    A unit-magnitude spectrum on all ``zc_length`` subcarriers maps to
    ``power_ref_dbm``, so power = ref + 10·log10(Σ|X_k|² / zc_length).
    """
    spec = np.fft.fft(samples.samples.reshape(-1, cfg.fft_size), axis=1)
    total_rel = np.mean(np.sum(np.abs(spec) ** 2, axis=1)) / cfg.zc_length
    return samples.power_ref_dbm + 10 * math.log10(total_rel)
