"""Configuration, unit arithmetic and the band plan shared by every module."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8  # m/s
THERMAL_NOISE_DBM_HZ = -174.0

SUPPORTED_FREQUENCIES_GHZ = (7.0, 8.3, 11.3, 14.5)
_BEAMS_PER_ARRAY = {7.0: 0, 8.3: 15, 11.3: 15, 14.5: 20}
_ELEMENTS_PER_ARRAY = {7.0: 0, 8.3: 32, 11.3: 32, 14.5: 64}


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


# ---------------------------------------------------------------------------
# Tagged decibel quantities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Decibel:
    """A power ratio in dB."""

    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite dB value {self.value!r}")

    def __add__(self, other):
        if type(other) is Decibel:
            return Decibel(self.value + other.value)
        if isinstance(other, (DbMilliwatt, Dbi)):
            return other + self
        return NotImplemented

    def __sub__(self, other):
        if type(other) is Decibel:
            return Decibel(self.value - other.value)
        return NotImplemented

    def __neg__(self):
        return Decibel(-self.value)

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class Dbi:
    """Antenna gain relative to an isotropic radiator."""

    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite dBi value {self.value!r}")

    def __add__(self, other):
        if type(other) is Decibel:
            return Dbi(self.value + other.value)
        if type(other) is DbMilliwatt:
            return other + self
        return NotImplemented

    def __sub__(self, other):
        if type(other) is Decibel:
            return Dbi(self.value - other.value)
        if type(other) is Dbi:
            return Decibel(self.value - other.value)
        return NotImplemented

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class DbMilliwatt:
    """Absolute power in dBm."""

    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite dBm value {self.value!r}")

    def __add__(self, other):
        # gains and ratios shift an absolute power; two absolute powers never add in dB
        if type(other) in (Decibel, Dbi):
            return DbMilliwatt(self.value + other.value)
        if type(other) is DbMilliwatt:
            raise TypeError("cannot add two absolute powers in dB; sum them linearly")
        return NotImplemented

    def __sub__(self, other):
        if type(other) is DbMilliwatt:
            return Decibel(self.value - other.value)
        if type(other) in (Decibel, Dbi):
            return DbMilliwatt(self.value - other.value)
        return NotImplemented

    def __float__(self):
        return float(self.value)

    @property
    def milliwatts(self) -> float:
        return db_to_linear(self.value)


# ---------------------------------------------------------------------------
# Scalar helpers
# ---------------------------------------------------------------------------


def db_to_linear(x):
    """Convert a power ratio in dB to linear scale."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("db_to_linear requires finite input")
    out = 10.0 ** (arr / 10.0)
    return float(out) if out.ndim == 0 else out


def linear_to_db(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0):
        raise ValueError("linear_to_db requires strictly positive input")
    out = 10.0 * np.log10(arr)
    return float(out) if out.ndim == 0 else out


def wavelength_m(f_ghz: float) -> float:
    if not f_ghz > 0:
        raise ValueError(f"frequency must be positive, got {f_ghz} GHz")
    return SPEED_OF_LIGHT / (f_ghz * 1e9)


def thermal_noise_dbm(bandwidth_hz: float, noise_figure_db: float = 0.0) -> float:
    return THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


# ---------------------------------------------------------------------------
# Band plan and sounder configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BandPlan:
    center_frequency: float  # GHz
    beams_per_array: int
    elements_per_array: int

    @classmethod
    def for_frequency(cls, f_ghz: float) -> "BandPlan":
        key = _band_key(f_ghz)
        if key is None:
            raise ConfigError([f"center_frequency: {f_ghz} GHz not in {SUPPORTED_FREQUENCIES_GHZ}"])
        return cls(key, _BEAMS_PER_ARRAY[key], _ELEMENTS_PER_ARRAY[key])

    @property
    def has_array(self) -> bool:
        return self.beams_per_array > 0


def _band_key(f_ghz):
    for f in SUPPORTED_FREQUENCIES_GHZ:
        if abs(f - f_ghz) < 1e-9:
            return f
    return None


@dataclass(frozen=True)
class SounderConfig:
    band: BandPlan = field(default_factory=lambda: BandPlan.for_frequency(14.5))
    bandwidth: float = 400e6
    subcarrier_spacing: float = 120e3
    zc_length: int = 3343
    n_repetitions: int = 4
    fft_size: int = 4096
    max_excess_delay: float = 8e-6
    tx_eirp: float = 43.0
    rx_noise_figure_omni: float = 1.5
    rx_noise_figure_array: float = 8.3

    @property
    def center_frequency(self) -> float:
        return self.band.center_frequency

    @property
    def occupied_bandwidth(self) -> float:
        return self.zc_length * self.subcarrier_spacing

    @property
    def sample_rate(self) -> float:
        return self.fft_size * self.subcarrier_spacing

    @property
    def zc_period(self) -> float:
        return 1.0 / self.subcarrier_spacing

    @property
    def tap_spacing(self) -> float:
        return 1.0 / self.occupied_bandwidth

    @property
    def frame_duration(self) -> float:
        return self.n_repetitions / self.subcarrier_spacing

    @property
    def processing_gain_db(self) -> float:
        return 10.0 * math.log10(self.zc_length * self.n_repetitions)

    def noise_floor_dbm(self, noise_figure_db: float = 0.0) -> float:
        return thermal_noise_dbm(self.occupied_bandwidth, noise_figure_db)

    def subcarrier_indices(self) -> np.ndarray:
        """Signed subcarrier indices of the occupied band, DC in the middle."""
        half = (self.zc_length - 1) // 2
        return np.arange(-half, self.zc_length - half)

    def subcarrier_frequencies(self) -> np.ndarray:
        return self.subcarrier_indices() * self.subcarrier_spacing

    def replace(self, **changes) -> "SounderConfig":
        if "center_frequency" in changes:
            changes["band"] = BandPlan.for_frequency(changes.pop("center_frequency"))
        return dataclasses.replace(self, **changes)

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "band"}
        d["center_frequency"] = float(round(self.band.center_frequency * 1e9))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SounderConfig":
        known = {f.name for f in dataclasses.fields(cls)} - {"band"} | {"center_frequency"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError([f"unknown key {k!r}" for k in unknown])
        d = dict(d)
        band = BandPlan.for_frequency(float(d.pop("center_frequency", 14.5e9)) / 1e9)
        ints = {"zc_length", "n_repetitions", "fft_size"}
        kwargs = {k: (int(v) if k in ints else float(v)) for k, v in d.items()}
        return cls(band=band, **kwargs)


def load_config(path) -> SounderConfig:
    with open(path) as fh:
        return SounderConfig.from_dict(json.load(fh))


def save_config(cfg: SounderConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def config_violations(cfg: SounderConfig) -> list[str]:
    """Every invariant the configuration breaks, in a stable order."""
    v = []
    band = cfg.band
    key = _band_key(band.center_frequency)
    if key is None:
        v.append(f"band.center_frequency: {band.center_frequency} GHz not in {SUPPORTED_FREQUENCIES_GHZ}")
    else:
        if band.beams_per_array != _BEAMS_PER_ARRAY[key]:
            v.append(f"band.beams_per_array: expected {_BEAMS_PER_ARRAY[key]} at {key} GHz, got {band.beams_per_array}")
        if band.elements_per_array != _ELEMENTS_PER_ARRAY[key]:
            v.append(
                f"band.elements_per_array: expected {_ELEMENTS_PER_ARRAY[key]} at {key} GHz, "
                f"got {band.elements_per_array}"
            )
    if cfg.zc_length < 1 or cfg.subcarrier_spacing <= 0 or cfg.bandwidth <= 0:
        v.append("zc_length/subcarrier_spacing/bandwidth: must be positive")
        return v
    if abs(cfg.occupied_bandwidth - cfg.bandwidth) > 0.01 * cfg.bandwidth:
        v.append(
            f"zc_length × scs mismatch: {cfg.zc_length} × {cfg.subcarrier_spacing:g} Hz = "
            f"{cfg.occupied_bandwidth:g} Hz, expected within 1% of bandwidth {cfg.bandwidth:g} Hz"
        )
    n = cfg.fft_size
    if n < 1 or n & (n - 1):
        v.append(f"fft_size: {n} is not a power of two")
    if n < cfg.zc_length:
        v.append(f"fft_size: {n} < zc_length {cfg.zc_length}")
    if cfg.n_repetitions < 1:
        v.append(f"n_repetitions: must be >= 1, got {cfg.n_repetitions}")
    if cfg.max_excess_delay > cfg.zc_period * (1 + 1e-12):
        v.append(
            f"max_excess_delay: {cfg.max_excess_delay:g} s exceeds one ZC period {cfg.zc_period:g} s"
        )
    if cfg.tx_eirp > 43.0:
        v.append(f"tx_eirp: {cfg.tx_eirp} dBm exceeds the +43 dBm limit")
    return v


def validate_config(cfg: SounderConfig) -> SounderConfig:
    """Return ``cfg`` unchanged, or raise ConfigError listing every violation."""
    v = config_violations(cfg)
    if v:
        raise ConfigError(v)
    return cfg


def default_config(f_ghz: float = 14.5, **overrides) -> SounderConfig:
    return SounderConfig(band=BandPlan.for_frequency(f_ghz), **overrides)
