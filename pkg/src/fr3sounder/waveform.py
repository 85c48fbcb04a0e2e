"""Zadoff-Chu sounding waveform and its CP-free OFDM framing."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import SounderConfig


@dataclass(frozen=True, eq=False)
class ComplexBaseband:
    """Uniformly sampled complex IQ.

    ``power_ref_dbm`` is the absolute power represented by a spectrum with
    unit magnitude on every occupied subcarrier; it ties sample amplitudes to
    dBm without baking absolute levels into the samples.
    """

    samples: np.ndarray
    sample_rate: float
    power_ref_dbm: float = 0.0

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))


@dataclass(frozen=True, eq=False)
class ZcSequence:
    root: int
    length: int
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class TxFrame:
    """``zc`` is the correlation copy; ``freq_domain_reference`` is what is
    actually placed on the subcarriers (ZC times any TX calibration)."""

    baseband: ComplexBaseband
    repetitions: int
    zc: np.ndarray
    freq_domain_reference: np.ndarray

    @property
    def sample_rate(self) -> float:
        return self.baseband.sample_rate

    @property
    def duration(self) -> float:
        return self.baseband.duration


def zc_generate(root: int, length: int) -> ZcSequence:
    if length < 1:
        raise ValueError(f"ZC length must be >= 1, got {length}")
    if length > 1 and not 0 < root < length:
        raise ValueError(f"ZC root must satisfy 0 < root < length, got root={root}, length={length}")
    if math.gcd(root, length) != 1:
        raise ValueError(f"ZC root {root} is not coprime with length {length}")
    n = np.arange(length, dtype=np.int64)
    # reduce the exponent modulo 2N in exact integer arithmetic before scaling
    phase_num = (root * n * (n + 1)) % (2 * length)
    values = np.exp(-1j * np.pi * phase_num / length)
    return ZcSequence(root, length, values)


def _bin_map(cfg: SounderConfig) -> np.ndarray:
    return subcarrier_bins(cfg.zc_length, cfg.fft_size)


def subcarrier_bins(n_subcarriers: int, fft_size: int) -> np.ndarray:
    """FFT bin of each occupied subcarrier, lowest frequency first."""
    half = (n_subcarriers - 1) // 2
    return np.mod(np.arange(-half, n_subcarriers - half), fft_size)


def ofdm_modulate(symbol_values, cfg: SounderConfig, power_ref_dbm: float = 0.0) -> ComplexBaseband:
    """Map ``zc_length`` values onto subcarriers around DC and inverse-transform one period."""
    sym = np.asarray(symbol_values, dtype=complex)
    if sym.shape != (cfg.zc_length,):
        raise ValueError(f"expected {cfg.zc_length} subcarrier values, got shape {sym.shape}")
    if cfg.zc_length > cfg.fft_size:
        raise ValueError("zc_length exceeds fft_size")
    spectrum = np.zeros(cfg.fft_size, dtype=complex)
    spectrum[_bin_map(cfg)] = sym
    return ComplexBaseband(np.fft.ifft(spectrum), cfg.sample_rate, power_ref_dbm)


def ofdm_demodulate(period_samples, cfg: SounderConfig) -> np.ndarray:
    """Inverse of :func:`ofdm_modulate` for one fft_size-long period."""
    x = np.asarray(period_samples, dtype=complex)
    if x.shape[-1] != cfg.fft_size:
        raise ValueError(f"expected periods of {cfg.fft_size} samples, got {x.shape[-1]}")
    return np.fft.fft(x, axis=-1)[..., _bin_map(cfg)]


def _frame_from_reference(fft_size, repetitions, sample_rate, zc_values, reference, power_ref_dbm):
    spectrum = np.zeros(fft_size, dtype=complex)
    spectrum[subcarrier_bins(len(reference), fft_size)] = reference
    samples = np.tile(np.fft.ifft(spectrum), repetitions)
    return TxFrame(
        ComplexBaseband(samples, sample_rate, power_ref_dbm), repetitions, zc_values, reference
    )


def build_sounding_frame(cfg: SounderConfig, root: int = 1) -> TxFrame:
    """Back-to-back repetitions of the OFDM-mapped ZC symbol at ``cfg.tx_eirp``."""
    if cfg.zc_length > cfg.fft_size:
        raise ValueError("zc_length exceeds fft_size")
    zc = zc_generate(root, cfg.zc_length)
    return _frame_from_reference(
        cfg.fft_size, cfg.n_repetitions, cfg.sample_rate, zc.values, zc.values.copy(), cfg.tx_eirp
    )


def apply_tx_coefficients(frame: TxFrame, coeffs) -> TxFrame:
    """Pre-distort the transmitted subcarriers by ``coeffs`` and re-modulate."""
    c = np.asarray(coeffs, dtype=complex)
    if c.shape != frame.freq_domain_reference.shape:
        raise ValueError(
            f"expected {frame.freq_domain_reference.shape[0]} coefficients, got shape {c.shape}"
        )
    if np.all(c == 1):
        return replace(frame)
    fft_size = len(frame.baseband) // frame.repetitions
    return _frame_from_reference(
        fft_size,
        frame.repetitions,
        frame.sample_rate,
        frame.zc,
        frame.freq_domain_reference * c,
        frame.baseband.power_ref_dbm,
    )
