"""Spectral estimation, cancellation metrics, and the complexity
calculator.

PSD densities are reported in dBm/Hz with the package-wide power
convention (|sample|^2 = watts, 0 dBm = 1 mW). The Welch estimator is
normalized so that integrating the density over frequency recovers the
total signal power.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .basis import METHOD_EIGEN, METHOD_QR, METHODS
from .errors import ConfigurationError, InputError
from .signal_gen import ComplexSignal
from .units import dbm_to_watts, watts_to_dbm

WELCH_SEGMENT_DEFAULT = 4096
WELCH_OVERLAP_DEFAULT = 0.5


@dataclass(frozen=True)
class PsdEstimate:
    """Two-sided baseband PSD on a uniform frequency grid."""

    frequencies_hz: np.ndarray
    density_dbm_hz: np.ndarray
    resolution_bandwidth_hz: float

    def __post_init__(self):
        f = np.asarray(self.frequencies_hz, dtype=float)
        d = np.asarray(self.density_dbm_hz, dtype=float)
        object.__setattr__(self, "frequencies_hz", f)
        object.__setattr__(self, "density_dbm_hz", d)
        if f.size != d.size or f.size < 2:
            raise InputError("PSD needs matching frequency and density grids")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(d))):
            raise InputError("PSD grid and density must be finite")
        steps = np.diff(f)
        if not np.allclose(steps, steps[0]):
            raise InputError("PSD frequency grid must be uniform")

    @property
    def bin_width_hz(self) -> float:
        return float(self.frequencies_hz[1] - self.frequencies_hz[0])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["freq_hz", "dbm_per_hz"])
            for f, d in zip(self.frequencies_hz, self.density_dbm_hz):
                writer.writerow([f"{f:.6f}", f"{d:.6f}"])


@dataclass(frozen=True)
class ComplexityReport:
    """FLOP accounting of the regeneration and learning stages.

    Per-sample counts are exact integers; the rate- and block-scaled
    figures are derived from them.
    """

    max_order: int
    filter_length: int
    block_size: int
    num_blocks: int
    sample_rate_hz: float
    orth_method: str
    basis_gen_flop_per_sample: int
    orth_flop_per_sample: int
    filtering_flop_per_sample: int
    learning_flop: int

    @property
    def total_flop_per_sample(self) -> int:
        return (
            self.basis_gen_flop_per_sample
            + self.orth_flop_per_sample
            + self.filtering_flop_per_sample
        )

    @property
    def regen_gflops(self) -> float:
        return self.total_flop_per_sample * self.sample_rate_hz / 1e9

    @property
    def learning_mflop(self) -> float:
        return self.learning_flop / 1e6


def _hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def welch_psd(
    x: ComplexSignal,
    segment_length: int = WELCH_SEGMENT_DEFAULT,
    overlap_fraction: float = WELCH_OVERLAP_DEFAULT,
) -> PsdEstimate:
    """Averaged modified periodogram with a cosine-taper (Hann) window.

    Density is scaled so that the integral over the grid equals the mean
    signal power, i.e. density = |FFT|^2 / (fs * sum(w^2)) averaged over
    segments, reported in dBm/Hz on an fftshifted grid.
    """
    if segment_length < 2:
        raise InputError("segment_length must be >= 2")
    if segment_length > len(x):
        raise InputError(
            f"segment_length {segment_length} exceeds signal length {len(x)}"
        )
    if not 0.0 <= overlap_fraction <= 0.9:
        raise InputError("overlap_fraction must be within [0, 0.9]")

    window = _hann(segment_length)
    step = max(1, int(round(segment_length * (1.0 - overlap_fraction))))
    samples = x.samples
    num_segments = 1 + (samples.size - segment_length) // step

    acc = np.zeros(segment_length)
    for k in range(num_segments):
        seg = samples[k * step: k * step + segment_length] * window
        acc += np.abs(np.fft.fft(seg)) ** 2
    scale = x.sample_rate_hz * np.sum(window**2)
    density_w_hz = np.fft.fftshift(acc / (num_segments * scale))
    # Keep the dB grid finite: floor empty bins far below any physical level.
    density_w_hz = np.maximum(density_w_hz, 1e-30)

    freqs = np.fft.fftshift(np.fft.fftfreq(segment_length, d=1.0 / x.sample_rate_hz))
    density_dbm = 10.0 * np.log10(density_w_hz / 1e-3)
    enbw = x.sample_rate_hz * np.sum(window**2) / np.sum(window) ** 2
    return PsdEstimate(freqs, density_dbm, enbw)


def band_power(psd: PsdEstimate, f_lo: float, f_hi: float) -> float:
    """Integrated power over [f_lo, f_hi] in dBm."""
    if f_lo >= f_hi:
        raise InputError("f_lo must be below f_hi")
    half_bin = psd.bin_width_hz / 2.0
    grid_lo = psd.frequencies_hz[0] - half_bin
    grid_hi = psd.frequencies_hz[-1] + half_bin
    if f_lo < grid_lo - 1e-9 or f_hi > grid_hi + 1e-9:
        raise InputError(
            f"band [{f_lo}, {f_hi}] falls outside the PSD grid "
            f"[{grid_lo}, {grid_hi}]"
        )
    mask = (psd.frequencies_hz >= f_lo) & (psd.frequencies_hz <= f_hi)
    if not np.any(mask):
        raise InputError("band does not cover any PSD bin")
    watts = np.sum(dbm_to_watts(psd.density_dbm_hz[mask])) * psd.bin_width_hz
    return watts_to_dbm(watts)


def cancellation_gain(
    before: ComplexSignal,
    after: ComplexSignal,
    band: tuple[float, float],
    segment_length: int = WELCH_SEGMENT_DEFAULT,
    overlap_fraction: float = WELCH_OVERLAP_DEFAULT,
) -> float:
    """In-band power reduction (dB) between two signals."""
    if before.sample_rate_hz != after.sample_rate_hz:
        raise InputError("before/after signals must share a sample rate")
    f_lo, f_hi = band
    p_before = band_power(welch_psd(before, segment_length, overlap_fraction), f_lo, f_hi)
    p_after = band_power(welch_psd(after, segment_length, overlap_fraction), f_lo, f_hi)
    return p_before - p_after


def complexity_report(
    max_order: int,
    filter_memory: int,
    block_size: int,
    num_blocks: int,
    sample_rate_hz: float,
    orth_method: str = METHOD_EIGEN,
) -> ComplexityReport:
    """FLOP counts of regeneration and learning.

    Per processed sample: basis generation costs P+2; orthogonalization
    costs (P+1)^2 + 2(P+1) (QR-based transform) or 2(P+1)^2 (covariance
    eigen-based transform); filtering costs 4(P+1)(N+1) - 2. The learning
    stage costs B(P+1)(N+1)(4M+1) FLOP in total for B blocks of M
    samples. The transform itself is assumed precomputed.
    """
    if max_order < 1 or max_order % 2 == 0:
        raise ConfigurationError("max_order must be odd and >= 1")
    if filter_memory < 0:
        raise ConfigurationError("filter_memory must be >= 0")
    if block_size < 1 or num_blocks < 1:
        raise ConfigurationError("block_size and num_blocks must be >= 1")
    if sample_rate_hz <= 0:
        raise ConfigurationError("sample_rate_hz must be positive")
    if orth_method not in METHODS:
        raise ConfigurationError(f"orth_method must be one of {METHODS}")

    p1 = max_order + 1
    n1 = filter_memory + 1
    if orth_method == METHOD_QR:
        orth = p1 * p1 + 2 * p1
    else:
        orth = 2 * p1 * p1
    return ComplexityReport(
        max_order=max_order,
        filter_length=n1,
        block_size=block_size,
        num_blocks=num_blocks,
        sample_rate_hz=sample_rate_hz,
        orth_method=orth_method,
        basis_gen_flop_per_sample=max_order + 2,
        orth_flop_per_sample=orth,
        filtering_flop_per_sample=4 * p1 * n1 - 2,
        learning_flop=num_blocks * p1 * n1 * (4 * block_size + 1),
    )
