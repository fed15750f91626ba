"""Multicarrier transmit waveform generation.

Produces OFDM-style multicarrier signals (continuous stream of IFFT
symbols, no cyclic prefix), iterative clipping-and-filtering PAPR
reduction, and frequency-interleaved probe pairs for delay calibration.

All generation is a pure function of (spec, seed): calling twice with the
same spec yields bit-identical sample streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, InputError
from .units import mean_power_watts

CONSTELLATIONS = ("QPSK", "QAM16", "QAM64")

# Default percentile for the peak in PAPR measurements; a hard max is too
# sensitive to single-sample outliers on long records.
PAPR_PERCENTILE = 99.9


@dataclass(frozen=True)
class WaveformSpec:
    """Parameters of a multicarrier transmit waveform.

    Attributes
    ----------
    bandwidth_hz : float
        Occupied (active subcarrier) bandwidth. Must be below the sample
        rate, i.e. the baseband signal is oversampled.
    sample_rate_hz : float
        Complex baseband sample rate.
    num_subcarriers : int
        Number of active subcarriers (>= 2).
    constellation : str
        One of ``QPSK``, ``QAM16``, ``QAM64``.
    target_papr_db : float
        PAPR target used when clipping is requested.
    num_samples : int
        Length of the generated stream.
    seed : int
        64-bit generation seed.
    """

    bandwidth_hz: float
    sample_rate_hz: float
    num_subcarriers: int
    constellation: str
    target_papr_db: float
    num_samples: int
    seed: int

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ConfigurationError("sample_rate_hz must be positive")
        if not 0 < self.bandwidth_hz < self.sample_rate_hz:
            raise ConfigurationError(
                "bandwidth_hz must be positive and below sample_rate_hz "
                f"(got {self.bandwidth_hz} vs {self.sample_rate_hz})"
            )
        if self.num_subcarriers < 2:
            raise ConfigurationError("num_subcarriers must be >= 2")
        if self.constellation not in CONSTELLATIONS:
            raise ConfigurationError(
                f"constellation must be one of {CONSTELLATIONS}, "
                f"got {self.constellation!r}"
            )
        if not self.target_papr_db > 0:
            raise ConfigurationError("target_papr_db must be > 0 dB")
        if self.num_samples <= 0:
            raise ConfigurationError("num_samples must be positive")


@dataclass(frozen=True)
class ComplexSignal:
    """Uniformly sampled complex baseband signal.

    Samples are in volts across a 1 ohm reference, so |sample|^2 is
    instantaneous power in watts.
    """

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise InputError("signal must be a non-empty 1-D sample sequence")
        if not np.all(np.isfinite(samples)):
            raise InputError("signal contains non-finite samples")
        if not self.sample_rate_hz > 0:
            raise InputError("sample_rate_hz must be positive")

    def __len__(self) -> int:
        return self.samples.size


def fft_grid_size(spec: WaveformSpec) -> int:
    """IFFT size placing ``num_subcarriers`` active tones inside the
    requested bandwidth (subcarrier spacing = sample_rate / fft_size)."""
    n = math.ceil(spec.num_subcarriers * spec.sample_rate_hz / spec.bandwidth_hz)
    return n + (n % 2)


def occupied_subcarriers(spec: WaveformSpec) -> np.ndarray:
    """Signed FFT-bin indices of the active subcarriers.

    An even count is placed symmetrically around (and excluding) DC; an
    odd count includes the DC bin.
    """
    k = spec.num_subcarriers
    if k % 2 == 0:
        half = k // 2
        bins = np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)])
    else:
        half = (k - 1) // 2
        bins = np.arange(-half, half + 1)
    return bins


def probe_subcarrier_split(spec: WaveformSpec) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint even/odd interleaving of the active subcarriers, used to
    build a pair of frequency-interleaved probe signals."""
    if spec.num_subcarriers % 2 != 0:
        raise ConfigurationError("probe pair generation requires an even subcarrier count")
    bins = occupied_subcarriers(spec)
    return bins[0::2], bins[1::2]


def _constellation_points(name: str) -> np.ndarray:
    if name == "QPSK":
        levels = np.array([-1.0, 1.0])
    elif name == "QAM16":
        levels = np.array([-3.0, -1.0, 1.0, 3.0])
    else:  # QAM64
        levels = np.arange(-7.0, 8.0, 2.0)
    points = (levels[:, None] + 1j * levels[None, :]).ravel()
    return points / np.sqrt(mean_power_watts(points))


def _ofdm_stream(
    spec: WaveformSpec, active_bins: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Concatenated IFFT symbols with QAM data on ``active_bins``,
    trimmed to ``spec.num_samples`` and normalized to unit mean power."""
    n_fft = fft_grid_size(spec)
    points = _constellation_points(spec.constellation)
    num_symbols = math.ceil(spec.num_samples / n_fft)

    out = np.empty(num_symbols * n_fft, dtype=np.complex128)
    grid = np.zeros(n_fft, dtype=np.complex128)
    for s in range(num_symbols):
        data = points[rng.integers(0, points.size, size=active_bins.size)]
        grid[:] = 0.0
        grid[active_bins] = data  # negative indices wrap per np.fft layout
        out[s * n_fft:(s + 1) * n_fft] = np.fft.ifft(grid) * n_fft
    out = out[: spec.num_samples]
    return out / np.sqrt(mean_power_watts(out))


def generate_multicarrier(spec: WaveformSpec) -> ComplexSignal:
    """Generate a multicarrier stream with unit mean power.

    The occupied band is ``num_subcarriers`` contiguous tones centered on
    DC, spanning the spec bandwidth. No PAPR reduction is applied here;
    use :func:`reduce_papr` for that.
    """
    rng = np.random.default_rng(spec.seed)
    samples = _ofdm_stream(spec, occupied_subcarriers(spec), rng)
    return ComplexSignal(samples, spec.sample_rate_hz)


def generate_probe_pair(spec: WaveformSpec) -> tuple[ComplexSignal, ComplexSignal]:
    """Two simultaneous probes on disjoint interleaved subcarrier sets.

    Probe A occupies the even-indexed active subcarriers and probe B the
    odd-indexed ones, so their frequency supports never overlap and each
    can be isolated from a composite observation by frequency masking.
    """
    bins_a, bins_b = probe_subcarrier_split(spec)
    seed_a, seed_b = np.random.SeedSequence(spec.seed).spawn(2)
    probe_a = _ofdm_stream(spec, bins_a, np.random.default_rng(seed_a))
    probe_b = _ofdm_stream(spec, bins_b, np.random.default_rng(seed_b))
    return (
        ComplexSignal(probe_a, spec.sample_rate_hz),
        ComplexSignal(probe_b, spec.sample_rate_hz),
    )


def measure_papr_db(x: ComplexSignal, percentile: float = PAPR_PERCENTILE) -> float:
    """Peak-to-average power ratio in dB.

    The peak is the given percentile of instantaneous power (99.9th by
    default) rather than the hard maximum.
    """
    power = np.abs(x.samples) ** 2
    mean = power.mean()
    if mean == 0:
        raise InputError("cannot measure PAPR of an all-zero signal")
    return 10.0 * np.log10(np.percentile(power, percentile) / mean)


def reduce_papr(
    x: ComplexSignal,
    target_papr_db: float,
    max_iterations: int,
    bandwidth_hz: float,
) -> ComplexSignal:
    """Iterative clipping and filtering to a PAPR target.

    Each iteration hard-clips the envelope to the target PAPR level, then
    masks the spectrum back to +-bandwidth/2 to remove the clipping
    splatter. The output is renormalized to the input mean power. Never
    increases the measured PAPR; if the input is already at or below the
    target it is returned unchanged.
    """
    if not target_papr_db > 0:
        raise ConfigurationError("target_papr_db must be > 0 dB")
    if max_iterations < 0:
        raise ConfigurationError("max_iterations must be >= 0")

    papr_in = measure_papr_db(x)
    if papr_in <= target_papr_db:
        return ComplexSignal(x.samples.copy(), x.sample_rate_hz)

    n = len(x)
    freqs = np.fft.fftfreq(n, d=1.0 / x.sample_rate_hz)
    in_band = np.abs(freqs) <= bandwidth_hz / 2.0
    power_in = mean_power_watts(x.samples)

    out = x.samples.copy()
    for _ in range(max_iterations):
        clip_amp = np.sqrt(power_in * 10.0 ** (target_papr_db / 10.0))
        mag = np.abs(out)
        over = mag > clip_amp
        if np.any(over):
            out[over] *= clip_amp / mag[over]
        spectrum = np.fft.fft(out)
        spectrum[~in_band] = 0.0
        out = np.fft.ifft(spectrum)
        out *= np.sqrt(power_in / mean_power_watts(out))
        if measure_papr_db(ComplexSignal(out, x.sample_rate_hz)) <= target_papr_db:
            break

    result = ComplexSignal(out, x.sample_rate_hz)
    if measure_papr_db(result) > papr_in:
        return ComplexSignal(x.samples.copy(), x.sample_rate_hz)
    return result


def isolate_probe(x: ComplexSignal, spec: WaveformSpec, which: str) -> ComplexSignal:
    """Frequency-mask a composite observation to one probe's support.

    Keeps the spectrum within half a subcarrier spacing of each of the
    chosen probe's subcarriers and zeroes the rest, separating the two
    interleaved probes of :func:`generate_probe_pair`.
    """
    bins_a, bins_b = probe_subcarrier_split(spec)
    if which not in ("a", "b"):
        raise InputError("which must be 'a' or 'b'")
    bins = bins_a if which == "a" else bins_b
    n_fft = fft_grid_size(spec)
    spacing = spec.sample_rate_hz / n_fft
    centers = bins * spacing

    n = len(x)
    freqs = np.fft.fftfreq(n, d=1.0 / x.sample_rate_hz)
    mask = np.zeros(n, dtype=bool)
    for f0 in centers:
        mask |= np.abs(freqs - f0) <= spacing / 2.0
    spectrum = np.fft.fft(x.samples)
    spectrum[~mask] = 0.0
    return ComplexSignal(np.fft.ifft(spectrum), x.sample_rate_hz)


def scaled_to_power(x: ComplexSignal, mean_power_w: float) -> ComplexSignal:
    """Copy of ``x`` rescaled to the given mean power in watts."""
    if mean_power_w <= 0:
        raise InputError("mean_power_w must be positive")
    gain = np.sqrt(mean_power_w / mean_power_watts(x.samples))
    return ComplexSignal(x.samples * gain, x.sample_rate_hz)


def training_spec(spec: WaveformSpec, num_samples: int, seed: int) -> WaveformSpec:
    """Same waveform family with a different length and seed."""
    return replace(spec, num_samples=num_samples, seed=seed)
