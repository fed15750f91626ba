"""Baseband-equivalent models of the analog chain.

Covers the parallel-Hammerstein power amplifier, the passive coupling
channel between PA output and LNA input, the auxiliary transmitter
response, a memoryless third-order LNA, transmitter noise budget
arithmetic, and the composition of the total received signal at the LNA
input.

Convolutions are truncated to the input length (no tail growth), so every
"apply" returns a signal of the same length as its input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigurationError, InputError
from .signal_gen import ComplexSignal
from .units import db_to_amplitude, db_to_linear, dbm_to_watts, watts_to_dbm


def _as_taps(taps) -> np.ndarray:
    arr = np.asarray(taps, dtype=np.complex128).ravel()
    if arr.size == 0:
        raise ConfigurationError("filter must have at least one tap")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("filter taps must be finite")
    return arr


def _convolve_trunc(taps: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.convolve(x, taps)[: x.size]


@dataclass(frozen=True)
class PHModel:
    """Parallel-Hammerstein PA model: odd-order static nonlinearities,
    each followed by its own FIR branch filter.

    ``branch_filters`` maps odd order p (1, 3, ..., P) to the branch
    impulse response. The order-1 branch must be present.
    """

    branch_filters: dict[int, np.ndarray]

    def __post_init__(self):
        if not self.branch_filters:
            raise ConfigurationError("PHModel needs at least the order-1 branch")
        clean = {}
        for order, taps in self.branch_filters.items():
            if order < 1 or order % 2 == 0:
                raise ConfigurationError(f"PH branch orders must be odd, got {order}")
            clean[int(order)] = _as_taps(taps)
        if 1 not in clean:
            raise ConfigurationError("PHModel must include the order-1 branch")
        object.__setattr__(self, "branch_filters", clean)

    @property
    def max_order(self) -> int:
        return max(self.branch_filters)

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(sorted(self.branch_filters))

    @classmethod
    def linear(cls, taps=(1.0,)) -> "PHModel":
        return cls({1: np.asarray(taps)})


@dataclass(frozen=True)
class CouplingChannel:
    """Passive frequency-selective isolation path from PA output to LNA
    input. Passivity requires tap energy <= 1 (net loss)."""

    impulse_response: np.ndarray
    description: str = "custom"

    def __post_init__(self):
        taps = _as_taps(self.impulse_response)
        object.__setattr__(self, "impulse_response", taps)
        energy = float(np.sum(np.abs(taps) ** 2))
        if energy > 1.0 + 1e-12:
            raise ConfigurationError(
                f"passive channel must not amplify (tap energy {energy:.3g} > 1)"
            )

    @classmethod
    def exponential(
        cls,
        isolation_db: float,
        num_taps: int = 5,
        decay_db_per_tap: float = 3.0,
        description: str = "custom",
        seed: Optional[int] = None,
    ) -> "CouplingChannel":
        """Synthetic frequency-selective channel: exponentially decaying
        tap magnitudes normalized so total energy equals the isolation.

        With ``seed=None`` the tap phases follow a fixed golden-angle
        progression, so the channel is a deterministic function of its
        parameters.
        """
        if isolation_db < 0:
            raise ConfigurationError("isolation_db must be >= 0 for a passive channel")
        if num_taps < 1:
            raise ConfigurationError("num_taps must be >= 1")
        mags = db_to_amplitude(-decay_db_per_tap) ** np.arange(num_taps)
        if seed is None:
            phases = 2.0 * np.pi * 0.381966 * np.arange(num_taps) ** 2
        else:
            phases = np.random.default_rng(seed).uniform(0, 2 * np.pi, num_taps)
        taps = mags * np.exp(1j * phases)
        taps *= np.sqrt(db_to_linear(-isolation_db) / np.sum(np.abs(taps) ** 2))
        return cls(taps, description=description)

    @classmethod
    def flat(cls, isolation_db: float, description: str = "custom") -> "CouplingChannel":
        return cls(np.array([db_to_amplitude(-isolation_db)]), description=description)


@dataclass(frozen=True)
class LNAModel:
    """Memoryless third-order LNA: y = a1*x + a3*x|x|^2.

    a1 = 10^(gain/20); a3 = -(4/3)*a1/A^2 with A^2 = 2*IIP3_watts (the
    IIP3 figure is read in the peak-envelope power convention). An
    infinite IIP3 gives the pure linear amplifier.
    """

    gain_db: float
    iip3_dbm: float = math.inf

    def __post_init__(self):
        if not math.isfinite(self.gain_db):
            raise ConfigurationError("LNA gain must be finite")
        if math.isnan(self.iip3_dbm) or self.iip3_dbm == -math.inf:
            raise ConfigurationError("LNA IIP3 must be finite or +inf")

    @property
    def a1(self) -> float:
        return db_to_amplitude(self.gain_db)

    @property
    def a3(self) -> float:
        if self.iip3_dbm == math.inf:
            return 0.0
        amp_sq = 2.0 * dbm_to_watts(self.iip3_dbm)
        return -(4.0 / 3.0) * self.a1 / amp_sq


@dataclass(frozen=True)
class AuxChain:
    """Auxiliary transmitter branch: overall FIR response plus gain."""

    impulse_response: np.ndarray = field(default_factory=lambda: np.array([1.0 + 0j]))
    gain_db: float = 0.0

    def __post_init__(self):
        taps = _as_taps(self.impulse_response)
        object.__setattr__(self, "impulse_response", taps)
        if not math.isfinite(self.gain_db):
            raise ConfigurationError("aux gain must be finite")

    @property
    def effective_response(self) -> np.ndarray:
        return self.impulse_response * db_to_amplitude(self.gain_db)


@dataclass(frozen=True)
class NoiseParams:
    """Inputs of the transmitter noise budget.

    ``passive_isolation_db`` is the attenuation of the main-TX path (40
    means -40 dB of power) while ``coupler_factor_db`` is applied with its
    sign (-15 means -15 dB), matching how these are quoted for couplers.
    """

    tx_noise_figure_db: float
    tx_gain_db: float
    dac_bits: int
    dac_avg_power_dbm: float
    papr_db: float
    dac_sample_rate_hz: float
    thermal_density_dbm_hz: float = -174.0
    rx_noise_figure_db: float = 4.0
    coupler_factor_db: float = -15.0
    passive_isolation_db: float = 40.0

    def __post_init__(self):
        if not 4 <= self.dac_bits <= 24:
            raise ConfigurationError("dac_bits must be within [4, 24]")
        for name in (
            "tx_noise_figure_db",
            "tx_gain_db",
            "dac_avg_power_dbm",
            "papr_db",
            "thermal_density_dbm_hz",
            "rx_noise_figure_db",
            "coupler_factor_db",
            "passive_isolation_db",
        ):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")
        if not self.dac_sample_rate_hz > 0:
            raise ConfigurationError("dac_sample_rate_hz must be positive")


@dataclass(frozen=True)
class RxComposition:
    """Receive-side composition parameters: duplex offset of the desired
    signal and the (optional) desired signal itself."""

    duplex_offset: float = 0.0
    desired_signal: Optional[ComplexSignal] = None

    def __post_init__(self):
        if not abs(self.duplex_offset) <= np.pi:
            raise ConfigurationError("duplex_offset must be within [-pi, pi]")


class TxNoiseBudget(NamedTuple):
    """Receiver-input noise densities in dBm/Hz: total and the two
    addends (main TX after isolation, aux TX after coupler)."""

    total_dbm_hz: float
    main_dbm_hz: float
    aux_dbm_hz: float


def pa_apply(model: PHModel, x: ComplexSignal) -> ComplexSignal:
    """Parallel-Hammerstein PA output: sum over odd orders of the branch
    filter convolved with x[n]|x[n]|^(p-1)."""
    samples = x.samples
    out = np.zeros_like(samples)
    mag = np.abs(samples)
    for order, taps in model.branch_filters.items():
        out += _convolve_trunc(taps, samples * mag ** (order - 1))
    return ComplexSignal(out, x.sample_rate_hz)


def leakage(channel: CouplingChannel, pa_out: ComplexSignal) -> ComplexSignal:
    """TX leakage at the receiver input: coupling response applied to the
    PA output."""
    return ComplexSignal(
        _convolve_trunc(channel.impulse_response, pa_out.samples), pa_out.sample_rate_hz
    )


def aux_apply(aux: AuxChain, x: ComplexSignal) -> ComplexSignal:
    """Auxiliary transmitter response applied to the regenerated signal."""
    return ComplexSignal(
        _convolve_trunc(aux.effective_response, x.samples), x.sample_rate_hz
    )


def lna_apply(model: LNAModel, x: ComplexSignal) -> ComplexSignal:
    """Memoryless cubic LNA, sample-wise."""
    s = x.samples
    out = model.a1 * s
    if model.a3 != 0.0:
        out = out + model.a3 * s * np.abs(s) ** 2
    return ComplexSignal(out, x.sample_rate_hz)


def quantization_noise_density(params: NoiseParams) -> float:
    """DAC quantization noise density in dBm/Hz.

    Average DAC output power minus the DAC SNR, where the SNR combines the
    6.02 dB/bit law, the 4.76 dB full-scale sine offset, a PAPR backoff,
    and the oversampling processing gain 10*log10(fs/2).
    """
    snr_db = (
        6.02 * params.dac_bits
        + 4.76
        - params.papr_db
        + 10.0 * np.log10(params.dac_sample_rate_hz / 2.0)
    )
    return params.dac_avg_power_dbm - snr_db


def tx_noise_density(params: NoiseParams) -> float:
    """Total transmitter noise density at the TX output in dBm/Hz:
    gain * (noise_factor * thermal + quantization), summed on a linear
    scale."""
    thermal_w = dbm_to_watts(params.thermal_density_dbm_hz)
    quant_w = dbm_to_watts(quantization_noise_density(params))
    factor = db_to_linear(params.tx_noise_figure_db)
    gain = db_to_linear(params.tx_gain_db)
    return watts_to_dbm(gain * (factor * thermal_w + quant_w))


def total_tx_induced_noise(main: NoiseParams, aux: NoiseParams) -> TxNoiseBudget:
    """TX-induced noise density at the receiver input.

    Main TX noise attenuated by the passive isolation plus aux TX noise
    scaled by the coupler factor, combined on a linear scale. The two
    addends are returned separately for isolation sweeps.
    """
    main_w = dbm_to_watts(tx_noise_density(main)) * db_to_linear(
        -main.passive_isolation_db
    )
    aux_w = dbm_to_watts(tx_noise_density(aux)) * db_to_linear(aux.coupler_factor_db)
    return TxNoiseBudget(
        total_dbm_hz=watts_to_dbm(main_w + aux_w),
        main_dbm_hz=watts_to_dbm(main_w),
        aux_dbm_hz=watts_to_dbm(aux_w),
    )


def rx_thermal_density(params: NoiseParams) -> float:
    """Receiver thermal noise floor density in dBm/Hz."""
    return params.thermal_density_dbm_hz + params.rx_noise_figure_db


def compose_rx(
    leak: ComplexSignal,
    comp: RxComposition,
    noise_density_dbm_hz: float,
    seed: int = 0,
) -> ComplexSignal:
    """Total received signal at the LNA input.

    Desired signal shifted to the duplex offset, plus TX leakage, plus
    white circular complex Gaussian noise whose density over the full
    simulation bandwidth is ``noise_density_dbm_hz`` (-inf disables it).
    Noise is drawn deterministically from ``seed``.
    """
    out = leak.samples.copy()
    if comp.desired_signal is not None:
        desired = comp.desired_signal
        if desired.sample_rate_hz != leak.sample_rate_hz:
            raise InputError("desired signal sample rate must match the leakage")
        if len(desired) != len(leak):
            raise InputError("desired signal length must match the leakage")
        n = np.arange(len(leak))
        out += desired.samples * np.exp(1j * comp.duplex_offset * n)
    if noise_density_dbm_hz != -math.inf:
        power_w = dbm_to_watts(noise_density_dbm_hz) * leak.sample_rate_hz
        rng = np.random.default_rng(seed)
        scale = np.sqrt(power_w / 2.0)
        out += scale * (
            rng.standard_normal(len(leak)) + 1j * rng.standard_normal(len(leak))
        )
    return ComplexSignal(out, leak.sample_rate_hz)


def save_taps(path, taps: np.ndarray) -> None:
    """Write complex FIR taps as one "re im" pair per line."""
    taps = np.asarray(taps, dtype=np.complex128).ravel()
    with open(path, "w") as fh:
        for tap in taps:
            fh.write(f"{tap.real:.17g} {tap.imag:.17g}\n")


def load_taps(path) -> np.ndarray:
    """Read complex FIR taps written by :func:`save_taps`."""
    path = Path(path)
    taps = []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InputError(f"{path}:{line_no}: expected 're im', got {line!r}")
        taps.append(float(parts[0]) + 1j * float(parts[1]))
    if not taps:
        raise InputError(f"{path}: no taps found")
    return np.asarray(taps, dtype=np.complex128)
