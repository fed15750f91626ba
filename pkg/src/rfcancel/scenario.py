"""Scenario configuration: YAML schema, validation, seed derivation.

A scenario file is a nested key-value document describing one complete
experiment: the transmit waveform, the analog chain models, the
canceller dimensions, the learning parameters, and the evaluation
settings. All physical quantities carry a unit suffix in their key names
(``_hz``, ``_db``, ``_dbm``).

Seeds: every random component draws from a seed derived deterministically
from ``master_seed`` as ``SeedSequence([master_seed, index])`` with a
fixed per-component index, so a config plus master seed pins the entire
experiment bit for bit. Training and evaluation use different indices by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .basis import METHOD_EIGEN, METHODS
from .errors import ConfigurationError
from .learning import LearningConfig
from .rf_chain import (
    AuxChain,
    CouplingChannel,
    LNAModel,
    NoiseParams,
    PHModel,
    RxComposition,
    load_taps,
    rx_thermal_density,
    total_tx_induced_noise,
)
from .signal_gen import WaveformSpec
from .units import dbm_to_watts, watts_to_dbm

# Component indices of the documented seed-splitting rule.
_SEED_COMPONENTS = {
    "waveform-train": 0,
    "waveform-eval": 1,
    "noise-train": 2,
    "noise-eval": 3,
    "probe": 4,
    "noise-probe": 5,
}


def component_seed(master_seed: int, component: str) -> int:
    """64-bit seed for one named component of a scenario."""
    try:
        index = _SEED_COMPONENTS[component]
    except KeyError:
        raise ConfigurationError(f"unknown seed component {component!r}") from None
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class CancellerSettings:
    """Canceller dimensions: highest basis order, taps per order, the
    orthogonalization method, and the relative delay (None = estimate it
    during calibration)."""

    max_order: int
    filter_length: int
    orth_method: str = METHOD_EIGEN
    delay: Optional[int] = None

    def __post_init__(self):
        if self.max_order < 1 or self.max_order % 2 == 0:
            raise ConfigurationError("canceller max_order must be odd and >= 1")
        if self.filter_length < 1:
            raise ConfigurationError("canceller filter_length must be >= 1")
        if self.orth_method not in METHODS:
            raise ConfigurationError(f"orth_method must be one of {METHODS}")
        if self.delay is not None and self.delay < 0:
            raise ConfigurationError("canceller delay must be >= 0")


@dataclass(frozen=True)
class EvalSettings:
    """Held-out evaluation: record length and PSD estimator settings."""

    num_samples: int = 131072
    psd_segment_length: int = 4096
    psd_overlap: float = 0.5

    def __post_init__(self):
        if self.num_samples < self.psd_segment_length:
            raise ConfigurationError("eval num_samples must cover one PSD segment")
        if not 0.0 <= self.psd_overlap <= 0.9:
            raise ConfigurationError("psd_overlap must be within [0, 0.9]")


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one cancellation experiment."""

    waveform: WaveformSpec
    tx_power_dbm: float
    pa: PHModel
    channel: CouplingChannel
    lna: LNAModel
    aux: AuxChain
    noise_main: NoiseParams
    noise_aux: NoiseParams
    rx: RxComposition
    canceller: CancellerSettings
    learning: LearningConfig
    eval: EvalSettings
    output_dir: Path
    master_seed: int
    path_delay_samples: int = 0
    inject_tx_noise: bool = False
    papr_iterations: int = 10

    def __post_init__(self):
        if self.path_delay_samples < 0:
            raise ConfigurationError("path_delay_samples must be >= 0")
        if self.papr_iterations < 0:
            raise ConfigurationError("papr_iterations must be >= 0")
        dim = ((self.canceller.max_order + 1) // 2) * self.canceller.filter_length
        if self.learning.block_size < dim:
            raise ConfigurationError(
                f"block_size {self.learning.block_size} is below the coefficient "
                f"count {dim}"
            )
        if component_seed(self.master_seed, "waveform-train") == component_seed(
            self.master_seed, "waveform-eval"
        ):
            raise ConfigurationError("training and evaluation seeds must differ")

    def rx_noise_density(self) -> float:
        """Receive-plane white noise density in dBm/Hz used in the
        simulation: the RX thermal floor, plus the analytic TX-induced
        noise when its injection is enabled."""
        density = rx_thermal_density(self.noise_main)
        if self.inject_tx_noise:
            budget = total_tx_induced_noise(self.noise_main, self.noise_aux)
            density = watts_to_dbm(
                dbm_to_watts(density) + dbm_to_watts(budget.total_dbm_hz)
            )
        return density

    def occupied_band(self) -> tuple[float, float]:
        half = self.waveform.bandwidth_hz / 2.0
        return (-half, half)

    def with_overrides(
        self,
        master_seed: Optional[int] = None,
        output_dir: Optional[Path] = None,
        **fields,
    ) -> "ScenarioConfig":
        updates = dict(fields)
        if master_seed is not None:
            updates["master_seed"] = master_seed
        if output_dir is not None:
            updates["output_dir"] = Path(output_dir)
        return replace(self, **updates)


def _require(section: dict, key: str, context: str):
    if key not in section:
        raise ConfigurationError(f"missing {context} key {key!r}")
    return section[key]


def _section(doc: dict, name: str) -> dict:
    value = _require(doc, name, "scenario")
    if not isinstance(value, dict):
        raise ConfigurationError(f"scenario section {name!r} must be a mapping")
    return value


def _complex_taps(raw, context: str) -> np.ndarray:
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{context}: taps must be [re, im] pairs") from exc
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ConfigurationError(f"{context}: taps must be a non-empty list of [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def _load_pa(section: dict, base_dir: Path) -> PHModel:
    if "taps_file" in section and section["taps_file"]:
        raise ConfigurationError(
            "pa.taps_file holds a single filter; use branches with per-order files"
        )
    branches_raw = _require(section, "branches", "pa")
    if not isinstance(branches_raw, dict) or not branches_raw:
        raise ConfigurationError("pa.branches must map odd orders to tap lists")
    branches = {}
    for order, taps in branches_raw.items():
        try:
            order = int(order)
        except (TypeError, ValueError):
            raise ConfigurationError(f"pa branch order {order!r} is not an integer") from None
        if isinstance(taps, str):
            branches[order] = load_taps(base_dir / taps)
        else:
            branches[order] = _complex_taps(taps, f"pa branch {order}")
    return PHModel(branches)


def _load_channel(section: dict, base_dir: Path) -> CouplingChannel:
    description = section.get("description", "custom")
    if "taps" in section:
        return CouplingChannel(_complex_taps(section["taps"], "channel"), description)
    if "taps_file" in section:
        return CouplingChannel(load_taps(base_dir / section["taps_file"]), description)
    kind = section.get("type", "exponential")
    if kind == "flat":
        return CouplingChannel.flat(
            _require(section, "isolation_db", "channel"), description
        )
    if kind != "exponential":
        raise ConfigurationError(f"unknown channel type {kind!r}")
    return CouplingChannel.exponential(
        isolation_db=_require(section, "isolation_db", "channel"),
        num_taps=int(section.get("num_taps", 5)),
        decay_db_per_tap=float(section.get("decay_db_per_tap", 3.0)),
        description=description,
        seed=section.get("seed"),
    )


def _load_aux(section: dict, base_dir: Path) -> AuxChain:
    gain = float(section.get("gain_db", 0.0))
    if "taps" in section:
        return AuxChain(_complex_taps(section["taps"], "aux"), gain)
    if "taps_file" in section:
        return AuxChain(load_taps(base_dir / section["taps_file"]), gain)
    return AuxChain(np.array([1.0 + 0j]), gain)


def _load_noise(section: dict, channel_isolation_db: float):
    common = dict(
        thermal_density_dbm_hz=float(section.get("thermal_density_dbm_hz", -174.0)),
        rx_noise_figure_db=float(_require(section, "rx_noise_figure_db", "noise")),
        dac_bits=int(_require(section, "dac_bits", "noise")),
        dac_avg_power_dbm=float(_require(section, "dac_avg_power_dbm", "noise")),
        papr_db=float(_require(section, "papr_db", "noise")),
        dac_sample_rate_hz=float(_require(section, "dac_sample_rate_hz", "noise")),
        coupler_factor_db=float(section.get("coupler_factor_db", -15.0)),
        passive_isolation_db=float(
            section.get("passive_isolation_db", channel_isolation_db)
        ),
    )
    main = NoiseParams(
        tx_noise_figure_db=float(_require(section, "main_tx_noise_figure_db", "noise")),
        tx_gain_db=float(_require(section, "main_tx_gain_db", "noise")),
        **common,
    )
    aux = NoiseParams(
        tx_noise_figure_db=float(_require(section, "aux_tx_noise_figure_db", "noise")),
        tx_gain_db=float(_require(section, "aux_tx_gain_db", "noise")),
        **common,
    )
    return main, aux, bool(section.get("inject_tx_noise", False))


def load_scenario(path) -> ScenarioConfig:
    """Parse and validate a scenario YAML file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"scenario file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: scenario must be a mapping")
    base_dir = path.parent

    wf = _section(doc, "waveform")
    master_seed = int(_require(doc, "master_seed", "scenario"))
    waveform = WaveformSpec(
        bandwidth_hz=float(_require(wf, "bandwidth_hz", "waveform")),
        sample_rate_hz=float(_require(wf, "sample_rate_hz", "waveform")),
        num_subcarriers=int(_require(wf, "num_subcarriers", "waveform")),
        constellation=str(_require(wf, "constellation", "waveform")),
        target_papr_db=float(_require(wf, "target_papr_db", "waveform")),
        # Placeholder length/seed; the runner sizes streams per use.
        num_samples=int(wf.get("num_samples", 1)),
        seed=component_seed(master_seed, "waveform-train"),
    )

    channel = _load_channel(_section(doc, "channel"), base_dir)
    iso_db = -10.0 * math.log10(
        float(np.sum(np.abs(channel.impulse_response) ** 2))
    )
    noise_main, noise_aux, inject = _load_noise(_section(doc, "noise"), iso_db)

    lna_section = _section(doc, "lna")
    iip3 = lna_section.get("iip3_dbm", "inf")
    lna = LNAModel(
        gain_db=float(_require(lna_section, "gain_db", "lna")),
        iip3_dbm=math.inf if iip3 in ("inf", None) else float(iip3),
    )

    canc = _section(doc, "canceller")
    delay_raw = canc.get("delay", "auto")
    delay = None if delay_raw in ("auto", None) else int(delay_raw)
    settings = CancellerSettings(
        max_order=int(_require(canc, "max_order", "canceller")),
        filter_length=int(_require(canc, "filter_length", "canceller")),
        orth_method=str(canc.get("orth_method", METHOD_EIGEN)),
        delay=delay,
    )

    learn = _section(doc, "learning")
    step_raw = learn.get("step_size", "auto")
    learning = LearningConfig(
        block_size=int(_require(learn, "block_size", "learning")),
        num_blocks=int(_require(learn, "num_blocks", "learning")),
        step_size=None if step_raw in ("auto", None) else float(step_raw),
        auto_fraction=float(learn.get("auto_fraction", 0.1)),
    )

    eval_section = doc.get("eval", {})
    if not isinstance(eval_section, dict):
        raise ConfigurationError("eval section must be a mapping")
    eval_settings = EvalSettings(
        num_samples=int(eval_section.get("num_samples", 131072)),
        psd_segment_length=int(eval_section.get("psd_segment_length", 4096)),
        psd_overlap=float(eval_section.get("psd_overlap", 0.5)),
    )

    rx_section = doc.get("rx", {}) or {}
    rx = RxComposition(duplex_offset=float(rx_section.get("duplex_offset", 0.0)))

    return ScenarioConfig(
        waveform=waveform,
        tx_power_dbm=float(_require(doc, "tx_power_dbm", "scenario")),
        pa=_load_pa(_section(doc, "pa"), base_dir),
        channel=channel,
        lna=lna,
        aux=_load_aux(doc.get("aux", {}) or {}, base_dir),
        noise_main=noise_main,
        noise_aux=noise_aux,
        rx=rx,
        canceller=settings,
        learning=learning,
        eval=eval_settings,
        output_dir=Path(doc.get("output_dir", "out")),
        master_seed=master_seed,
        path_delay_samples=int(doc.get("path_delay_samples", 0)),
        inject_tx_noise=inject,
        papr_iterations=int(doc.get("papr_iterations", 10)),
    )
