"""Scenario execution: calibration, learning, evaluation, CSV artifacts.

``run_scenario`` performs the full experiment for one config: estimate
the relative delay with a frequency-interleaved probe pair (unless the
config pins it), run the closed-loop learner twice (linear-only and the
configured nonlinear order), evaluate both cancellers on a held-out
waveform realization, and write the artifact CSVs. ``sweep`` repeats a
scenario over one swept parameter.

Artifacts are only written after the whole computation has succeeded, so
a failing run leaves no partial output behind.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analysis import ComplexityReport, PsdEstimate, band_power, complexity_report, welch_psd
from .basis import apply_orthogonalizer, basis_functions
from .canceller import CancellerState, combine, estimate_delay, regenerate
from .errors import ConfigurationError
from .learning import ConvergenceTrace, run_closed_loop, transmit_through_plant
from .rf_chain import aux_apply, rx_thermal_density, total_tx_induced_noise
from .scenario import ScenarioConfig, component_seed, load_scenario
from .signal_gen import (
    ComplexSignal,
    generate_multicarrier,
    generate_probe_pair,
    isolate_probe,
    reduce_papr,
    scaled_to_power,
)
from .units import dbm_to_watts, mean_power_dbm, watts_to_dbm

SWEEPABLE = ("tx_power_dbm", "passive_isolation_db", "bandwidth_hz")

_CALIBRATION_SAMPLES = 32768
_CALIBRATION_MAX_LAG = 512
# The correlation peak of a band-limited probe through a multi-tap channel
# sits a few samples past the bulk path delay; backing the estimate off
# keeps the learned filter causal and lets its taps absorb the slack.
_CALIBRATION_BACKOFF = 3


@dataclass
class CancellerOutcome:
    """Evaluation of one trained canceller on the held-out realization."""

    label: str
    state: CancellerState
    trace: ConvergenceTrace
    residual: ComplexSignal
    residual_power_dbm: float
    gain_db: float
    total_isolation_db: float
    complexity: ComplexityReport


@dataclass
class ScenarioResult:
    """Everything run_scenario computed, before/after artifacts included."""

    scenario: ScenarioConfig
    delay: int
    leakage_before: ComplexSignal
    leakage_power_dbm: float
    noise_floor_dbm: float
    linear: CancellerOutcome
    nonlinear: CancellerOutcome
    psd_before: PsdEstimate
    psd_after_linear: PsdEstimate
    psd_after_nonlinear: PsdEstimate


def calibrate_delay(scenario: ScenarioConfig) -> int:
    """Estimate the bulk delay between the leakage path and the auxiliary
    path from a simultaneously transmitted frequency-interleaved probe
    pair, as during the offline calibration phase.

    Probe A rides the main chain (PA, coupling, path delay), probe B the
    auxiliary chain; the composite is observed at the LNA input, each
    branch is isolated by its frequency mask, and the two delays are
    estimated by cross-correlation. Returns their difference, clamped to
    zero.
    """
    spec = replace(
        scenario.waveform,
        num_samples=_CALIBRATION_SAMPLES,
        seed=component_seed(scenario.master_seed, "probe"),
    )
    probe_a, probe_b = generate_probe_pair(spec)
    probe_a = scaled_to_power(probe_a, dbm_to_watts(scenario.tx_power_dbm))
    rx_main = transmit_through_plant(
        scenario, probe_a, noise_seed=component_seed(scenario.master_seed, "noise-probe")
    )
    rx_aux = aux_apply(scenario.aux, probe_b)
    composite = ComplexSignal(rx_main.samples + rx_aux.samples, rx_main.sample_rate_hz)

    obs_a = isolate_probe(composite, spec, "a")
    obs_b = isolate_probe(composite, spec, "b")
    delay_main = estimate_delay(obs_a, probe_a, _CALIBRATION_MAX_LAG)
    delay_aux = estimate_delay(obs_b, probe_b, _CALIBRATION_MAX_LAG)
    return max(0, delay_main - delay_aux)


def _resolved(scenario: ScenarioConfig) -> tuple[ScenarioConfig, int]:
    delay = scenario.canceller.delay
    if delay is None:
        delay = calibrate_delay(scenario)
        scenario = scenario.with_overrides(
            canceller=replace(scenario.canceller, delay=delay)
        )
    return scenario, delay


def _eval_plant(scenario: ScenarioConfig) -> tuple[ComplexSignal, ComplexSignal]:
    """Held-out transmit stream and the received signal it produces."""
    spec = replace(
        scenario.waveform,
        num_samples=scenario.eval.num_samples,
        seed=component_seed(scenario.master_seed, "waveform-eval"),
    )
    x = generate_multicarrier(spec)
    x = reduce_papr(x, spec.target_papr_db, scenario.papr_iterations, spec.bandwidth_hz)
    x = scaled_to_power(x, dbm_to_watts(scenario.tx_power_dbm))
    rx = transmit_through_plant(
        scenario, x, noise_seed=component_seed(scenario.master_seed, "noise-eval")
    )
    return x, rx


def evaluate_state(
    scenario: ScenarioConfig,
    state: CancellerState,
    x_eval: ComplexSignal,
    rx_eval: ComplexSignal,
) -> ComplexSignal:
    """Combiner output on the held-out realization under fixed
    coefficients (the canceller's own regeneration path, not the
    learner's block matrices)."""
    raw = basis_functions(x_eval, state.max_order).delayed(state.delay)
    psi = apply_orthogonalizer(state.orthogonalizer, raw)
    canc = regenerate(state, psi)
    return combine(rx_eval, canc, scenario.aux)


def _train_and_evaluate(
    scenario: ScenarioConfig,
    label: str,
    x_eval: ComplexSignal,
    rx_eval: ComplexSignal,
    leak_power_dbm: float,
) -> CancellerOutcome:
    state, trace = run_closed_loop(scenario)
    residual = evaluate_state(scenario, state, x_eval, rx_eval)
    f_lo, f_hi = scenario.occupied_band()
    seg = min(scenario.eval.psd_segment_length, len(residual))
    gain = band_power(
        welch_psd(rx_eval, seg, scenario.eval.psd_overlap), f_lo, f_hi
    ) - band_power(welch_psd(residual, seg, scenario.eval.psd_overlap), f_lo, f_hi)
    iso_db = scenario.noise_main.passive_isolation_db + gain
    report = complexity_report(
        max_order=scenario.canceller.max_order,
        filter_memory=scenario.canceller.filter_length - 1,
        block_size=scenario.learning.block_size,
        num_blocks=scenario.learning.num_blocks,
        sample_rate_hz=scenario.waveform.sample_rate_hz,
        orth_method=scenario.canceller.orth_method,
    )
    return CancellerOutcome(
        label=label,
        state=state,
        trace=trace,
        residual=residual,
        residual_power_dbm=leak_power_dbm - gain,
        gain_db=gain,
        total_isolation_db=iso_db,
        complexity=report,
    )


def run(scenario: ScenarioConfig) -> ScenarioResult:
    """Execute one scenario end to end (no artifact writing)."""
    scenario, delay = _resolved(scenario)
    x_eval, rx_eval = _eval_plant(scenario)
    f_lo, f_hi = scenario.occupied_band()
    seg = min(scenario.eval.psd_segment_length, len(rx_eval))
    leak_power_dbm = band_power(
        welch_psd(rx_eval, seg, scenario.eval.psd_overlap), f_lo, f_hi
    )
    noise_floor_dbm = scenario.rx_noise_density() + 10.0 * math.log10(f_hi - f_lo)

    linear_scenario = scenario.with_overrides(
        canceller=replace(scenario.canceller, max_order=1)
    )
    linear = _train_and_evaluate(linear_scenario, "linear", x_eval, rx_eval, leak_power_dbm)
    nonlinear = _train_and_evaluate(scenario, "nonlinear", x_eval, rx_eval, leak_power_dbm)

    overlap = scenario.eval.psd_overlap
    return ScenarioResult(
        scenario=scenario,
        delay=delay,
        leakage_before=rx_eval,
        leakage_power_dbm=leak_power_dbm,
        noise_floor_dbm=noise_floor_dbm,
        linear=linear,
        nonlinear=nonlinear,
        psd_before=welch_psd(rx_eval, seg, overlap),
        psd_after_linear=welch_psd(linear.residual, seg, overlap),
        psd_after_nonlinear=welch_psd(nonlinear.residual, seg, overlap),
    )


def _write_summary(path: Path, result: ScenarioResult) -> None:
    rows = [
        ("none", result.leakage_power_dbm, 0.0,
         result.scenario.noise_main.passive_isolation_db, 0.0, 0.0),
    ]
    for outcome in (result.linear, result.nonlinear):
        rows.append(
            (
                outcome.label,
                outcome.residual_power_dbm,
                outcome.gain_db,
                outcome.total_isolation_db,
                outcome.complexity.regen_gflops,
                outcome.complexity.learning_mflop,
            )
        )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "canceller",
                "leakage_power_dbm",
                "cancellation_gain_db",
                "total_isolation_db",
                "regen_gflops",
                "learning_mflop",
            ]
        )
        for label, power, gain, iso, gflops, mflop in rows:
            writer.writerow(
                [label, f"{power:.4f}", f"{gain:.4f}", f"{iso:.4f}",
                 f"{gflops:.4f}", f"{mflop:.4f}"]
            )
        writer.writerow([])
        writer.writerow(["estimated_delay_samples", result.delay])
        writer.writerow(["noise_floor_dbm", f"{result.noise_floor_dbm:.4f}"])


def write_artifacts(result: ScenarioResult, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def _emit(name: str, action) -> None:
        target = out_dir / name
        action(target)
        written.append(target)

    _emit("convergence.csv", result.nonlinear.trace.to_csv)
    _emit("psd_before.csv", result.psd_before.to_csv)
    _emit("psd_after_linear.csv", result.psd_after_linear.to_csv)
    _emit("psd_after_nonlinear.csv", result.psd_after_nonlinear.to_csv)
    _emit("summary.csv", lambda p: _write_summary(p, result))
    return written


def run_scenario(
    config_path,
    output_dir: Optional[Path] = None,
    master_seed: Optional[int] = None,
) -> ScenarioResult:
    """Load, execute, and persist one scenario. Raises typed errors; the
    CLI maps them to exit codes."""
    scenario = load_scenario(config_path)
    scenario = scenario.with_overrides(master_seed=master_seed, output_dir=output_dir)
    result = run(scenario)
    write_artifacts(result, result.scenario.output_dir)
    return result


def _noise_sweep_rows(scenario: ScenarioConfig, values: Sequence[float]) -> list[dict]:
    """Noise budget against passive isolation, with the aux gain tracking
    the isolation so leakage and cancellation signal keep matched powers
    at the LNA input."""
    base_iso = scenario.noise_main.passive_isolation_db
    base_aux_gain = scenario.noise_aux.tx_gain_db
    rows = []
    for iso in values:
        main = replace(scenario.noise_main, passive_isolation_db=float(iso))
        aux = replace(
            scenario.noise_aux,
            passive_isolation_db=float(iso),
            tx_gain_db=base_aux_gain - (float(iso) - base_iso),
        )
        budget = total_tx_induced_noise(main, aux)
        rows.append(
            {
                "passive_isolation_db": float(iso),
                "main_noise_dbm_hz": budget.main_dbm_hz,
                "aux_noise_dbm_hz": budget.aux_dbm_hz,
                "total_noise_dbm_hz": budget.total_dbm_hz,
                "rx_thermal_dbm_hz": rx_thermal_density(main),
            }
        )
    return rows


def _gain_sweep_rows(
    scenario: ScenarioConfig, parameter: str, values: Sequence[float]
) -> list[dict]:
    rows = []
    for value in values:
        if parameter == "tx_power_dbm":
            point = scenario.with_overrides(tx_power_dbm=float(value))
        else:  # bandwidth_hz
            point = scenario.with_overrides(
                waveform=replace(scenario.waveform, bandwidth_hz=float(value))
            )
        result = run(point)
        rows.append(
            {
                parameter: float(value),
                "leakage_power_dbm": result.leakage_power_dbm,
                "linear_gain_db": result.linear.gain_db,
                "nonlinear_gain_db": result.nonlinear.gain_db,
                "linear_total_isolation_db": result.linear.total_isolation_db,
                "nonlinear_total_isolation_db": result.nonlinear.total_isolation_db,
            }
        )
    return rows


_SWEEP_FILES = {
    "tx_power_dbm": "isolation_vs_power.csv",
    "passive_isolation_db": "noise_vs_isolation.csv",
    "bandwidth_hz": "gain_vs_bandwidth.csv",
}


def sweep(
    config_path,
    parameter: str,
    values: Sequence[float],
    output_dir: Optional[Path] = None,
    master_seed: Optional[int] = None,
) -> Path:
    """Repeat a scenario over one parameter and write one summary row per
    value. Returns the path of the written CSV."""
    if parameter not in SWEEPABLE:
        raise ConfigurationError(
            f"unknown sweep parameter {parameter!r}; choose from {SWEEPABLE}"
        )
    values = list(values)
    if not values:
        raise ConfigurationError("sweep values must be a non-empty list")
    scenario = load_scenario(config_path)
    scenario = scenario.with_overrides(master_seed=master_seed, output_dir=output_dir)

    if parameter == "passive_isolation_db":
        rows = _noise_sweep_rows(scenario, values)
    else:
        rows = _gain_sweep_rows(scenario, parameter, values)

    out_dir = Path(scenario.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / _SWEEP_FILES[parameter]
    with open(target, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: f"{v:.4f}" for k, v in row.items()})
    return target
