"""Closed-loop block-adaptive estimation of the cancellation filters.

The learner observes the combiner output through the (possibly nonlinear)
LNA, correlates the observed residual with the orthogonalized basis
functions, and walks the aggregate filter coefficients against that
correlation. Because combining is additive, the update subtracts the
correlation:

    w <- w - mu * U^H e

which is exact complex-gradient descent on the block residual power
sum |e|^2 (for real-valued signals this coincides with the transposed
form e^H U of the correlation). Stability follows block-LMS theory: the
loop is stable for 0 < mu < 2 / (M * lambda_max(R)) with R the
correlation matrix of the aggregate filter input vector.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np

from .basis import BasisMatrix, apply_orthogonalizer, basis_functions, fit_orthogonalizer
from .canceller import CancellerState
from .errors import (
    ConfigurationError,
    DivergenceError,
    EstimationError,
    InputError,
    NumericError,
)
from .rf_chain import compose_rx, leakage, pa_apply, rx_thermal_density, total_tx_induced_noise
from .signal_gen import ComplexSignal, generate_multicarrier, reduce_papr, scaled_to_power
from .units import dbm_to_watts, watts_to_dbm

if TYPE_CHECKING:  # pragma: no cover
    from .scenario import ScenarioConfig

AUTO_FRACTION_DEFAULT = 0.1

# Residual growth (dB) across five consecutive blocks that trips the
# divergence detector.
_DIVERGENCE_WINDOW = 5
_DIVERGENCE_GROWTH_DB = 10.0


@dataclass(frozen=True)
class LearningConfig:
    """Block-adaptive learning parameters.

    ``step_size=None`` selects the automatic step size
    ``auto_fraction * 2 / (M * lambda_max)``, safely inside the stability
    region.
    """

    block_size: int
    num_blocks: int
    step_size: Optional[float] = None
    auto_fraction: float = AUTO_FRACTION_DEFAULT

    def __post_init__(self):
        if self.block_size < 1:
            raise ConfigurationError("block_size must be >= 1")
        if self.num_blocks < 1:
            raise ConfigurationError("num_blocks must be >= 1")
        if self.step_size is not None and not self.step_size > 0:
            raise ConfigurationError("explicit step_size must be > 0")
        if not 0 < self.auto_fraction <= 1:
            raise ConfigurationError("auto_fraction must be in (0, 1]")


@dataclass
class ConvergenceTrace:
    """Per-block learning telemetry (one entry per completed block)."""

    block_index: np.ndarray
    residual_dbm: np.ndarray
    update_norm: np.ndarray
    sample_power: Optional[np.ndarray] = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["block_index", "residual_dbm", "update_norm"])
            for i, res, upd in zip(self.block_index, self.residual_dbm, self.update_norm):
                writer.writerow([int(i), f"{res:.6f}", f"{upd:.9e}"])


def build_data_matrix(
    basis: BasisMatrix, state: CancellerState, block_start: int, num_rows: int
) -> np.ndarray:
    """Aggregate data matrix for one block.

    Row k concatenates, per order p, the filter input history
    [psi_p[n+k], psi_p[n+k-1], ..., psi_p[n+k-N]] with n the block start,
    so columns are grouped [order 1 | order 3 | ...].
    """
    if basis.num_orders != state.num_orders:
        raise InputError("basis order count does not match the canceller state")
    n_hist = state.filter_length - 1
    if block_start < n_hist:
        raise InputError(
            f"block start {block_start} leaves no room for {n_hist} history samples"
        )
    if block_start + num_rows > basis.block_length:
        raise InputError("block extends past the end of the basis")
    out = np.empty(
        (num_rows, basis.num_orders * state.filter_length), dtype=np.complex128
    )
    for i in range(basis.num_orders):
        col = basis.columns[:, i]
        for j in range(state.filter_length):
            out[:, i * state.filter_length + j] = col[
                block_start - j: block_start - j + num_rows
            ]
    return out


def decorrelation_update(
    state: CancellerState, u: np.ndarray, e: np.ndarray, mu: float
) -> CancellerState:
    """One block update: w <- w - mu * U^H e.

    ``e`` is the observed baseband error block (LNA output referred back
    to its input) under the current coefficients. The minus sign comes
    from the additive combining convention. Pure function: returns a new
    state, everything but the coefficients untouched.
    """
    u = np.asarray(u)
    e = np.asarray(e, dtype=np.complex128).ravel()
    if u.ndim != 2 or u.shape[0] != e.size:
        raise InputError(
            f"data matrix rows ({u.shape[0] if u.ndim == 2 else '?'}) must match "
            f"error length ({e.size})"
        )
    if u.shape[1] != state.coefficients.size:
        raise InputError("data matrix columns must match the coefficient count")
    if not np.all(np.isfinite(e)):
        raise NumericError("error block contains non-finite values")
    grad = u.conj().T @ e
    return state.with_coefficients(state.coefficients - mu * grad)


def _power_iteration(matrix: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of a Hermitian PSD matrix by power iteration."""
    d = matrix.shape[0]
    v = np.ones(d, dtype=np.complex128) + 1e-3j * np.arange(d)
    v /= np.linalg.norm(v)
    lam_prev = 0.0
    for _ in range(max_iter):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam = float(np.real(np.vdot(v, matrix @ v)))
        if abs(lam - lam_prev) <= tol * max(abs(lam), 1.0):
            return lam
        lam_prev = lam
    return lam_prev


def stability_bound(basis: BasisMatrix, state_dims: tuple[int, int], block_size: int) -> float:
    """Step-size stability bound 2 / (M * lambda_max(R)).

    R is the sample correlation matrix of the aggregate filter input
    vector (all orders, all tap lags) estimated over the given basis
    block; its largest eigenvalue comes from power iteration.
    """
    max_order, n_hist = state_dims
    num_orders = (max_order + 1) // 2
    if basis.num_orders != num_orders:
        raise InputError("basis order count does not match the requested dimensions")
    if block_size < 1:
        raise InputError("block_size must be >= 1")
    if not np.any(basis.columns):
        raise EstimationError("cannot estimate a stability bound from a zero basis")
    rows = basis.block_length - n_hist
    dim = num_orders * (n_hist + 1)
    if rows < dim:
        raise InputError("not enough samples to estimate the correlation matrix")
    probe = CancellerState.zeros(
        max_order, n_hist + 1, _identity_orth(num_orders), delay=0
    )
    u = build_data_matrix(basis, probe, n_hist, rows)
    corr = u.conj().T @ u / rows
    lam_max = _power_iteration(corr)
    if lam_max <= 0:
        raise EstimationError("correlation matrix has no positive eigenvalue")
    return 2.0 / (block_size * lam_max)


def _identity_orth(dim: int):
    from .basis import Orthogonalizer

    return Orthogonalizer.identity(dim)


@dataclass(frozen=True)
class LoopSetup:
    """Everything run_closed_loop needs after the plant is assembled:
    the receive stream at the LNA input, the delay-aligned orthogonalized
    basis of the known transmit data, and the block layout."""

    rx: ComplexSignal
    psi: BasisMatrix
    state: CancellerState
    margin: int
    lna_a1: float
    lna_a3: float
    aux_response: np.ndarray


def _training_stream(scenario: "ScenarioConfig", num_samples: int) -> tuple[ComplexSignal, ComplexSignal]:
    """Transmit waveform (PAPR-reduced, scaled to the TX power) and the
    resulting received signal at the LNA input, for the training seeds."""
    from .scenario import component_seed

    spec = replace(
        scenario.waveform,
        num_samples=num_samples,
        seed=component_seed(scenario.master_seed, "waveform-train"),
    )
    x = generate_multicarrier(spec)
    x = reduce_papr(x, spec.target_papr_db, scenario.papr_iterations, spec.bandwidth_hz)
    x = scaled_to_power(x, dbm_to_watts(scenario.tx_power_dbm))
    rx = transmit_through_plant(
        scenario, x, noise_seed=component_seed(scenario.master_seed, "noise-train")
    )
    return x, rx


def transmit_through_plant(
    scenario: "ScenarioConfig", x: ComplexSignal, noise_seed: int
) -> ComplexSignal:
    """PA, passive coupling, bulk path delay, and receive-side noise."""
    leak = leakage(scenario.channel, pa_apply(scenario.pa, x))
    if scenario.path_delay_samples:
        shifted = np.zeros_like(leak.samples)
        shifted[scenario.path_delay_samples:] = leak.samples[: -scenario.path_delay_samples]
        leak = ComplexSignal(shifted, leak.sample_rate_hz)
    return compose_rx(leak, scenario.rx, scenario.rx_noise_density(), seed=noise_seed)


def prepare_loop(scenario: "ScenarioConfig") -> LoopSetup:
    """Assemble the plant and the learner front-end for a scenario whose
    relative delay has already been resolved to an integer."""
    settings = scenario.canceller
    cfg = scenario.learning
    tau = settings.delay
    if tau is None:
        raise InputError("relative delay must be estimated or provided before learning")
    n_hist = settings.filter_length - 1
    k_aux = scenario.aux.effective_response.size
    margin = max(tau, n_hist + k_aux) + 8
    total = margin + cfg.block_size * cfg.num_blocks

    x, rx = _training_stream(scenario, total)
    raw = basis_functions(x, settings.max_order).delayed(tau)
    fit_block = BasisMatrix(
        raw.columns[margin: margin + cfg.block_size], raw.orders, raw.sample_rate_hz
    )
    orth = fit_orthogonalizer(fit_block, settings.orth_method)
    psi = apply_orthogonalizer(orth, raw)
    state = CancellerState.zeros(settings.max_order, settings.filter_length, orth, delay=tau)
    return LoopSetup(
        rx=rx,
        psi=psi,
        state=state,
        margin=margin,
        lna_a1=scenario.lna.a1,
        lna_a3=scenario.lna.a3,
        aux_response=scenario.aux.effective_response,
    )


def _observe_block(setup: LoopSetup, c: np.ndarray) -> np.ndarray:
    """LNA output for a combiner-output block, referred back to the LNA
    input by the linear gain."""
    out = setup.lna_a1 * c
    if setup.lna_a3 != 0.0:
        out = out + setup.lna_a3 * c * np.abs(c) ** 2
    return out / setup.lna_a1


def run_closed_loop(
    scenario: "ScenarioConfig",
    error_transform: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    keep_sample_power: bool = False,
) -> tuple[CancellerState, ConvergenceTrace]:
    """Run the full closed-loop learning procedure.

    Per block: regenerate the cancellation signal under the current
    coefficients, combine it with the received signal, observe the result
    through the LNA (gain-normalized back to the LNA input), and update
    the coefficients against the correlation of that observation with the
    basis. ``error_transform``, when given, distorts the observation
    before the update only (e.g. a hard limiter for sign-error
    experiments); the recorded residual is always the undistorted one.

    Raises DivergenceError if the block residual power grows by more than
    10 dB across any five consecutive blocks.
    """
    cfg = scenario.learning
    setup = prepare_loop(scenario)
    m_blk = cfg.block_size

    bound = stability_bound(
        BasisMatrix(
            setup.psi.columns[setup.margin: setup.margin + m_blk],
            setup.psi.orders,
            setup.psi.sample_rate_hz,
        ),
        (scenario.canceller.max_order, scenario.canceller.filter_length - 1),
        m_blk,
    )
    mu = cfg.step_size if cfg.step_size is not None else cfg.auto_fraction * bound

    state = setup.state
    k_aux = setup.aux_response.size
    blocks, residuals, updates, powers = [], [], [], []

    for m in range(cfg.num_blocks):
        n_m = setup.margin + m * m_blk
        u = build_data_matrix(setup.psi, state, n_m, m_blk)
        if k_aux == 1:
            injected = setup.aux_response[0] * (u @ state.coefficients)
        else:
            u_ext = build_data_matrix(setup.psi, state, n_m - k_aux + 1, m_blk + k_aux - 1)
            canc_ext = u_ext @ state.coefficients
            injected = np.convolve(canc_ext, setup.aux_response)[k_aux - 1: k_aux - 1 + m_blk]
        c = setup.rx.samples[n_m: n_m + m_blk] + injected
        e_obs = _observe_block(setup, c)
        if not np.all(np.isfinite(e_obs)):
            raise NumericError(
                f"non-finite observation in block {m + 1}; step size {mu:.3e} "
                f"(stability bound {bound:.3e})"
            )
        residual_dbm = watts_to_dbm(float(np.mean(np.abs(e_obs) ** 2)))
        e_upd = error_transform(e_obs) if error_transform is not None else e_obs
        new_state = decorrelation_update(state, u, e_upd, mu)
        blocks.append(m + 1)
        residuals.append(residual_dbm)
        updates.append(float(np.linalg.norm(new_state.coefficients - state.coefficients)))
        if keep_sample_power:
            powers.append(np.abs(e_obs) ** 2)
        state = new_state
        if (
            m >= _DIVERGENCE_WINDOW
            and residuals[-1] > residuals[-1 - _DIVERGENCE_WINDOW] + _DIVERGENCE_GROWTH_DB
        ):
            raise DivergenceError(
                f"residual power grew {residuals[-1] - residuals[-1 - _DIVERGENCE_WINDOW]:.1f} dB "
                f"over {_DIVERGENCE_WINDOW} blocks with step size {mu:.3e} "
                f"(stability bound {bound:.3e})",
                step_size=mu,
                bound=bound,
            )

    trace = ConvergenceTrace(
        block_index=np.asarray(blocks),
        residual_dbm=np.asarray(residuals),
        update_norm=np.asarray(updates),
        sample_power=np.concatenate(powers) if powers else None,
    )
    return state, trace


def block_ls_baseline(scenario: "ScenarioConfig") -> CancellerState:
    """One-shot block least-squares comparison stub.

    Fits the cancellation filters in a single shot from the LNA-output
    observation of the uncancelled leakage, exactly the kind of open-loop
    estimate whose accuracy collapses when the LNA distorts the strong
    leakage during the estimation phase. Kept only as a baseline.
    """
    setup = prepare_loop(scenario)
    m_blk = scenario.learning.block_size
    n_m = setup.margin
    u = build_data_matrix(setup.psi, setup.state, n_m, m_blk)
    e_obs = _observe_block(setup, setup.rx.samples[n_m: n_m + m_blk])
    w_ls, *_ = np.linalg.lstsq(u, -e_obs, rcond=None)
    return setup.state.with_coefficients(w_ls)
