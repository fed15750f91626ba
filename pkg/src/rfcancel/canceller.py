"""Cancellation-signal regeneration and RF combining.

Holds the aggregate cancellation filter state (one FIR filter per
orthogonalized basis order plus the relative delay and the whitening
transform), regenerates the baseband cancellation signal, applies the
auxiliary-chain response, performs the additive RF combining step, and
provides the closed-form optimum-filter responses used as a convergence
oracle. Also includes the cross-correlation delay estimator used during
calibration.

Sign convention: combining is by ADDITION of the auxiliary signal to the
received signal; the opposite phase that actually cancels the leakage
lives in the filter coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .basis import BasisMatrix, Orthogonalizer
from .errors import EstimationError, InputError, SingularityError
from .rf_chain import AuxChain, CouplingChannel, PHModel, aux_apply
from .signal_gen import ComplexSignal


@dataclass(frozen=True)
class CancellerState:
    """Aggregate cancellation filter.

    ``coefficients`` stacks the per-order filters in ascending order:
    [w_1 | w_3 | ... | w_P], each of length ``filter_length``. ``delay``
    is the integer relative delay applied to the raw basis samples before
    orthogonalization and filtering.
    """

    coefficients: np.ndarray
    filter_length: int
    max_order: int
    delay: int
    orthogonalizer: Orthogonalizer

    def __post_init__(self):
        w = np.asarray(self.coefficients, dtype=np.complex128).ravel()
        object.__setattr__(self, "coefficients", w)
        if self.max_order < 1 or self.max_order % 2 == 0:
            raise InputError("max_order must be odd and >= 1")
        if self.filter_length < 1:
            raise InputError("filter_length must be >= 1")
        if self.delay < 0:
            raise InputError("delay must be >= 0")
        expected = self.num_orders * self.filter_length
        if w.size != expected:
            raise InputError(
                f"coefficient vector has {w.size} entries, expected {expected}"
            )
        if self.orthogonalizer.dim != self.num_orders:
            raise InputError("orthogonalizer dimension does not match order count")

    @property
    def num_orders(self) -> int:
        return (self.max_order + 1) // 2

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(range(1, self.max_order + 1, 2))

    def per_order_filters(self) -> dict[int, np.ndarray]:
        n = self.filter_length
        return {
            p: self.coefficients[i * n:(i + 1) * n].copy()
            for i, p in enumerate(self.orders)
        }

    def with_coefficients(self, coefficients: np.ndarray) -> "CancellerState":
        return replace(self, coefficients=coefficients)

    @classmethod
    def zeros(
        cls,
        max_order: int,
        filter_length: int,
        orthogonalizer: Orthogonalizer,
        delay: int = 0,
    ) -> "CancellerState":
        dim = ((max_order + 1) // 2) * filter_length
        return cls(
            np.zeros(dim, dtype=np.complex128),
            filter_length,
            max_order,
            delay,
            orthogonalizer,
        )


class FrequencyResponses(NamedTuple):
    """Per-order frequency responses on a uniform grid of normalized
    angular frequencies (np.fft.fftfreq ordering)."""

    omega: np.ndarray
    responses: dict[int, np.ndarray]


def regenerate(state: CancellerState, basis: BasisMatrix) -> ComplexSignal:
    """Digital cancellation signal: per-order filters convolved with the
    (already delay-aligned, orthogonalized) basis columns and summed.

    Output has the basis block length; samples before the block start are
    treated as zero.
    """
    if basis.num_orders != state.num_orders:
        raise InputError(
            f"basis has {basis.num_orders} orders, state expects {state.num_orders}"
        )
    filters = state.per_order_filters()
    out = np.zeros(basis.block_length, dtype=np.complex128)
    for i, p in enumerate(state.orders):
        out += np.convolve(basis.columns[:, i], filters[p])[: basis.block_length]
    return ComplexSignal(out, basis.sample_rate_hz)


def combine(rx: ComplexSignal, canc: ComplexSignal, aux: AuxChain) -> ComplexSignal:
    """Combiner output: received signal plus the auxiliary-chain response
    applied to the cancellation signal (addition, not subtraction)."""
    if len(rx) != len(canc):
        raise InputError("rx and cancellation signals must have equal length")
    if rx.sample_rate_hz != canc.sample_rate_hz:
        raise InputError("rx and cancellation signals must share a sample rate")
    injected = aux_apply(aux, canc)
    return ComplexSignal(rx.samples + injected.samples, rx.sample_rate_hz)


def optimum_filters(
    pa: PHModel,
    channel: CouplingChannel,
    aux: AuxChain,
    num_freq: int,
) -> FrequencyResponses:
    """Closed-form optimum cancellation filters -H_p(w)/H_aux(w).

    H_p is the response of the effective order-p coupling path (passive
    channel convolved with the PA branch filter) and H_aux the
    auxiliary-chain response, both evaluated on a uniform ``num_freq``
    grid. These are the raw-basis-domain filters; learned coefficients
    must be mapped back through the whitening transform before comparing.
    """
    if num_freq < 1:
        raise InputError("num_freq must be >= 1")
    omega = 2.0 * np.pi * np.fft.fftfreq(num_freq)
    h_aux = np.fft.fft(aux.effective_response, num_freq)
    too_small = np.abs(h_aux) <= 1e-9
    if np.any(too_small):
        worst = omega[too_small][0]
        raise SingularityError(
            f"auxiliary response vanishes near normalized frequency {worst:.6f} rad"
        )
    responses = {}
    for p, branch in pa.branch_filters.items():
        path = np.convolve(channel.impulse_response, branch)
        responses[p] = -np.fft.fft(path, num_freq) / h_aux
    return FrequencyResponses(omega, responses)


def raw_order_filters(state: CancellerState) -> dict[int, np.ndarray]:
    """Learned filters mapped from the orthogonalized domain back to the
    raw basis domain (through S): w_raw_p = sum_q S[q, p] * w_q."""
    s = state.orthogonalizer.transform
    stacked = np.vstack([state.per_order_filters()[p] for p in state.orders])
    raw = s.T @ stacked
    return {p: raw[i] for i, p in enumerate(state.orders)}


def estimate_delay(
    rx_observation: ComplexSignal,
    reference: ComplexSignal,
    max_lag: int,
) -> int:
    """Integer relative delay of ``reference`` within ``rx_observation``.

    Returns the lag in [0, max_lag] maximizing the cross-correlation
    magnitude; ties break toward the smallest lag. Invariant to complex
    scaling of either input.
    """
    n_rx = len(rx_observation)
    n_ref = len(reference)
    if max_lag < 0 or max_lag >= min(n_rx, n_ref) / 2:
        raise InputError("max_lag must be within half the signal length")
    a = rx_observation.samples
    b = reference.samples
    if not np.any(a) or not np.any(b):
        raise EstimationError("cannot estimate delay from an all-zero signal")
    # r[k] = sum_n a[n + k] conj(b[n]) for k = 0..max_lag, via FFT.
    size = int(2 ** np.ceil(np.log2(n_rx + n_ref)))
    spec = np.fft.fft(a, size) * np.conj(np.fft.fft(b, size))
    corr = np.fft.ifft(spec)[: max_lag + 1]
    return int(np.argmax(np.abs(corr)))


def save_state(path, state: CancellerState) -> None:
    """Serialize the canceller state as plain text for warm starts."""
    with open(path, "w") as fh:
        fh.write(f"# max_order {state.max_order}\n")
        fh.write(f"# filter_length {state.filter_length}\n")
        fh.write(f"# delay {state.delay}\n")
        fh.write(f"# method {state.orthogonalizer.method}\n")
        fh.write("# w\n")
        for z in state.coefficients:
            fh.write(f"{z.real:.17g} {z.imag:.17g}\n")
        for name, matrix in (
            ("S", state.orthogonalizer.transform),
            ("C", state.orthogonalizer.source_covariance),
        ):
            fh.write(f"# {name}\n")
            for row in matrix:
                fh.write(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row) + "\n")


def load_state(path) -> CancellerState:
    """Read a canceller state written by :func:`save_state`."""
    path = Path(path)
    header: dict[str, str] = {}
    sections: dict[str, list] = {"w": [], "S": [], "C": []}
    current = None
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = line[1:].split()
            if not fields:
                continue
            if fields[0] in sections:
                current = fields[0]
            elif len(fields) == 2:
                header[fields[0]] = fields[1]
            continue
        if current is None:
            raise InputError(f"{path}: data before a section header")
        vals = [float(tok) for tok in line.split()]
        if len(vals) % 2 != 0:
            raise InputError(f"{path}: expected 're im' pairs")
        sections[current].append(np.array(vals[0::2]) + 1j * np.array(vals[1::2]))
    try:
        max_order = int(header["max_order"])
        filter_length = int(header["filter_length"])
        delay = int(header["delay"])
        method = header["method"]
    except KeyError as exc:
        raise InputError(f"{path}: missing header field {exc}") from exc
    if not sections["w"] or not sections["S"]:
        raise InputError(f"{path}: missing coefficient or transform data")
    w = np.concatenate(sections["w"])
    s = np.vstack(sections["S"])
    c = np.vstack(sections["C"]) if sections["C"] else np.eye(s.shape[0])
    orth = Orthogonalizer(s, method, c)
    return CancellerState(w, filter_length, max_order, delay, orth)
