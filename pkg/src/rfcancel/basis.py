"""Nonlinear basis functions and their orthogonalization.

The order-p basis function of a transmit signal is x[n]|x[n]|^(p-1).
Different orders are strongly correlated, which slows adaptive learning;
a linear transform S makes the per-sample basis vector statistically
white. S can be fitted from the covariance of the raw basis (eigen
method, the default: depends only on the signal statistics, so it can be
precomputed and reused) or from a QR decomposition of a data block.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DegeneracyError, InputError, NumericError
from .signal_gen import ComplexSignal

METHOD_EIGEN = "covariance_eigen"
METHOD_QR = "qr"
METHODS = (METHOD_EIGEN, METHOD_QR)

# Relative eigenvalue floor below which the basis covariance is treated
# as rank deficient. Healthy multicarrier bases up to order 9 sit around
# 1e-7..1e-9; exactly collinear ones land at the regularization level
# (~1e-13 after the epsilon below).
_DEGENERACY_RATIO = 1e-11

_COVARIANCE_EPS = 1e-12


@dataclass(frozen=True)
class BasisMatrix:
    """Block of basis-function samples, one column per odd order."""

    columns: np.ndarray  # (block_length, num_orders) complex
    orders: tuple[int, ...]
    sample_rate_hz: float = 1.0

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=np.complex128)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "orders", tuple(int(p) for p in self.orders))
        if cols.ndim != 2 or cols.shape[0] == 0:
            raise InputError("basis must be a non-empty 2-D block")
        if cols.shape[1] != len(self.orders):
            raise InputError("one column per order required")
        if not np.all(np.isfinite(cols)):
            raise InputError("basis contains non-finite values")

    @property
    def block_length(self) -> int:
        return self.columns.shape[0]

    @property
    def num_orders(self) -> int:
        return self.columns.shape[1]

    def delayed(self, delay: int) -> "BasisMatrix":
        """Columns shifted by ``delay`` samples (zero history), i.e.
        column value at row n becomes the original value at n - delay."""
        if delay < 0:
            raise InputError("delay must be >= 0")
        if delay == 0:
            return self
        shifted = np.zeros_like(self.columns)
        shifted[delay:] = self.columns[:-delay or None]
        return BasisMatrix(shifted, self.orders, self.sample_rate_hz)


@dataclass(frozen=True)
class Orthogonalizer:
    """Whitening transform S applied to per-sample basis vectors,
    together with the method used and the raw-basis covariance it was
    fitted from."""

    transform: np.ndarray
    method: str
    source_covariance: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.transform, dtype=np.complex128)
        c = np.asarray(self.source_covariance, dtype=np.complex128)
        object.__setattr__(self, "transform", s)
        object.__setattr__(self, "source_covariance", c)
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}")
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise InputError("transform must be square")

    @property
    def dim(self) -> int:
        return self.transform.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "Orthogonalizer":
        eye = np.eye(dim, dtype=np.complex128)
        return cls(eye, METHOD_EIGEN, eye.copy())


def basis_functions(x: ComplexSignal, max_order: int) -> BasisMatrix:
    """Basis block for all odd orders up to ``max_order``."""
    if max_order < 1 or max_order % 2 == 0:
        raise ConfigurationError(f"max_order must be odd and >= 1, got {max_order}")
    samples = x.samples
    mag = np.abs(samples)
    orders = tuple(range(1, max_order + 1, 2))
    cols = np.empty((samples.size, len(orders)), dtype=np.complex128)
    for i, p in enumerate(orders):
        cols[:, i] = samples * mag ** (p - 1)
    return BasisMatrix(cols, orders, x.sample_rate_hz)


def sample_covariance(basis: BasisMatrix) -> np.ndarray:
    """(1/M) * sum over the block of the outer products Psi Psi^H."""
    b = basis.columns
    return (b.conj().T @ b).conj() / basis.block_length


def _jacobi_eigh(matrix: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100):
    """Eigendecomposition of a small Hermitian matrix by cyclic complex
    Jacobi rotations.

    Returns (eigenvalues, eigenvectors) sorted by descending eigenvalue,
    with matrix = V diag(w) V^H. Convergence is declared when the
    off-diagonal Frobenius norm falls below ``tol`` relative to the
    matrix norm.
    """
    a = np.asarray(matrix, dtype=np.complex128).copy()
    n = a.shape[0]
    v = np.eye(n, dtype=np.complex128)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v

    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(a - np.diag(np.diag(a))) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= tol * scale / (2 * n):
                    continue
                phase = apq / abs(apq)
                # Rotation angle zeroing the (p, q) entry of the 2x2 block.
                theta = 0.5 * np.arctan2(2.0 * abs(apq), a[p, p].real - a[q, q].real)
                c = np.cos(theta)
                s = np.sin(theta)
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p + s * np.conj(phase) * col_q
                a[:, q] = -s * phase * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p + s * phase * row_q
                a[q, :] = -s * np.conj(phase) * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p + s * np.conj(phase) * vec_q
                v[:, q] = -s * phase * vec_p + c * vec_q
    else:
        raise NumericError("Jacobi eigensolver did not converge")

    eigvals = np.diag(a).real.copy()
    order = np.argsort(eigvals)[::-1]
    return eigvals[order], v[:, order]


def _check_degeneracy(cov: np.ndarray, eigvals: np.ndarray, orders) -> None:
    lam_max = float(eigvals[0])
    lam_min = float(eigvals[-1])
    if lam_max <= 0 or lam_min <= 0 or lam_min / lam_max < _DEGENERACY_RATIO:
        diag = np.sqrt(np.abs(np.diag(cov)))
        denom = np.outer(diag, diag)
        denom[denom == 0] = 1.0
        corr = np.abs(cov) / denom
        pairs = []
        for i in range(len(orders)):
            for j in range(i + 1, len(orders)):
                if corr[i, j] > 1.0 - 1e-6:
                    pairs.append(f"{orders[i]} and {orders[j]}")
        detail = "; collinear orders: " + ", ".join(pairs) if pairs else ""
        raise DegeneracyError(
            "basis covariance is rank deficient (eigenvalue ratio "
            f"{lam_min / max(lam_max, 1e-300):.2e}){detail}"
        )


def fit_orthogonalizer(basis: BasisMatrix, method: str = METHOD_EIGEN) -> Orthogonalizer:
    """Fit the whitening transform S on a basis block.

    With the eigen method, S C S^H = I for the (diagonally regularized)
    sample covariance C of the block. With the QR method, the transformed
    block has orthonormal columns. A covariance that stays rank deficient
    after regularization (e.g. a constant-envelope input, where every
    order is proportional to order 1) raises DegeneracyError naming the
    collinear orders.
    """
    if method not in METHODS:
        raise ConfigurationError(f"unknown orthogonalization method {method!r}")
    k = basis.num_orders
    if basis.block_length < 10 * k:
        raise InputError(
            f"fitting block too short: {basis.block_length} samples for {k} orders"
        )

    cov = sample_covariance(basis)
    regularized = cov + np.eye(k) * (_COVARIANCE_EPS * np.trace(cov).real / k)
    eigvals, eigvecs = _jacobi_eigh(regularized)
    _check_degeneracy(regularized, eigvals, basis.orders)

    if method == METHOD_EIGEN:
        transform = np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.conj().T
        # The transform whitens the regularized covariance, which leaves
        # S C S^H = I - eps * diag(1/lambda) against the raw one; that
        # deficit is purely diagonal, so one rescale removes it.
        residual_diag = np.real(
            np.einsum("ij,jk,ik->i", transform, cov, transform.conj())
        )
        if np.all(residual_diag > 0):
            transform = transform / np.sqrt(residual_diag)[:, None]
    else:
        _, r = np.linalg.qr(basis.columns, mode="reduced")
        transform = np.linalg.inv(r).T
    return Orthogonalizer(transform, method, cov)


def apply_orthogonalizer(orth: Orthogonalizer, basis: BasisMatrix) -> BasisMatrix:
    """Transform every per-sample basis vector by S."""
    if orth.dim != basis.num_orders:
        raise InputError(
            f"transform dimension {orth.dim} does not match basis "
            f"order count {basis.num_orders}"
        )
    return BasisMatrix(basis.columns @ orth.transform.T, basis.orders, basis.sample_rate_hz)


def save_transform(path, orth: Orthogonalizer) -> None:
    """Write S (and the covariance it came from) as plain text so the
    transform can be precomputed offline and loaded later."""
    with open(path, "w") as fh:
        fh.write(f"# method {orth.method}\n")
        for name, matrix in (("S", orth.transform), ("C", orth.source_covariance)):
            fh.write(f"# {name}\n")
            for row in matrix:
                fh.write(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row) + "\n")


def load_transform(path) -> Orthogonalizer:
    """Read a transform written by :func:`save_transform`."""
    path = Path(path)
    method: Optional[str] = None
    sections: dict[str, list[np.ndarray]] = {"S": [], "C": []}
    current: Optional[str] = None
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = line[1:].split()
            if fields and fields[0] == "method":
                method = fields[1]
            elif fields and fields[0] in sections:
                current = fields[0]
            continue
        if current is None:
            raise InputError(f"{path}: matrix data before a section header")
        vals = [float(tok) for tok in line.split()]
        if len(vals) % 2 != 0:
            raise InputError(f"{path}: expected 're im' pairs")
        sections[current].append(
            np.array(vals[0::2]) + 1j * np.array(vals[1::2])
        )
    if method is None or not sections["S"]:
        raise InputError(f"{path}: not a transform file")
    s = np.vstack(sections["S"])
    c = np.vstack(sections["C"]) if sections["C"] else np.eye(s.shape[0])
    return Orthogonalizer(s, method, c)
