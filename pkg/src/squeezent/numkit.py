"""Dense complex linear algebra shared by the rest of the package.

Matrices are plain ``numpy`` arrays. Composite spaces use row-major
subsystem ordering: the leftmost factor is the slowest index, so a
basis state ``|i, k>`` of a ``dA x dB`` space sits at row ``i * dB + k``.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

HERMITIAN_TOL = 1e-12
PSD_CLAMP = 1e-10


class NumericalError(ValueError):
    """Raised when an input violates a numerical precondition."""


class Spectrum(NamedTuple):
    eigenvalues: np.ndarray  # ascending, real
    eigenvectors: np.ndarray  # unitary, one eigenvector per column


def max_asymmetry(m: np.ndarray) -> float:
    m = np.asarray(m)
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and max_asymmetry(m) < tol


def _check_square(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NumericalError(f"expected a square matrix, got shape {m.shape}")
    return m


def hermitian_eig(m: np.ndarray, tol: float = HERMITIAN_TOL) -> Spectrum:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    The asymmetry check is absolute and scaled by ``max(1, |M|_max)`` so that
    large operators (e.g. Fock-space Hamiltonians) are not rejected for
    rounding noise.
    """
    m = _check_square(m)
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    asym = max_asymmetry(m)
    if asym >= tol * scale:
        raise NumericalError(f"matrix is not Hermitian: max |M - M^H| = {asym:.3e}")
    # symmetrize so LAPACK sees an exactly Hermitian input
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return Spectrum(w, v)


def matrix_sqrt_psd(m: np.ndarray) -> np.ndarray:
    """Principal square root of a Hermitian positive semidefinite matrix.

    Eigenvalues in ``[-1e-10, 0)`` are clamped to zero; anything more
    negative is rejected.
    """
    w, v = hermitian_eig(m)
    if w.size and w[0] < -PSD_CLAMP:
        raise NumericalError(f"matrix is not PSD: min eigenvalue {w[0]:.3e}")
    root = np.sqrt(np.clip(w, 0.0, None))
    r = (v * root) @ v.conj().T
    return 0.5 * (r + r.conj().T)


def partial_transpose(rho: np.ndarray, dims: Sequence[int], side: str = "A") -> np.ndarray:
    """Partial transpose of a bipartite operator on ``dA x dB``.

    ``side='A'`` realises ``<j k|rho^TA|l m> = <l k|rho|j m>``; ``side='B'``
    transposes the second factor instead.
    """
    rho = _check_square(rho)
    if len(dims) != 2:
        raise NumericalError(f"partial_transpose needs two subsystem dims, got {list(dims)}")
    da, db = (int(d) for d in dims)
    if da * db != rho.shape[0]:
        raise NumericalError(f"dims {da}x{db} do not match matrix size {rho.shape[0]}")
    t = rho.reshape(da, db, da, db)
    if side == "A":
        t = t.transpose(2, 1, 0, 3)
    elif side == "B":
        t = t.transpose(0, 3, 2, 1)
    else:
        raise NumericalError(f"side must be 'A' or 'B', got {side!r}")
    return t.reshape(da * db, da * db).copy()


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    Kept subsystems stay in their original order regardless of the order of
    ``keep``.
    """
    rho = _check_square(rho)
    dims = [int(d) for d in dims]
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise NumericalError("keep must name at least one subsystem")
    if keep[0] < 0 or keep[-1] >= n:
        raise NumericalError(f"keep indices {keep} out of range for {n} subsystems")
    if int(np.prod(dims)) != rho.shape[0]:
        raise NumericalError(f"dims {dims} do not match matrix size {rho.shape[0]}")

    t = rho.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # contract each traced axis against its column partner, highest first
    for i in sorted(traced, reverse=True):
        m = t.ndim // 2
        t = np.trace(t, axis1=i, axis2=i + m)
    dk = int(np.prod([dims[k] for k in keep]))
    return t.reshape(dk, dk)


class SparseOperator:
    """Square sparse operator assembled from ``(row, col, value)`` triplets."""

    def __init__(self, dim: int, triplets=()):
        self.dim = int(dim)
        rows, cols, vals = [], [], []
        seen = set()
        for r, c, v in triplets:
            r, c = int(r), int(c)
            if not (0 <= r < self.dim and 0 <= c < self.dim):
                raise NumericalError(f"triplet index ({r}, {c}) outside dim {self.dim}")
            if (r, c) in seen:
                raise NumericalError(f"duplicate triplet at ({r}, {c})")
            seen.add((r, c))
            rows.append(r)
            cols.append(c)
            vals.append(complex(v))
        self._m = sp.csr_matrix(
            (np.asarray(vals, dtype=complex), (np.asarray(rows, int), np.asarray(cols, int))),
            shape=(self.dim, self.dim),
        )

    @classmethod
    def from_scipy(cls, m) -> "SparseOperator":
        m = sp.csr_matrix(m, dtype=complex)
        if m.shape[0] != m.shape[1]:
            raise NumericalError(f"operator must be square, got {m.shape}")
        op = cls.__new__(cls)
        op.dim = m.shape[0]
        m.sum_duplicates()
        m.eliminate_zeros()
        op._m = m
        return op

    @property
    def csr(self) -> sp.csr_matrix:
        return self._m

    @property
    def triplets(self) -> list[tuple[int, int, complex]]:
        coo = self._m.tocoo()
        return [(int(r), int(c), complex(v)) for r, c, v in zip(coo.row, coo.col, coo.data)]

    @property
    def nnz(self) -> int:
        return self._m.nnz

    def dense(self) -> np.ndarray:
        return self._m.toarray()

    def adjoint(self) -> "SparseOperator":
        return SparseOperator.from_scipy(self._m.conj().T)

    def __matmul__(self, other: "SparseOperator") -> "SparseOperator":
        return SparseOperator.from_scipy(self._m @ other._m)

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        return SparseOperator.from_scipy(self._m + other._m)

    def __sub__(self, other: "SparseOperator") -> "SparseOperator":
        return SparseOperator.from_scipy(self._m - other._m)

    def __rmul__(self, scalar) -> "SparseOperator":
        return SparseOperator.from_scipy(complex(scalar) * self._m)

    def kron(self, other: "SparseOperator") -> "SparseOperator":
        return SparseOperator.from_scipy(sp.kron(self._m, other._m, format="csr"))

    @classmethod
    def identity(cls, dim: int) -> "SparseOperator":
        return cls.from_scipy(sp.identity(dim, dtype=complex, format="csr"))

    def __repr__(self) -> str:
        return f"SparseOperator(dim={self.dim}, nnz={self.nnz})"


def sparse_apply(op: SparseOperator, m: np.ndarray, side: str = "left") -> np.ndarray:
    """``L @ M`` for ``side='left'``, ``M @ L^H`` for ``side='right-adjoint'``."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise NumericalError(f"expected a matrix, got shape {m.shape}")
    if side == "left":
        if m.shape[0] != op.dim:
            raise NumericalError(f"operator dim {op.dim} incompatible with {m.shape}")
        return np.asarray(op.csr @ m)
    if side == "right-adjoint":
        if m.shape[1] != op.dim:
            raise NumericalError(f"operator dim {op.dim} incompatible with {m.shape}")
        # M L^H = (L M^H)^H
        return np.asarray(op.csr @ m.conj().T).conj().T
    raise NumericalError(f"side must be 'left' or 'right-adjoint', got {side!r}")


def lowering(dim: int) -> SparseOperator:
    """Truncated bosonic annihilation operator on ``dim`` Fock levels."""
    n = np.arange(1, dim)
    return SparseOperator(dim, zip(n - 1, n, np.sqrt(n)))
