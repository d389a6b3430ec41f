"""Entanglement measures for the qubit-cavity-resonator state.

Subsystem pairs are named by their letters: ``qv`` (qubit-resonator),
``cv`` (cavity-resonator) and ``qc`` (qubit-cavity).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import numkit
from .closedform import PureTripartiteState

TRACE_TOL = 1e-10
MONOGAMY_CLAMP = 1e-9
MONOGAMY_FAIL = 1e-6

_SY = np.array([[0, -1j], [1j, 0]])
_SYSY = np.kron(_SY, _SY)


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class DensityMatrix:
    dims: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != int(np.prod(dims)):
            raise MeasureError(f"matrix shape {m.shape} does not match dims {dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "matrix", m)

    def validate(self, trace_tol: float = TRACE_TOL) -> "DensityMatrix":
        m = self.matrix
        asym = numkit.max_asymmetry(m)
        if asym >= numkit.HERMITIAN_TOL:
            raise MeasureError(f"density matrix not Hermitian (max asymmetry {asym:.3e})")
        tr = np.trace(m).real
        if abs(tr - 1) > trace_tol:
            raise MeasureError(f"density matrix trace {tr!r} differs from 1")
        w = numkit.hermitian_eig(m).eigenvalues
        if w[0] < -numkit.PSD_CLAMP:
            raise MeasureError(f"density matrix not PSD (min eigenvalue {w[0]:.3e})")
        return self

    def min_eigenvalue(self) -> float:
        return float(numkit.hermitian_eig(self.matrix).eigenvalues[0])


def _as_density(rho, dims: Sequence[int] | None = None) -> DensityMatrix:
    if isinstance(rho, DensityMatrix):
        return rho
    if dims is None:
        raise MeasureError("dims are required for a raw matrix")
    return DensityMatrix(tuple(dims), rho)


_PAIRS = {"qv": (0, 2), "cv": (1, 2), "qc": (0, 1)}


def reduce_pure(state: PureTripartiteState | np.ndarray, pair: str) -> DensityMatrix:
    """Two-party reduced state of a pure ``(2, 2, n)`` state."""
    if pair not in _PAIRS:
        raise MeasureError(f"pair must be one of {sorted(_PAIRS)}, got {pair!r}")
    amp = state.amplitudes if isinstance(state, PureTripartiteState) else np.asarray(state)
    keep = _PAIRS[pair]
    traced = ({0, 1, 2} - set(keep)).pop()
    # move the traced index last and contract psi psi^H over it
    psi = np.moveaxis(amp, traced, -1)
    da, db = psi.shape[0], psi.shape[1]
    mat = psi.reshape(da * db, -1)
    rho = mat @ mat.conj().T
    return DensityMatrix((da, db), 0.5 * (rho + rho.conj().T))


def negativity(rho, dims: Sequence[int] | None = None, side: str = "A") -> float:
    """Sum of ``|eta| - eta`` over the partial-transpose eigenvalues."""
    rho = _as_density(rho, dims)
    if len(rho.dims) != 2:
        raise MeasureError(f"negativity needs a bipartite state, got dims {rho.dims}")
    rho.validate()
    eta = numkit.hermitian_eig(numkit.partial_transpose(rho.matrix, rho.dims, side)).eigenvalues
    return float(np.sum(np.abs(eta) - eta))


def _spin_flip_roots(rho: DensityMatrix) -> np.ndarray:
    # sqrt of the eigenvalues of rho rho~, decreasing; obtained from the
    # Hermitian matrix sqrt(rho) rho~ sqrt(rho), which has the same spectrum
    if rho.dims != (2, 2):
        raise MeasureError(f"two-qubit measure needs dims (2, 2), got {rho.dims}")
    rho.validate()
    m = rho.matrix
    flipped = _SYSY @ m.conj() @ _SYSY
    root = numkit.matrix_sqrt_psd(m)
    lam = numkit.hermitian_eig(root @ flipped @ root).eigenvalues
    if lam[0] < -numkit.PSD_CLAMP:
        raise MeasureError(f"spin-flip spectrum has negative eigenvalue {lam[0]:.3e}")
    return np.sqrt(np.clip(lam, 0.0, None))[::-1]


def concurrence(rho, dims: Sequence[int] | None = None) -> float:
    s = _spin_flip_roots(_as_density(rho, dims or (2, 2)))
    return float(max(0.0, s[0] - s[1] - s[2] - s[3]))


def coa(rho, dims: Sequence[int] | None = None) -> float:
    """Concurrence of assistance, ``sum_j sqrt(lambda_j)``.

    Exact for the two-qubit marginal of a pure ``(2, 2, n)`` state.
    """
    return float(np.sum(_spin_flip_roots(_as_density(rho, dims or (2, 2)))))


def _residual(ca: float, other: float, what: str) -> float:
    val = ca * ca - other * other
    if val < -MONOGAMY_FAIL:
        raise MeasureError(f"{what} = {val:.3e} is negative beyond tolerance")
    if val < 0 and val >= -MONOGAMY_CLAMP:
        return 0.0
    return val


def tau_sq(rho_qc, dims: Sequence[int] | None = None) -> float:
    """GHZ-type residual ``C_a^2 - C^2`` of the qubit-cavity marginal."""
    rho = _as_density(rho_qc, dims or (2, 2))
    return _residual(coa(rho), concurrence(rho), "tau^2")


def chi_sq(rho_qc, dims: Sequence[int] | None = None) -> float:
    """Residual ``C_a^2 - N^2``, sensitive to both GHZ- and W-type correlations."""
    rho = _as_density(rho_qc, dims or (2, 2))
    return _residual(coa(rho), negativity(rho), "chi^2")


@dataclass(frozen=True)
class MeasureSet:
    N_qv: float
    N_cv: float
    N_qc: float
    C_qc: float
    Ca_qc: float
    tau_sq: float
    chi_sq: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def qc_measures(rho_qc: DensityMatrix) -> dict[str, float]:
    """Measures that depend only on the qubit-cavity marginal."""
    ca, c, n = coa(rho_qc), concurrence(rho_qc), negativity(rho_qc)
    return {
        "N_qc": n,
        "C_qc": c,
        "Ca_qc": ca,
        "tau_sq": _residual(ca, c, "tau^2"),
        "chi_sq": _residual(ca, n, "chi^2"),
    }


def measure_all(state: PureTripartiteState | np.ndarray) -> MeasureSet:
    state = state if isinstance(state, PureTripartiteState) else PureTripartiteState(state)
    if abs(state.norm() - 1) > 1e-10:
        raise MeasureError(f"state norm {state.norm()!r} differs from 1")
    qc = qc_measures(reduce_pure(state, "qc"))
    return MeasureSet(
        N_qv=negativity(reduce_pure(state, "qv")),
        N_cv=negativity(reduce_pure(state, "cv")),
        **qc,
    )
