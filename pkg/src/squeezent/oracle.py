"""Brute-force check of the closed forms in a truncated Fock space.

The resonator starts in ``D(beta) S(xi) |0>`` built by exponentiating the
generators directly, and each (qubit, photon-number) branch is propagated
under its own displaced-oscillator Hamiltonian ``b^H b - u (b + b^H)`` via
an eigendecomposition. None of this uses the analytic evolution operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal

from . import numkit
from .closedform import PureTripartiteState, SystemParams
from .measures import DensityMatrix, MeasureSet, measure_all

CUTOFF_CEILING = 4096
TAYLOR_TOL = 1e-14


class TruncationError(RuntimeError):
    """The Fock cutoff is too small for the requested leakage bound."""

    def __init__(self, message: str, leakage: float, cutoff: int):
        super().__init__(f"{message} (leakage {leakage:.3e} at cutoff {cutoff})")
        self.leakage = leakage
        self.cutoff = cutoff


@dataclass(frozen=True)
class TruncationConfig:
    N_f: int = 64
    leak_tol: float = 1e-8
    growth_factor: float = 1.5
    auto_grow: bool = True
    ceiling: int = CUTOFF_CEILING

    def __post_init__(self):
        if self.N_f < 8:
            raise ValueError(f"N_f must be at least 8, got {self.N_f}")
        if not 0 < self.leak_tol <= 1e-4:
            raise ValueError(f"leak_tol must lie in (0, 1e-4], got {self.leak_tol}")
        if self.growth_factor <= 1:
            raise ValueError(f"growth_factor must exceed 1, got {self.growth_factor}")

    def grown(self, n: int) -> int:
        return max(n + 8, math.ceil(n * self.growth_factor))


@dataclass(frozen=True)
class FockVector:
    amplitudes: np.ndarray
    leakage: float = 0.0

    @property
    def cutoff(self) -> int:
        return self.amplitudes.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def padded(self, n: int) -> "FockVector":
        out = np.zeros(n, dtype=complex)
        out[: self.cutoff] = self.amplitudes
        return FockVector(out, self.leakage)


def tail_mass(v: np.ndarray) -> float:
    """Probability in the top ``max(8, N // 10)`` Fock levels."""
    k = max(8, v.shape[0] // 10)
    return float(np.sum(np.abs(v[-k:]) ** 2))


def _expm_action(gen: sp.csr_matrix, v: np.ndarray, norm_bound: float) -> np.ndarray:
    """``exp(gen) v`` by substepped Taylor series.

    Substeps keep each exponent's norm below 1/2 so the series never
    suffers from cancellation between large terms.
    """
    steps = max(1, math.ceil(2 * norm_bound))
    a = gen / steps
    for _ in range(steps):
        term = v
        acc = v.copy()
        scale = max(np.linalg.norm(v), 1e-300)
        k = 1
        while True:
            term = (a @ term) / k
            acc += term
            if np.linalg.norm(term) <= TAYLOR_TOL * scale:
                break
            k += 1
        v = acc
    return v


def _ladder(n: int) -> sp.csr_matrix:
    return numkit.lowering(n).csr


def _coherent_squeezed_in(n: int, beta: float, r: float, phi: float) -> np.ndarray:
    b = _ladder(n)
    bd = b.conj().T.tocsr()
    v = np.zeros(n, dtype=complex)
    v[0] = 1.0
    if r > 0:
        xi = r * np.exp(1j * phi)
        gen = 0.5 * (np.conj(xi) * (b @ b) - xi * (bd @ bd))
        v = _expm_action(gen.tocsr(), v, norm_bound=r * n)
    if beta != 0:
        gen = beta * bd - np.conj(beta) * b
        v = _expm_action(gen.tocsr(), v, norm_bound=2 * abs(beta) * math.sqrt(n))
    return v


def coherent_squeezed(beta: float, r: float, phi: float, cfg: TruncationConfig | None = None) -> FockVector:
    """Fock amplitudes of ``D(beta) S(r e^{i phi}) |0>``.

    Work is done in a space ``growth_factor`` larger than the returned
    cutoff, and the cutoff grows until the probability left beyond it is
    below ``cfg.leak_tol``. The returned vector is not renormalised.
    """
    cfg = cfg or TruncationConfig()
    n = cfg.N_f
    while True:
        work = _coherent_squeezed_in(cfg.grown(n), beta, r, phi)
        head = work[:n]
        deficit = max(0.0, 1.0 - float(np.vdot(head, head).real))
        if deficit < cfg.leak_tol:
            return FockVector(head, deficit)
        if not cfg.auto_grow:
            raise TruncationError("initial state truncated", deficit, n)
        n = cfg.grown(n)
        if n > cfg.ceiling:
            raise TruncationError("cutoff ceiling reached", deficit, n)


def branch_propagator(u: float, n: int, omega: float):
    """Return ``v -> exp(-i H_u omega) v`` for the truncated ``H_u``."""
    diag = np.arange(n, dtype=float)
    off = -u * np.sqrt(np.arange(1, n, dtype=float))
    w, vecs = eigh_tridiagonal(diag, off)
    phases = np.exp(-1j * w * omega)

    def apply(v: np.ndarray) -> np.ndarray:
        return vecs @ (phases * (vecs.T @ v))

    return apply, (diag, off)


def branch_energy(u: float, v: np.ndarray) -> float:
    """``<v| H_u |v>`` for a truncated Fock vector."""
    n = v.shape[0]
    hv = np.arange(n) * v
    s = np.sqrt(np.arange(1, n))
    hv[:-1] -= u * s * v[1:]
    hv[1:] -= u * s * v[:-1]
    return float(np.vdot(v, hv).real)


def propagate(u: float, v0: FockVector, omega: float, cfg: TruncationConfig | None = None) -> FockVector:
    """Evolve one branch for dimensionless time ``omega`` in the cutoff of ``v0``."""
    cfg = cfg or TruncationConfig()
    if v0.norm() ** 2 < 1 - cfg.leak_tol * 10:
        raise TruncationError("input vector not normalised", 1 - v0.norm() ** 2, v0.cutoff)
    apply, _ = branch_propagator(u, v0.cutoff, omega)
    v = apply(v0.amplitudes.astype(complex))
    leak = tail_mass(v)
    if leak > 10 * cfg.leak_tol:
        raise TruncationError("propagated state reaches the cutoff", leak, v0.cutoff)
    return FockVector(v, max(leak, v0.leakage))


@dataclass(frozen=True)
class OracleResult:
    branches: np.ndarray  # (4, N) propagated vibrational states, branch order of SystemParams.couplings
    cutoff: int
    leakage: float

    @property
    def tensor(self) -> np.ndarray:
        """Full ``(2, 2, N)`` state with amplitudes ``branches / 2``."""
        return 0.5 * self.branches.reshape(2, 2, -1)

    def gram(self) -> np.ndarray:
        return self.branches.conj() @ self.branches.T

    def rho_qc(self) -> DensityMatrix:
        t = self.tensor.reshape(4, -1)
        if self.cutoff <= 256:
            full = np.outer(t.reshape(-1), t.reshape(-1).conj())
            rho = numkit.partial_trace(full, (2, 2, self.cutoff), keep=(0, 1))
        else:
            # same contraction without materialising the 4N x 4N projector
            rho = t @ t.conj().T
        rho = rho / np.trace(rho).real
        return DensityMatrix((2, 2), 0.5 * (rho + rho.conj().T))

    def coefficients(self) -> np.ndarray:
        """Gram-Schmidt coefficients ``<k|xi_i>`` (rows = branches) from QR."""
        q, rmat = np.linalg.qr(self.branches.T)
        d = np.diag(rmat)
        ph = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1), 1)
        rmat = rmat * ph.conj()[:, None]
        return rmat.T

    def compressed_state(self) -> PureTripartiteState:
        """State expressed in the span of the four branch vectors (unit norm)."""
        amp = 0.5 * self.coefficients().reshape(2, 2, 4)
        return PureTripartiteState(amp / np.linalg.norm(amp))

    def measures(self) -> MeasureSet:
        return measure_all(self.compressed_state())


def oracle_state(p: SystemParams, cfg: TruncationConfig | None = None) -> OracleResult:
    """Propagate all four branches, growing the cutoff until nothing leaks."""
    cfg = cfg or TruncationConfig()
    n = cfg.N_f
    while True:
        v0 = coherent_squeezed(p.beta, p.r, p.phi, TruncationConfig(
            N_f=n, leak_tol=cfg.leak_tol, growth_factor=cfg.growth_factor,
            auto_grow=cfg.auto_grow, ceiling=cfg.ceiling,
        ))
        work = v0.padded(cfg.grown(v0.cutoff)) if cfg.auto_grow else v0
        try:
            out = [propagate(u, work, p.omega, cfg) for u in p.couplings]
        except TruncationError as exc:
            if not cfg.auto_grow:
                raise
            n = cfg.grown(work.cutoff)
            if n > cfg.ceiling:
                raise TruncationError("cutoff ceiling reached", exc.leakage, n) from exc
            continue
        branches = np.array([o.amplitudes for o in out])
        return OracleResult(branches, work.cutoff, max(o.leakage for o in out))
