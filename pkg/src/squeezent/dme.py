"""Dressed master equation for the dissipative qubit-cavity-resonator system.

The state lives on qubit (2) x cavity (2) x resonator (``N_f``). Two cavity
levels are exact here: the Hamiltonian conserves photon number and the only
photon-changing jump lowers it, so an initial state inside ``{|0>, |1>}``
never leaves that block.

Integration runs in the frame rotating with ``b^H b``. The qubit-cavity
marginal, trace and spectrum are unchanged by that frame, so reported
measures need no back-transformation; :func:`to_lab_frame` is provided for
comparing full states.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

from . import numkit
from .closedform import SystemParams
from .measures import DensityMatrix, MeasureError, qc_measures
from .oracle import _coherent_squeezed_in

log = logging.getLogger(__name__)

LADDER_CONVENTIONS = ("conventional", "paper")


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, estimates):
        super().__init__(f"{message}: {estimates}")
        self.estimates = estimates


@dataclass(frozen=True)
class DissipationParams:
    """Loss rates in units of the resonator frequency.

    Supply exactly one of ``gamma_d`` (dressed qubit dephasing) or
    ``Gamma_d`` (bare pure dephasing, dressed internally).
    """

    kappa: float
    gamma: float
    Gamma: float
    n_v: float
    gamma_d: float | None = None
    Gamma_d: float | None = None

    def __post_init__(self):
        if (self.gamma_d is None) == (self.Gamma_d is None):
            raise ValueError("supply exactly one of gamma_d or Gamma_d")
        for name in ("kappa", "gamma", "Gamma", "gamma_d", "Gamma_d"):
            v = getattr(self, name)
            if v is not None and (not math.isfinite(v) or v < 0):
                raise ValueError(f"{name} must be a finite non-negative rate, got {v!r}")
        if not (math.isfinite(self.n_v) and self.n_v > 0):
            raise ValueError(f"n_v must be positive, got {self.n_v!r}")

    @property
    def log_ratio(self) -> float:
        return math.log((self.n_v + 1) / self.n_v)

    def dressed_dephasing(self, lam: float) -> float:
        if self.gamma_d is not None:
            return self.gamma_d
        return self.Gamma_d + 4 * self.gamma * lam**2 / self.log_ratio


@dataclass
class LindbladModel:
    """Generator ``-i[H, rho] + sum_k rate_k D[L_k] rho`` on ``2 * 2 * N_f`` levels."""

    params: SystemParams
    dissipation: DissipationParams
    N_f: int
    H: numkit.SparseOperator
    jumps: list[tuple[str, float, numkit.SparseOperator]]
    ladder_convention: str = "conventional"
    dressed: bool = True

    @property
    def dim(self) -> int:
        return 4 * self.N_f

    def rhs_lab(self, rho: np.ndarray) -> np.ndarray:
        """Reference generator via generic sparse products (slow, lab frame)."""
        sa = numkit.sparse_apply
        out = -1j * (sa(self.H, rho) - sa(self.H, rho, "right-adjoint"))
        for _, rate, op in self.jumps:
            if rate == 0:
                continue
            k = op.adjoint() @ op
            jump = sa(op, sa(op, rho, "right-adjoint"))
            out += rate * (jump - 0.5 * (sa(k, rho) + sa(k, rho, "right-adjoint")))
        return out

    def generator(self) -> "BlockGenerator":
        return BlockGenerator(self)


def _qubit_ops(convention: str):
    # basis |0> (excited, sigma_z = +1), |1> (ground)
    if convention not in LADDER_CONVENTIONS:
        raise ValueError(f"ladder_convention must be one of {LADDER_CONVENTIONS}, got {convention!r}")
    scale = 2.0 if convention == "paper" else 1.0
    sm = sp.csr_matrix(np.array([[0, 0], [scale, 0]], dtype=complex))
    sz = sp.csr_matrix(np.diag([1.0, -1.0]).astype(complex))
    return sm, sm.conj().T.tocsr(), sz


def build_model(
    p: SystemParams,
    d: DissipationParams,
    N_f: int = 96,
    ladder_convention: str = "conventional",
    dressed: bool = True,
) -> LindbladModel:
    """Assemble the Hamiltonian and jump operators.

    ``dressed=False`` gives the standard master equation: jumps ``b`` and
    ``b^H`` and no photon-number dephasing from the resonator bath.
    """
    if N_f < 8:
        raise ValueError(f"N_f must be at least 8, got {N_f}")
    nb = N_f
    b = numkit.lowering(nb).csr
    bd = b.conj().T.tocsr()
    iv = sp.identity(nb, dtype=complex, format="csr")
    a = sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))
    na = sp.csr_matrix(np.diag([0.0, 1.0]).astype(complex))
    i2 = sp.identity(2, dtype=complex, format="csr")
    sm, spl, sz = _qubit_ops(ladder_convention)

    def k3(q, c, v):
        return sp.kron(sp.kron(q, c), v, format="csr")

    x = b + bd
    h = k3(i2, i2, bd @ b) - p.lam * k3(sz, i2, x) - p.g * k3(i2, na, x)

    nv = d.n_v
    g_eff = p.g if dressed else 0.0
    jumps = [
        ("b", d.gamma * (nv + 1), k3(i2, i2, b) - g_eff * k3(i2, na, iv)),
        ("b_dag", d.gamma * nv, k3(i2, i2, bd) - g_eff * k3(i2, na, iv)),
        ("a", d.kappa, k3(i2, a, iv)),
        ("sigma_minus", d.Gamma * (nv + 1), k3(sm, i2, iv)),
        ("sigma_plus", d.Gamma * nv, k3(spl, i2, iv)),
        ("sigma_z", d.dressed_dephasing(p.lam) / 2, k3(sz, i2, iv)),
        ("n_a", 4 * d.gamma * p.g**2 / d.log_ratio if dressed else 0.0, k3(i2, na, iv)),
    ]
    return LindbladModel(
        params=p,
        dissipation=d,
        N_f=N_f,
        H=numkit.SparseOperator.from_scipy(h),
        jumps=[(name, float(rate), numkit.SparseOperator.from_scipy(op)) for name, rate, op in jumps],
        ladder_convention=ladder_convention,
        dressed=dressed,
    )


class BlockGenerator:
    """Structured generator in the frame rotating with ``b^H b``.

    The state is held as ``R[s, n, s', m]`` with sector ``s = 2 q + c``.
    Every operator is either a resonator ladder action (a shift along ``n``
    or ``m``) or a per-sector scalar, so the generator reduces to a handful
    of shifted, broadcast multiplications with precomputed coefficients.
    """

    def __init__(self, model: LindbladModel):
        p = model.params
        self.N = n = model.N_f
        q = np.array([0, 0, 1, 1])
        c = np.array([0, 1, 0, 1], dtype=float)
        sz = np.where(q == 0, 1.0, -1.0)
        u = p.lam * sz + p.g * c
        rates = {name: rate for name, rate, _ in model.jumps}
        s2 = 4.0 if model.ladder_convention == "paper" else 1.0
        g = p.g if model.dressed else 0.0

        r_b, r_bd = rates["b"], rates["b_dag"]
        self.kappa = rates["a"]
        self.r_sm = rates["sigma_minus"] * s2
        self.r_sp = rates["sigma_plus"] * s2
        r_z, r_n = rates["sigma_z"], rates["n_a"]
        self.r_b, self.r_bd = r_b, r_bd

        col = lambda v: np.asarray(v).reshape(4, 1, 1, 1)  # noqa: E731
        row = lambda v: np.asarray(v).reshape(1, 1, 4, 1)  # noqa: E731
        num = np.arange(n, dtype=float)
        bbd = num + 1
        bbd[-1] = 0.0  # b b^H loses its top level under truncation

        # diagonal part: per-sector scalars plus -1/2 {r_b b^H b + r_bd b b^H, .}
        k0 = (r_b + r_bd) * g * g * c + self.kappa * c + self.r_sm * (q == 0) + self.r_sp * (q == 1) + r_z + r_n * c
        kdiag = r_b * num + r_bd * bbd
        cc = col(c) * row(c)
        diag = (
            r_z * col(sz) * row(sz)
            + (r_n + (r_b + r_bd) * g * g) * cc
            - 0.5 * (col(k0) + row(k0))
        )
        self.diag = diag + (-0.5) * (kdiag.reshape(1, n, 1, 1) + kdiag.reshape(1, 1, 1, n))

        # coefficients of b R, b^H R, R b and R b^H. Each combines the
        # Hamiltonian -u X, the X part of sum L^H L and the dressed cross terms.
        kx = -(r_b + r_bd) * g * c
        left = 1j * col(u) - 0.5 * col(kx)
        right = -1j * row(u) - 0.5 * row(kx)
        sq = np.sqrt(np.arange(1, n, dtype=float))
        sq_row = sq.reshape(1, n - 1, 1, 1)
        sq_col = sq.reshape(1, 1, 1, n - 1)
        self.c_br = (left - g * r_b * row(c)) * sq_row
        self.c_bdr = (left - g * r_bd * row(c)) * sq_row
        self.c_rb = (right - g * r_bd * col(c)) * sq_col
        self.c_rbd = (right - g * r_b * col(c)) * sq_col
        self.sq = sq
        self._diag = np.ascontiguousarray(np.broadcast_to(self.diag, (4, n, 4, n)), dtype=float)
        self._c_br = np.ascontiguousarray(self.c_br[:, :, :, 0], dtype=complex)
        self._c_bdr = np.ascontiguousarray(self.c_bdr[:, :, :, 0], dtype=complex)
        self._c_rb = np.ascontiguousarray(self.c_rb[:, 0, :, :], dtype=complex)
        self._c_rbd = np.ascontiguousarray(self.c_rbd[:, 0, :, :], dtype=complex)

    def __call__(self, t: float, r: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        r = np.ascontiguousarray(r, dtype=complex)
        if out is None:
            out = np.empty_like(r)
        _generator_kernel(
            r, complex(np.exp(-1j * t)), self._diag, self._c_br, self._c_bdr, self._c_rb, self._c_rbd,
            self.r_b, self.r_bd, self.sq, self.kappa, self.r_sm, self.r_sp, out,
        )
        return out


@numba.njit(cache=True)
def _generator_kernel(r, e, diag, c_br, c_bdr, c_rb, c_rbd, r_b, r_bd, sq, kappa, r_sm, r_sp, out):
    # sector s = 2 q + c; see BlockGenerator for the meaning of each coefficient
    n_lev = r.shape[1]
    ec = e.conjugate()
    for a in range(4):
        qa, ca = a // 2, a % 2
        for b in range(4):
            qb, cb = b // 2, b % 2
            cav = kappa if (ca == 0 and cb == 0) else 0.0
            dn = r_sm if (qa == 1 and qb == 1) else 0.0
            up = r_sp if (qa == 0 and qb == 0) else 0.0
            for n in range(n_lev):
                for m in range(n_lev):
                    v = diag[a, n, b, m] * r[a, n, b, m]
                    if n < n_lev - 1:
                        v += e * c_br[a, n, b] * r[a, n + 1, b, m]
                        if m < n_lev - 1:
                            v += r_b * sq[n] * sq[m] * r[a, n + 1, b, m + 1]
                    if n > 0:
                        v += ec * c_bdr[a, n - 1, b] * r[a, n - 1, b, m]
                        if m > 0:
                            v += r_bd * sq[n - 1] * sq[m - 1] * r[a, n - 1, b, m - 1]
                    if m > 0:
                        v += e * c_rb[a, b, m - 1] * r[a, n, b, m - 1]
                    if m < n_lev - 1:
                        v += ec * c_rbd[a, b, m] * r[a, n, b, m + 1]
                    if cav != 0.0:
                        v += cav * r[a + 1, n, b + 1, m]
                    if dn != 0.0:
                        v += dn * r[a - 2, n, b - 2, m]
                    if up != 0.0:
                        v += up * r[a + 2, n, b + 2, m]
                    out[a, n, b, m] = v
    return out


def to_matrix(r: np.ndarray) -> np.ndarray:
    n = r.shape[1]
    return r.reshape(4 * n, 4 * n)


def to_lab_frame(r: np.ndarray, t: float) -> np.ndarray:
    """Undo the rotating frame: ``rho = U0 R U0^H`` with ``U0 = exp(-i t b^H b)``."""
    n = r.shape[1]
    ph = np.exp(-1j * t * np.arange(n))
    return r * ph.reshape(1, n, 1, 1) * ph.conj().reshape(1, 1, 1, n)


def from_lab_frame(rho: np.ndarray, t: float) -> np.ndarray:
    n = rho.shape[0] // 4
    return to_lab_frame(rho.reshape(4, n, 4, n), -t)


def initial_state(p: SystemParams, N_f: int, growth_factor: float = 1.5) -> tuple[np.ndarray, float]:
    """Product initial state as a ``(4, N, 4, N)`` tensor plus its truncation leakage.

    The resonator state is computed in a larger space, cut to ``N_f`` levels
    and renormalised; the discarded probability is returned.
    """
    work = _coherent_squeezed_in(max(N_f + 8, math.ceil(growth_factor * N_f)), p.beta, p.r, p.phi)
    v = work[:N_f]
    leak = max(0.0, 1.0 - float(np.vdot(v, v).real))
    v = v / np.linalg.norm(v)
    psi = np.kron(np.full(4, 0.5), v).reshape(4, N_f)
    return np.einsum("an,bm->anbm", psi, psi.conj()), leak


def reduced_qc(r: np.ndarray) -> np.ndarray:
    return np.einsum("anbn->ab", r)


def tail_mass(r: np.ndarray, levels: int = 8) -> float:
    """Resonator population in the top ``levels`` Fock states."""
    pop = np.einsum("anan->n", r).real
    return float(pop[-levels:].sum())


@dataclass
class TimeSeries:
    times: np.ndarray
    C_qc: np.ndarray
    tau_sq: np.ndarray
    trace: np.ndarray
    min_eig: np.ndarray
    steps: int
    N_f: int
    final_state: np.ndarray | None = field(default=None, repr=False)
    final_rho_qc: np.ndarray | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> dict[str, float]:
        return {"C_qc": float(self.C_qc[-1]), "tau_sq": float(self.tau_sq[-1])}

    def invariants_ok(self, trace_tol: float = 1e-7, neg_tol: float = 1e-6) -> bool:
        try:
            self.check_invariants(trace_tol, neg_tol)
        except ConvergenceError:
            return False
        return True

    def check_invariants(self, trace_tol: float = 1e-7, neg_tol: float = 1e-6) -> None:
        dev = float(np.max(np.abs(self.trace - 1)))
        if dev >= trace_tol:
            raise ConvergenceError("trace drifted", {"max |tr - 1|": dev})
        lo = float(np.min(self.min_eig))
        if lo <= -neg_tol:
            raise ConvergenceError("state lost positivity", {"min eigenvalue": lo})


def _rk4(gen, r, t0, t1, steps, n_samples):
    h = (t1 - t0) / steps
    sample_at = set(np.linspace(0, steps, n_samples + 1).round().astype(int).tolist())
    snaps = [(t0, r)] if 0 in sample_at else []
    t = t0
    for k in range(1, steps + 1):
        k1 = gen(t, r)
        k2 = gen(t + h / 2, r + (h / 2) * k1)
        k3 = gen(t + h / 2, r + (h / 2) * k2)
        k4 = gen(t + h, r + h * k3)
        r = r + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + k * h
        if k in sample_at:
            snaps.append((t, r))
    return r, snaps


def _measure_qc(rho_qc: np.ndarray) -> tuple[float, float]:
    rho_qc = 0.5 * (rho_qc + rho_qc.conj().T)
    rho_qc = rho_qc / np.trace(rho_qc).real
    m = qc_measures(DensityMatrix((2, 2), rho_qc))
    return m["C_qc"], m["tau_sq"]


def _series(snaps, steps, n):
    times, cs, ts, trs, mins = [], [], [], [], []
    for t, r in snaps:
        mat = to_matrix(r)
        herm = 0.5 * (mat + mat.conj().T)
        trs.append(float(np.trace(mat).real))
        mins.append(float(np.linalg.eigvalsh(herm)[0]))
        cq, tq = _measure_qc(reduced_qc(r))
        times.append(t)
        cs.append(cq)
        ts.append(tq)
    return TimeSeries(np.array(times), np.array(cs), np.array(ts), np.array(trs), np.array(mins), steps, n)


def default_steps(model: LindbladModel, omega_end: float, h_norm: float = 1.0) -> int:
    """Steps keeping ``h`` times the generator's largest rate near ``h_norm``.

    The rate bound adds the rotating-frame Hamiltonian norm ``2 |u| sqrt(N)``
    to the thermal jump strength at the top Fock level.
    """
    u = max(abs(x) for x in model.params.couplings)
    rates = {name: rate for name, rate, _ in model.jumps}
    bound = 2 * u * math.sqrt(model.N_f) + (rates["b"] + rates["b_dag"]) * model.N_f + 1.0
    return max(16, math.ceil(omega_end * bound / h_norm))


def integrate(
    model: LindbladModel,
    rho0: np.ndarray,
    omega_end: float,
    steps: int | None = None,
    n_samples: int = 8,
    tol: float = 1e-4,
    max_doublings: int = 3,
) -> TimeSeries:
    """Fixed-step RK4 from 0 to ``omega_end`` with step-halving certification.

    A run at ``steps`` is compared with one at ``2 * steps``; the finer run is
    accepted when final ``C_qc`` and ``tau^2`` move by less than ``tol`` and
    its trace and positivity checks pass. Otherwise steps keep doubling up
    to ``max_doublings`` times.
    """
    n = model.N_f
    r0 = np.asarray(rho0, dtype=complex).reshape(4, n, 4, n)
    gen = model.generator()
    steps = steps or default_steps(model, omega_end)

    def run(k):
        rf, snaps = _rk4(gen, r0, 0.0, omega_end, k, n_samples)
        try:
            series = _series(snaps, k, n)
        except MeasureError as exc:
            # an unstable step size leaves no valid state to measure
            log.debug("steps %d: %s", k, exc)
            return rf, None
        return rf, series

    def summary(series):
        return series.final if series is not None else {"error": "invalid state"}

    coarse_r, coarse = run(steps)
    history = [(steps, summary(coarse))]
    for _ in range(max_doublings):
        steps *= 2
        fine_r, fine = run(steps)
        history.append((steps, summary(fine)))
        if fine is None or coarse is None:
            coarse = fine
            continue
        delta = max(abs(fine.final[k] - coarse.final[k]) for k in ("C_qc", "tau_sq"))
        log.debug("steps %d: delta %.3e", steps, delta)
        if delta < tol and fine.invariants_ok():
            fine.final_state = fine_r
            fine.final_rho_qc = reduced_qc(fine_r)
            fine.meta["step_history"] = history
            fine.meta["halving_delta"] = delta
            fine.meta["mixed_state_coa"] = True
            return fine
        coarse = fine
    raise ConvergenceError("step halving did not converge", history)


def simulate(
    p: SystemParams,
    d: DissipationParams,
    N_f: int = 96,
    ladder_convention: str = "conventional",
    dressed: bool = True,
    steps: int | None = None,
    leak_tol: float | None = None,
    tail_tol: float | None = None,
    regrow: bool = True,
    n_samples: int = 8,
) -> TimeSeries:
    """Build, initialise and integrate to ``p.omega``; check the cutoff.

    ``leak_tol`` bounds the initial truncation loss and ``tail_tol`` the
    final population in the top 8 Fock levels. A failed check triggers one
    regrowth of ``N_f`` by 1.5; a second failure raises.
    """
    n = N_f
    for attempt in range(2 if regrow else 1):
        model = build_model(p, d, n, ladder_convention, dressed)
        rho0, leak = initial_state(p, n)
        ok = leak_tol is None or leak < leak_tol
        if ok:
            series = integrate(model, rho0, p.omega, steps, n_samples=n_samples)
            series.check_invariants()
            tail = tail_mass(series.final_state)
            series.meta.update(initial_leakage=leak, final_tail=tail, ladder_convention=ladder_convention)
            if tail_tol is None or tail < tail_tol:
                return series
            log.info("N_f=%d: final tail %.3e exceeds %.1e", n, tail, tail_tol)
        else:
            log.info("N_f=%d: initial leakage %.3e exceeds %.1e", n, leak, leak_tol)
        n = math.ceil(1.5 * n)
    raise ConvergenceError("resonator cutoff insufficient", {"N_f": n, "initial_leakage": leak})


def sweep_fig6(
    p: SystemParams,
    d: DissipationParams,
    kappas,
    gammas,
    panel: str,
    **kw,
) -> list[dict]:
    """Final-time ``C_qc`` and ``tau^2`` over a ``kappa x gamma`` grid.

    ``panel='qc'`` sets ``phi = pi``; ``panel='qcv'`` sets ``phi = 2 pi``.
    """
    phis = {"qc": math.pi, "qcv": 2 * math.pi}
    if panel not in phis:
        raise ValueError(f"panel must be 'qc' or 'qcv', got {panel!r}")
    pp = p.replace(phi=phis[panel])
    rows = []
    for gamma in gammas:
        for kappa in kappas:
            dd = DissipationParams(kappa=kappa, gamma=gamma, Gamma=d.Gamma, n_v=d.n_v,
                                   gamma_d=d.gamma_d, Gamma_d=d.Gamma_d)
            s = simulate(pp, dd, **kw)
            rows.append({"panel": panel, "kappa": kappa, "gamma": gamma,
                         "C_qc_final": s.final["C_qc"], "tau_sq_final": s.final["tau_sq"],
                         "N_f": s.N_f, "steps": s.steps})
    return rows
