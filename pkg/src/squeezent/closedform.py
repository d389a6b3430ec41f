"""Analytic dynamics of the dispersive qubit-cavity-resonator model.

The qubit state ``|q>`` (``sigma_z = +1`` for ``q = 0``) and the cavity photon
number ``c in {0, 1}`` select a displaced-oscillator branch with coupling
``u = lam * s_q + g * c``. Each branch drives the coherent-squeezed resonator
into a state ``|xi_u>``; the four branch states are orthonormalised by
Gram-Schmidt in the order ``u = lam, g + lam, -lam, g - lam``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from decimal import Decimal, localcontext

import numpy as np

# A Gram-Schmidt residual norm below this collapses the basis vector.
DEGENERACY_EPS = 1e-12
# Squared Gram-Schmidt pivots below this send the closed forms to the
# numerical fallback; their subtractions lose ~eps / pivot^2 of accuracy.
PIVOT_FLOOR = 1e-6
# Finite stand-in for r -> infinity.
R_INFINITY = 12.0


@dataclass(frozen=True)
class SystemParams:
    """Dimensionless model knobs, all couplings scaled by the resonator frequency.

    ``omega`` is the evolution phase (resonator frequency times time),
    ``r``/``phi`` the squeezing amplitude and phase and ``beta`` the real
    coherent amplitude.
    """

    g: float
    lam: float
    omega: float
    r: float = 0.0
    phi: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        for name in ("g", "lam", "omega", "r", "phi", "beta"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.g < 0 or self.lam < 0:
            raise ValueError(f"couplings must be non-negative, got g={self.g}, lam={self.lam}")
        if self.r < 0:
            raise ValueError(f"squeezing amplitude must be non-negative, got r={self.r}")

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    @property
    def couplings(self) -> tuple[float, float, float, float]:
        """Branch couplings ``(lam, g + lam, -lam, g - lam)``."""
        return (self.lam, self.g + self.lam, -self.lam, self.g - self.lam)


def trig(omega: float) -> tuple[float, float]:
    """``(sin, cos)`` of ``omega`` with exact values at integer multiples of pi.

    Without the snap ``sin(3*pi)`` is ~4e-16, which leaves a spurious
    ``beta`` dependence at points where it must vanish identically.
    """
    k = round(omega / math.pi)
    if abs(omega - k * math.pi) <= 1e-12 * max(1.0, abs(omega)):
        return 0.0, (1.0 if k % 2 == 0 else -1.0)
    return math.sin(omega), math.cos(omega)


def kerr_angle(omega: float) -> float:
    return omega - trig(omega)[0]


def squeeze_f(r: float, phi: float, omega: float) -> float:
    """Squeezing function controlling how fast branch states separate."""
    if r < 0:
        raise ValueError(f"r must be non-negative, got {r}")
    _, c = trig(omega)
    _, c_rel = trig(omega - phi)
    return (1.0 - c) * (math.cosh(2 * r) - math.sinh(2 * r) * c_rel)


def _branch_phase(u: float, p: SystemParams) -> complex:
    # <xi_u1|xi_u2> = conj(P(u1)) P(u2) exp(-(u2 - u1)^2 f)
    s, _ = trig(p.omega)
    return complex(np.exp(1j * (u * u * kerr_angle(p.omega) + 2 * p.beta * u * s)))


def overlap(u1: float, u2: float, p: SystemParams) -> complex:
    """Inner product ``<xi_u1|xi_u2>`` of two branch states."""
    if u1 == u2:
        return 1.0 + 0.0j
    s, _ = trig(p.omega)
    theta = kerr_angle(p.omega)
    f = squeeze_f(p.r, p.phi, p.omega)
    d = u2 - u1
    phase = (u2 * u2 - u1 * u1) * theta + 2 * p.beta * d * s
    return complex(np.exp(1j * phase) * math.exp(-d * d * f))


def gram_matrix(p: SystemParams) -> np.ndarray:
    """``G[i, j] = <xi_i|xi_j>`` over the four branches."""
    u = p.couplings
    return np.array([[overlap(ui, uj, p) for uj in u] for ui in u])


@dataclass(frozen=True)
class OrthoCoefficients:
    """Expansion of the branch states in their Gram-Schmidt basis.

    Row ``i`` of :attr:`matrix` holds ``<k|xi_i>`` for ``k = 0..3``, so
    ``a = matrix[1, :2]``, ``b = matrix[2, :3]`` and ``c = matrix[3]``.
    """

    a: tuple[complex, complex]
    b: tuple[complex, complex, complex]
    c: tuple[complex, complex, complex, complex]
    rank: int
    method: str = field(default="formula", compare=False)

    @property
    def matrix(self) -> np.ndarray:
        m = np.zeros((4, 4), dtype=complex)
        m[0, 0] = 1.0
        m[1, :2] = self.a
        m[2, :3] = self.b
        m[3, :4] = self.c
        return m

    def gram(self) -> np.ndarray:
        """Gram matrix ``<xi_i|xi_j>`` reconstructed from the coefficients."""
        m = self.matrix
        return m.conj() @ m.T


def _formula_coefficients(p: SystemParams) -> OrthoCoefficients | None:
    """Closed-form coefficients, or None when a squared pivot is below ``PIVOT_FLOOR``."""
    g, lam, beta = p.g, p.lam, p.beta
    f = squeeze_f(p.r, p.phi, p.omega)
    s, _ = trig(p.omega)
    th = kerr_angle(p.omega)
    e = math.exp
    cis = lambda x: complex(np.exp(1j * x))  # noqa: E731

    a0 = cis(g * (g + 2 * lam) * th) * cis(2 * beta * g * s) * e(-g * g * f)
    a1_sq = -math.expm1(-2 * g * g * f)
    if a1_sq < PIVOT_FLOOR:
        return None
    a1 = math.sqrt(a1_sq)

    norm1 = 1 / a1
    bracket_b = e(-((g + 2 * lam) ** 2) * f) - e(-g * g * f) * e(-4 * lam * lam * f)
    b0 = cis(-4 * beta * lam * s) * e(-4 * lam * lam * f)
    b1 = cis(-g * (g + 2 * lam) * th) * cis(-2 * beta * (g + 2 * lam) * s) * norm1 * bracket_b
    b2_sq = 1 - abs(b0) ** 2 - abs(b1) ** 2
    if b2_sq < PIVOT_FLOOR:
        return None
    b2 = math.sqrt(b2_sq)

    bracket_c = e(-4 * lam * lam * f) - e(-((g - 2 * lam) ** 2) * f) * e(-g * g * f)
    c0 = cis(g * (g - 2 * lam) * th) * cis(2 * beta * (g - 2 * lam) * s) * e(-((g - 2 * lam) ** 2) * f)
    c1 = cis(-4 * g * lam * th) * cis(-4 * beta * lam * s) * norm1 * bracket_c
    norm2 = 1 / b2
    c2 = (
        cis(g * (g - 2 * lam) * th)
        * cis(2 * beta * g * s)
        * norm2
        * (
            e(-g * g * f)
            - e(-4 * lam * lam * f) * e(-((g - 2 * lam) ** 2) * f)
            - norm1 ** 2 * bracket_c * bracket_b
        )
    )
    c3_sq = 1 - abs(c0) ** 2 - abs(c1) ** 2 - abs(c2) ** 2
    if c3_sq < PIVOT_FLOOR:
        return None
    c3 = math.sqrt(c3_sq)
    return OrthoCoefficients((a0, a1), (b0, b1, b2), (c0, c1, c2, c3), rank=4, method="formula")


def _numerical_coefficients(p: SystemParams) -> OrthoCoefficients:
    # G = conj(P) M P with M real; orthonormalise the real problem, then
    # restore phases so that normalisers stay real and non-negative.
    # Near-parallel branches make the residuals 1 - sum k^2 pure cancellation,
    # so the 4x4 real problem runs in 50-digit decimal arithmetic: exact
    # twins (du = 0 or f = 0) leave ~1e-50 and genuine small gaps survive.
    u = p.couplings
    f = squeeze_f(p.r, p.phi, p.omega)
    phases = np.array([_branch_phase(ui, p) for ui in u])
    with localcontext() as ctx:
        ctx.prec = 50
        fd = Decimal(f)
        ud = [Decimal(x) for x in u]
        mod = [[Decimal(1)] * 4 for _ in range(4)]
        for i in range(4):
            for j in range(i + 1, 4):
                mod[i][j] = mod[j][i] = (-((ud[j] - ud[i]) ** 2) * fd).exp()
        kd = [[Decimal(0)] * 4 for _ in range(4)]
        owner: list[int] = []  # branch index that generated each basis vector
        floor = Decimal(DEGENERACY_EPS) ** 2
        for i in range(4):
            for slot, j in enumerate(owner):
                acc = mod[j][i] - sum((kd[j][s] * kd[i][s] for s in range(slot)), Decimal(0))
                kd[i][slot] = acc / kd[j][slot]
            n = len(owner)
            res2 = mod[i][i] - sum((kd[i][s] ** 2 for s in range(n)), Decimal(0))
            if res2 > floor:
                kd[i][n] = res2.sqrt()
                owner.append(i)
        k = np.array([[float(x) for x in row] for row in kd])

    coef = np.zeros((4, 4), dtype=complex)
    for slot, j in enumerate(owner):
        coef[:, slot] = phases * phases[j].conjugate() * k[:, slot]
        coef[j, slot] = k[j, slot]  # normaliser stays exactly real
    rank = len(owner)
    return OrthoCoefficients(
        (coef[1, 0], coef[1, 1]),
        (coef[2, 0], coef[2, 1], coef[2, 2]),
        (coef[3, 0], coef[3, 1], coef[3, 2], coef[3, 3]),
        rank=rank,
        method="numerical",
    )


def ortho_coefficients(p: SystemParams) -> OrthoCoefficients:
    """Gram-Schmidt coefficients of the four branch states.

    Well-conditioned points use the closed-form expressions. When a branch
    state is nearly in the span of the earlier ones the closed forms divide
    by near-zero norms, so the basis is built from the analytic overlaps in
    extended precision instead and the rank drops for exactly dependent states.
    """
    co = _formula_coefficients(p)
    return co if co is not None else _numerical_coefficients(p)


@dataclass(frozen=True)
class PureTripartiteState:
    """Amplitudes indexed ``(qubit, cavity, vibration)``."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        if amp.ndim != 3 or amp.shape[:2] != (2, 2):
            raise ValueError(f"amplitudes must have shape (2, 2, n), got {amp.shape}")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.amplitudes.shape)

    @property
    def vector(self) -> np.ndarray:
        return self.amplitudes.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


def evolved_state(p: SystemParams, coeffs: OrthoCoefficients | None = None) -> PureTripartiteState:
    """Evolved state in the orthonormalised vibrational basis (``n_v = 4``)."""
    coeffs = coeffs or ortho_coefficients(p)
    return PureTripartiteState(0.5 * coeffs.matrix.reshape(2, 2, 4))


def fidelity_max(p: SystemParams, coeffs: OrthoCoefficients | None = None) -> float:
    """Fidelity with the maximally entangled state of local rank (2, 2, 4)."""
    co = coeffs or ortho_coefficients(p)
    a1, b2, c3 = co.a[1].real, co.b[2].real, co.c[3].real
    return (1 + a1 + b2 + c3) ** 2 / 16


def limit_negativity_qv(p: SystemParams) -> float:
    """Qubit-resonator negativity in the cavity-decoupled limit ``g = 0``."""
    if p.g != 0:
        raise ValueError(f"qubit-resonator limit requires g = 0, got g={p.g}")
    f = squeeze_f(p.r, p.phi, p.omega)
    return math.sqrt(-math.expm1(-8 * p.lam**2 * f))


def limit_negativity_cv(p: SystemParams) -> float:
    """Cavity-resonator negativity in the qubit-decoupled limit ``lam = 0``."""
    if p.lam != 0:
        raise ValueError(f"cavity-resonator limit requires lam = 0, got lam={p.lam}")
    f = squeeze_f(p.r, p.phi, p.omega)
    return math.sqrt(-math.expm1(-2 * p.g**2 * f))
