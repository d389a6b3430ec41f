import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from squeezent import closedform as cf
from squeezent import dme
from squeezent.closedform import SystemParams
from squeezent.dme import ConvergenceError, DissipationParams
from squeezent.measures import measure_all
from squeezent.oracle import TruncationConfig, oracle_state

G1, L1 = 1 / math.sqrt(2), 1 / math.sqrt(72)
FIG6 = DissipationParams(kappa=0.2, gamma=1e-2, Gamma=1e-3, n_v=50, gamma_d=1e-2)
ZERO = DissipationParams(kappa=0, gamma=0, Gamma=0, n_v=50, gamma_d=0)


def rand_herm(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a + a.conj().T


def rand_density(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def h0_commutator(rho, n):
    # i [b^H b, rho] on the full space
    num = np.tile(np.arange(n, dtype=float), 4)
    return 1j * (num[:, None] * rho - rho * num[None, :])


# -- parameters and model ----------------------------------------------------

def test_dissipation_validation():
    with pytest.raises(ValueError, match="exactly one"):
        DissipationParams(kappa=0, gamma=0, Gamma=0, n_v=1)
    with pytest.raises(ValueError, match="exactly one"):
        DissipationParams(kappa=0, gamma=0, Gamma=0, n_v=1, gamma_d=0.1, Gamma_d=0.1)
    with pytest.raises(ValueError, match="kappa"):
        DissipationParams(kappa=-1, gamma=0, Gamma=0, n_v=1, gamma_d=0)
    with pytest.raises(ValueError, match="n_v"):
        DissipationParams(kappa=0, gamma=0, Gamma=0, n_v=0, gamma_d=0)


def test_dressed_dephasing():
    d = DissipationParams(kappa=0, gamma=1e-2, Gamma=0, n_v=50, Gamma_d=1e-3)
    assert d.dressed_dephasing(0.3) == pytest.approx(1e-3 + 4e-2 * 0.09 / math.log(51 / 50))
    assert FIG6.dressed_dephasing(0.3) == 1e-2


def test_build_model_terms():
    p = SystemParams(g=G1, lam=L1, omega=3 * math.pi, r=1.0)
    m = dme.build_model(p, FIG6, 16)
    assert m.dim == 64
    rates = {name: rate for name, rate, _ in m.jumps}
    assert rates == pytest.approx({
        "b": 1e-2 * 51, "b_dag": 1e-2 * 50, "a": 0.2, "sigma_minus": 1e-3 * 51, "sigma_plus": 1e-3 * 50,
        "sigma_z": 5e-3, "n_a": 4e-2 * 0.5 / math.log(51 / 50),
    })
    assert all(rate >= 0 for rate in rates.values())
    np.testing.assert_allclose(m.H.dense(), m.H.dense().conj().T)
    with pytest.raises(ValueError):
        dme.build_model(p, FIG6, 4)
    with pytest.raises(ValueError):
        dme.build_model(p, FIG6, 16, ladder_convention="other")


def test_zero_coupling_reduces_to_standard_equation():
    p = SystemParams(g=0.0, lam=0.0, omega=3 * math.pi, r=0.5)
    dressed = dme.build_model(p, FIG6, 12)
    plain = dme.build_model(p, FIG6, 12, dressed=False)
    assert dict((n, r) for n, r, _ in dressed.jumps)["n_a"] == 0.0
    rho = rand_density(np.random.default_rng(0), 48)
    np.testing.assert_allclose(dressed.rhs_lab(rho), plain.rhs_lab(rho), atol=1e-14)


def test_zero_rates_is_pure_commutator():
    p = SystemParams(g=0.4, lam=0.2, omega=1.0, r=0.5)
    m = dme.build_model(p, ZERO, 10)
    rho = rand_density(np.random.default_rng(1), 40)
    h = m.H.dense()
    np.testing.assert_allclose(m.rhs_lab(rho), -1j * (h @ rho - rho @ h), atol=1e-13)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_generator_hermitian_traceless(seed):
    rng = np.random.default_rng(seed)
    p = SystemParams(g=G1, lam=L1, omega=3 * math.pi, r=2.0, phi=math.pi)
    m = dme.build_model(p, FIG6, 12)
    out = m.rhs_lab(rand_herm(rng, 48))
    assert np.max(np.abs(out - out.conj().T)) < 1e-10
    assert abs(np.trace(out)) < 1e-10


def test_fig6_generator_trace_preserving():
    rng = np.random.default_rng(6)
    p = SystemParams(g=G1, lam=L1, omega=3 * math.pi, r=2.0, phi=math.pi)
    for conv in dme.LADDER_CONVENTIONS:
        m = dme.build_model(p, FIG6, 96, ladder_convention=conv)
        gen = m.generator()
        for _ in range(10):
            rho = rand_herm(rng, m.dim)
            assert abs(np.trace(m.rhs_lab(rho))) < 1e-12 * np.max(np.abs(rho)) * m.dim
            fast = dme.to_matrix(gen(0.3, rho.reshape(4, 96, 4, 96)))
            assert abs(np.trace(fast)) < 1e-12 * np.max(np.abs(rho)) * m.dim


ONE_AT_A_TIME = [
    dict(kappa=0.3, gamma=0, Gamma=0, gamma_d=0),
    dict(kappa=0, gamma=0.02, Gamma=0, gamma_d=0),
    dict(kappa=0, gamma=0, Gamma=0.01, gamma_d=0),
    dict(kappa=0, gamma=0, Gamma=0, gamma_d=0.05),
    dict(kappa=0.2, gamma=1e-2, Gamma=1e-3, gamma_d=1e-2),
]


@pytest.mark.parametrize("rates", ONE_AT_A_TIME)
@pytest.mark.parametrize("conv", dme.LADDER_CONVENTIONS)
@pytest.mark.parametrize("dressed", [True, False])
def test_block_generator_matches_sparse_reference(rates, conv, dressed):
    n = 10
    rng = np.random.default_rng(2)
    p = SystemParams(g=0.6, lam=0.25, omega=3 * math.pi, r=0.5)
    m = dme.build_model(p, DissipationParams(n_v=3, **rates), n, conv, dressed)
    gen = m.generator()
    rho = rand_density(rng, 4 * n)
    for t in (0.0, 0.7, 2.9):
        # d/dt of the rotating-frame state is U0^H (L rho + i [H0, rho]) U0
        lab = dme.to_lab_frame(rho.reshape(4, n, 4, n), t).reshape(4 * n, 4 * n)
        ref = m.rhs_lab(lab) + h0_commutator(lab, n)
        ref = dme.from_lab_frame(ref, t)
        assert np.max(np.abs(gen(t, rho.reshape(4, n, 4, n)) - ref)) < 1e-13


def test_scaled_ladder_is_four_times_relaxation():
    n = 8
    p = SystemParams(g=0.6, lam=0.25, omega=1.0)
    base = dict(kappa=0.1, gamma=0.01, n_v=2, gamma_d=0.02)
    paper = dme.build_model(p, DissipationParams(Gamma=0.01, **base), n, "paper").generator()
    conv = dme.build_model(p, DissipationParams(Gamma=0.04, **base), n, "conventional").generator()
    r = rand_density(np.random.default_rng(3), 4 * n).reshape(4, n, 4, n)
    np.testing.assert_allclose(paper(0.4, r), conv(0.4, r), atol=1e-15)


def test_frame_roundtrip():
    r = rand_density(np.random.default_rng(4), 24)
    back = dme.from_lab_frame(dme.to_lab_frame(r.reshape(4, 6, 4, 6), 1.3).reshape(24, 24), 1.3)
    np.testing.assert_allclose(dme.to_matrix(back), r, atol=1e-15)


def test_initial_state():
    p = SystemParams(g=0.5, lam=0.2, omega=1.0, r=1.0, phi=0.2, beta=0.3)
    r0, leak = dme.initial_state(p, 32)
    mat = dme.to_matrix(r0)
    assert abs(np.trace(mat) - 1) < 1e-14
    assert 0 <= leak < 1e-3
    np.testing.assert_allclose(dme.reduced_qc(r0), np.full((4, 4), 0.25), atol=1e-14)
    assert np.linalg.matrix_rank(mat, tol=1e-12) == 1


# -- integration -------------------------------------------------------------

def test_lossless_matches_closed_form_and_oracle():
    p = SystemParams(g=G1, lam=L1, omega=3 * math.pi, r=0.5, phi=math.pi)
    s = dme.simulate(p, ZERO, N_f=32)
    closed = measure_all(cf.evolved_state(p))
    assert s.final["C_qc"] == pytest.approx(closed.C_qc, abs=5e-4)
    assert s.final["tau_sq"] == pytest.approx(closed.tau_sq, abs=5e-4)
    orc = oracle_state(p, TruncationConfig(N_f=32)).rho_qc().matrix
    np.testing.assert_allclose(s.final_rho_qc, orc, atol=1e-5)
    s.check_invariants()
    assert s.meta["mixed_state_coa"] is True
    assert len(s.times) == 9 and s.times[-1] == pytest.approx(3 * math.pi)


def test_cavity_damping_kills_photon_coherence():
    p = SystemParams(g=0.5, lam=0.2, omega=3 * math.pi, r=0.3)
    d = DissipationParams(kappa=3.0, gamma=0, Gamma=0, n_v=50, gamma_d=0)
    m = dme.build_model(p, d, 16)
    r0, _ = dme.initial_state(p, 16)
    gen = m.generator()
    _, snaps = dme._rk4(gen, r0, 0.0, 3 * math.pi, 2000, 20)
    coh = [np.abs(r[[0, 2]][:, :, [1, 3]]).sum() for _, r in snaps]
    assert all(b <= a + 1e-12 for a, b in zip(coh, coh[1:]))
    # photon coherences decay at kappa / 2
    assert coh[-1] < 2 * math.exp(-3.0 * 3 * math.pi / 2) * coh[0]


def test_step_halving_failure_reports_estimates():
    p = SystemParams(g=0.5, lam=0.2, omega=3 * math.pi, r=0.3)
    m = dme.build_model(p, FIG6, 12)
    r0, _ = dme.initial_state(p, 12)
    with pytest.raises(ConvergenceError) as exc:
        dme.integrate(m, r0, 3 * math.pi, steps=20, tol=0.0, max_doublings=1)
    assert len(exc.value.estimates) == 2


def test_invariant_checks():
    s = dme.TimeSeries(np.zeros(2), np.zeros(2), np.zeros(2), np.array([1.0, 1 + 1e-6]), np.zeros(2), 10, 8)
    with pytest.raises(ConvergenceError, match="trace"):
        s.check_invariants()
    s = dme.TimeSeries(np.zeros(2), np.zeros(2), np.zeros(2), np.ones(2), np.array([0, -2e-6]), 10, 8)
    with pytest.raises(ConvergenceError, match="positivity"):
        s.check_invariants()
    assert not s.invariants_ok()


def test_cutoff_regrowth():
    p = SystemParams(g=0.5, lam=0.2, omega=math.pi, r=1.0)
    d = DissipationParams(kappa=0.1, gamma=0, Gamma=0, n_v=50, gamma_d=0)
    s = dme.simulate(p, d, N_f=16, leak_tol=1e-3)
    assert s.N_f == 24
    assert s.meta["initial_leakage"] < 1e-3
    with pytest.raises(ConvergenceError, match="cutoff"):
        dme.simulate(p, d, N_f=8, leak_tol=1e-12)


def test_small_sweep_monotone_in_kappa():
    p = SystemParams(g=G1, lam=L1, omega=3 * math.pi, r=0.5)
    d = DissipationParams(kappa=0, gamma=1e-5, Gamma=1e-3, n_v=50, gamma_d=1e-2)
    rows = dme.sweep_fig6(p, d, [0.02, 0.1, 0.2], [1e-5], "qc", N_f=24)
    cs = [row["C_qc_final"] for row in rows]
    assert cs[0] > cs[1] > cs[2]
    assert {row["panel"] for row in rows} == {"qc"}
    with pytest.raises(ValueError):
        dme.sweep_fig6(p, d, [0.1], [1e-5], "xx")
