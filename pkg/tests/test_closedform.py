import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from squeezent import closedform as cf
from squeezent.closedform import SystemParams
from squeezent.measures import measure_all

G1, L1 = 1 / math.sqrt(2), 1 / math.sqrt(72)
FIG1 = SystemParams(g=G1, lam=L1, omega=3 * math.pi, r=2.2, phi=0.0)

coupling = st.floats(0, 1, allow_nan=False)
params = st.builds(
    SystemParams,
    g=coupling,
    lam=coupling,
    omega=st.floats(0, 6 * math.pi),
    r=st.floats(0, 3),
    phi=st.floats(0, 4 * math.pi),
    beta=st.floats(-2, 2),
)


def test_params_validation():
    with pytest.raises(ValueError):
        SystemParams(g=-1, lam=0, omega=0)
    with pytest.raises(ValueError):
        SystemParams(g=0, lam=0, omega=0, r=-0.1)
    with pytest.raises(ValueError):
        SystemParams(g=0, lam=0, omega=float("nan"))
    assert FIG1.couplings == (L1, G1 + L1, -L1, G1 - L1)
    assert FIG1.replace(r=1.0).r == 1.0


# -- squeezing function ------------------------------------------------------

@given(st.floats(0, 5), st.floats(-10, 10))
def test_squeeze_f_vanishes_at_two_pi(r, phi):
    assert cf.squeeze_f(r, phi, 2 * math.pi) == 0.0


def test_squeeze_f_unsqueezed():
    assert cf.squeeze_f(0.0, 1.234, 3 * math.pi) == 2.0


@given(st.floats(0, 4), st.floats(0, 2 * math.pi))
def test_squeeze_f_three_pi_form(r, phi):
    expect = math.exp(2 * r) * (1 + math.cos(phi)) + math.exp(-2 * r) * (1 - math.cos(phi))
    assert cf.squeeze_f(r, phi, 3 * math.pi) == pytest.approx(expect, rel=1e-12, abs=1e-12)


@given(st.floats(0, 5), st.floats(-20, 20), st.floats(-20, 20))
def test_squeeze_f_non_negative(r, phi, omega):
    assert cf.squeeze_f(r, phi, omega) >= 0


def test_squeeze_f_rejects_negative_r():
    with pytest.raises(ValueError):
        cf.squeeze_f(-1, 0, 1)


def test_trig_snap():
    assert cf.trig(3 * math.pi) == (0.0, -1.0)
    assert cf.trig(2 * math.pi) == (0.0, 1.0)
    assert cf.trig(1.0) == (math.sin(1.0), math.cos(1.0))


# -- overlaps ----------------------------------------------------------------

@given(params, st.floats(-2, 2))
def test_overlap_self_is_one(p, u):
    assert cf.overlap(u, u, p) == 1.0


@given(params, st.floats(-2, 2), st.floats(-2, 2))
def test_overlap_modulus(p, u1, u2):
    ov = cf.overlap(u1, u2, p)
    assert abs(ov) <= 1 + 1e-15
    assert cf.overlap(u2, u1, p) == pytest.approx(ov.conjugate(), abs=1e-12)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 3), st.floats(0, 6), st.floats(-2, 2))
def test_overlap_two_pi_pure_phase(g, lam, r, phi, beta):
    assume(g > 0)
    p = SystemParams(g=g, lam=lam, omega=2 * math.pi, r=r, phi=phi, beta=beta)
    assert abs(cf.overlap(lam, g + lam, p)) == pytest.approx(1.0, abs=1e-15)


def test_overlap_first_pair_is_a0():
    for p in (FIG1, FIG1.replace(phi=math.pi, beta=0.7, omega=2.5)):
        co = cf.ortho_coefficients(p)
        assert cf.overlap(p.lam, p.g + p.lam, p) == pytest.approx(co.a[0], abs=1e-15)


# -- Gram-Schmidt coefficients -----------------------------------------------

def test_coefficients_trivial_point():
    co = cf.ortho_coefficients(SystemParams(g=0, lam=0, omega=3 * math.pi, r=1.0))
    assert co.rank == 1
    assert co.a[0] == co.b[0] == co.c[0] == 1
    m = co.matrix
    assert np.count_nonzero(m[:, 1:]) == 0


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.4), st.floats(0, 3), st.floats(0, 2 * math.pi), st.floats(0.1, 6 * math.pi))
def test_qutrit_rank_three(lam, r, phi, omega):
    p = SystemParams(g=2 * lam, lam=lam, omega=omega, r=r, phi=phi)
    f = cf.squeeze_f(r, phi, omega)
    g_min = min((u2 - u1) ** 2 for i, u1 in enumerate(p.couplings) for u2 in p.couplings[i + 1:] if u2 != u1)
    assume(math.exp(-g_min * f) < 1 - 1e-9)
    co = cf.ortho_coefficients(p)
    assert co.rank == 3
    assert co.c[3] == 0
    np.testing.assert_allclose(co.gram(), cf.gram_matrix(p), atol=1e-9)


def test_fig1_a0():
    co = cf.ortho_coefficients(FIG1)
    f = 2 * math.exp(4.4)
    assert cf.squeeze_f(2.2, 0.0, 3 * math.pi) == pytest.approx(f, rel=1e-14)
    assert abs(co.a[0]) == pytest.approx(math.exp(-G1 * G1 * f), abs=1e-300)
    assert co.a[1] == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(params)
def test_coefficient_invariants(p):
    co = cf.ortho_coefficients(p)
    m = co.matrix
    np.testing.assert_allclose(np.sum(np.abs(m) ** 2, axis=1), 1.0, atol=1e-10)
    for x in (co.a[1], co.b[2], co.c[3]):
        assert complex(x).imag == 0 and complex(x).real >= 0
    assert np.all(m[:, co.rank:] == 0)
    # Gram consistency: analytic overlap matrix is Hermitian PSD and reproduced
    gram = cf.gram_matrix(p)
    np.testing.assert_allclose(gram, gram.conj().T, atol=1e-15)
    assert np.linalg.eigvalsh(gram)[0] >= -1e-10
    assert np.max(np.abs(co.gram() - gram)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(params)
def test_formula_matches_cholesky(p):
    # independent route: G^T = m m^H with m lower triangular and a positive diagonal
    gram = cf.gram_matrix(p)
    assume(np.linalg.eigvalsh(gram)[0] > 1e-6)
    co = cf.ortho_coefficients(p)
    assert co.method == "formula"
    chol = np.linalg.cholesky(gram.T)
    np.testing.assert_allclose(co.matrix, chol, atol=1e-7)


def test_numerical_fallback_matches_formula_near_boundary():
    p = SystemParams(g=0.3, lam=0.2, omega=1.3, r=0.4, phi=0.5, beta=0.3)
    form = cf._formula_coefficients(p)
    num = cf._numerical_coefficients(p)
    np.testing.assert_allclose(form.matrix, num.matrix, atol=1e-12)


@pytest.mark.parametrize(
    "p, rank",
    [
        (SystemParams(g=0.0, lam=0.3, omega=3 * math.pi, r=1.0), 2),
        (SystemParams(g=0.4, lam=0.0, omega=3 * math.pi, r=1.0), 2),
        (SystemParams(g=0.4, lam=0.3, omega=2 * math.pi, r=1.0), 1),
        (SystemParams(g=0.4, lam=0.2, omega=3 * math.pi, r=1.0), 3),
        (SystemParams(g=0.4, lam=0.3, omega=3 * math.pi, r=1.0), 4),
    ],
)
def test_rank_limits(p, rank):
    assert cf.ortho_coefficients(p).rank == rank


# -- evolved state, fidelity, limits -----------------------------------------

def test_evolved_state_product_at_zero_coupling():
    st_ = cf.evolved_state(SystemParams(g=0, lam=0, omega=3 * math.pi, r=2.0))
    expect = np.zeros((2, 2, 4))
    expect[:, :, 0] = 0.5
    np.testing.assert_allclose(st_.amplitudes, expect, atol=0)
    assert st_.dims == (2, 2, 4)


@given(params)
def test_evolved_state_unit_norm(p):
    assert cf.evolved_state(p).norm() == pytest.approx(1.0, abs=1e-10)


def test_two_pi_kerr_phases():
    p = SystemParams(g=0.37, lam=0.21, omega=2 * math.pi, r=1.5, phi=0.4, beta=0.9)
    co = cf.ortho_coefficients(p)
    assert co.rank == 1
    amp = cf.evolved_state(p).amplitudes.reshape(4, 4)
    u = np.array(p.couplings)
    expect = 0.5 * np.exp(1j * (u**2 - u[0] ** 2) * 2 * math.pi)
    np.testing.assert_allclose(amp[:, 0], expect, atol=1e-12)
    assert np.all(amp[:, 1:] == 0)


def test_fidelity_limits():
    assert cf.fidelity_max(FIG1.replace(r=cf.R_INFINITY)) == pytest.approx(1.0, abs=1e-6)
    assert cf.fidelity_max(FIG1.replace(r=cf.R_INFINITY, phi=math.pi)) == pytest.approx(1 / 16, abs=1e-6)
    assert cf.fidelity_max(SystemParams(g=0, lam=0, omega=1.0)) == 1 / 16


@given(params)
def test_fidelity_range(p):
    assert 1 / 16 - 1e-12 <= cf.fidelity_max(p) <= 1 + 1e-12


def test_beta_irrelevant_at_three_pi():
    base = SystemParams(g=0.6, lam=0.15, omega=3 * math.pi, r=0.8, phi=1.1)
    ref = measure_all(cf.evolved_state(base))
    for beta in (1.0, 5.0):
        assert measure_all(cf.evolved_state(base.replace(beta=beta))) == ref
        assert cf.fidelity_max(base.replace(beta=beta)) == cf.fidelity_max(base)


def test_limit_qv_examples():
    p = SystemParams(g=0, lam=L1, omega=3 * math.pi, r=2.2, phi=math.pi)
    expect = math.sqrt(1 - math.exp(-8 / 72 * 2 * math.exp(-4.4)))
    assert cf.limit_negativity_qv(p) == pytest.approx(expect, rel=1e-12)
    assert cf.limit_negativity_qv(p) == pytest.approx(0.052, abs=5e-4)
    assert cf.limit_negativity_qv(p.replace(phi=0.0)) == pytest.approx(1.0, abs=1e-7)
    assert cf.limit_negativity_qv(p.replace(lam=0.0)) == 0.0
    with pytest.raises(ValueError):
        cf.limit_negativity_qv(p.replace(g=0.1))


def test_limit_cv_examples():
    p = SystemParams(g=G1, lam=0, omega=3 * math.pi, r=2.2, phi=math.pi)
    expect = math.sqrt(1 - math.exp(-2 * 0.5 * 2 * math.exp(-4.4)))
    assert cf.limit_negativity_cv(p) == pytest.approx(expect, rel=1e-12)
    assert cf.limit_negativity_cv(p) == pytest.approx(0.156, abs=5e-4)
    assert cf.limit_negativity_cv(p.replace(g=0.0)) == 0.0
    assert cf.limit_negativity_cv(p.replace(omega=4 * math.pi)) == 0.0
    with pytest.raises(ValueError):
        cf.limit_negativity_cv(p.replace(lam=0.1))
