"""Phase-space toolkit: conventions, symplectic algebra, conditioning,
and the closed-form fidelity against an independent number-basis oracle."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heraldsqueeze import fock
from heraldsqueeze.exceptions import PhysicalityError
from heraldsqueeze.gaussian import (
    AncillaSpec,
    GaussianState,
    apply,
    beamsplitter,
    coherent,
    condition_on_heterodyne,
    condition_on_homodyne,
    db_to_r,
    db_to_variance,
    displace,
    embed,
    fidelity,
    identity_op,
    loss_channel,
    r_to_db,
    reduce_to_modes,
    rotation,
    squeezed_vacuum,
    squeezer,
    symplectic_form,
    tensor,
    vacuum,
    variance_to_db,
)

from conftest import uhlmann_fidelity


# ---------------------------------------------------------------------------
# conventions

def test_vacuum_convention():
    v = vacuum(1)
    assert np.allclose(v.mean, [0.0, 0.0])
    assert np.allclose(v.cov, np.eye(2))


def test_coherent_mean_convention():
    st_ = coherent(0.3 - 0.7j)
    assert np.allclose(st_.mean, [0.6, -1.4])
    assert np.allclose(st_.cov, np.eye(2))


def test_db_conversions():
    assert db_to_variance(0.0) == pytest.approx(1.0)
    assert db_to_variance(10.0) == pytest.approx(0.1)
    # 2.30 dB target corresponds to the transmissivity 10^-0.23
    assert db_to_variance(2.30) == pytest.approx(10 ** -0.23)
    assert db_to_r(6.0) == pytest.approx(6.0 * math.log(10) / 20.0)
    assert math.exp(-2.0 * db_to_r(3.0)) == pytest.approx(db_to_variance(3.0))


@given(st.floats(-20, 20))
@settings(deadline=None, max_examples=60)
def test_db_roundtrip(s):
    assert variance_to_db(db_to_variance(s)) == pytest.approx(s, abs=1e-12)
    assert r_to_db(db_to_r(s)) == pytest.approx(s, abs=1e-12)


def test_squeezer_action():
    r = 0.42
    out = apply(vacuum(1), squeezer(r))
    assert out.cov[0, 0] == pytest.approx(math.exp(-2 * r))
    assert out.cov[1, 1] == pytest.approx(math.exp(2 * r))


def test_rotation_on_coherent():
    theta = 0.8
    alpha = 0.5 + 0.2j
    out = apply(coherent(alpha), rotation(theta))
    beta = alpha * np.exp(1j * theta)
    assert np.allclose(out.mean, [2 * beta.real, 2 * beta.imag])


def test_ancilla_spec_squeezed_vacuum():
    spec = AncillaSpec(v_sq=db_to_variance(6.0), v_asq=1.0 / db_to_variance(6.0))
    st_ = squeezed_vacuum(spec)
    assert st_.cov[0, 0] == pytest.approx(0.251188643150958)
    assert st_.cov[1, 1] == pytest.approx(3.9810717055349722)
    rotated = squeezed_vacuum(AncillaSpec(spec.v_sq, spec.v_asq, angle=math.pi / 2))
    assert rotated.cov[0, 0] == pytest.approx(st_.cov[1, 1])
    assert rotated.cov[1, 1] == pytest.approx(st_.cov[0, 0])


# ---------------------------------------------------------------------------
# symplectic structure

@given(st.floats(0, 1))
@settings(deadline=None, max_examples=60)
def test_beamsplitter_symplectic_and_self_inverse(t):
    s = beamsplitter(t).matrix
    omega = symplectic_form(2)
    assert np.allclose(s @ omega @ s.T, omega, atol=1e-12)
    assert np.allclose(s @ s, np.eye(4), atol=1e-12)
    assert np.linalg.det(s) == pytest.approx(1.0)


def test_beamsplitter_amplitude_convention():
    # b = sqrt(t) a1 + sqrt(1-t) a2 ; c = sqrt(1-t) a1 - sqrt(t) a2
    t = 0.5888
    s = beamsplitter(t).matrix
    assert s[0, 0] == pytest.approx(math.sqrt(t))
    assert s[0, 2] == pytest.approx(math.sqrt(1 - t))
    assert s[2, 0] == pytest.approx(math.sqrt(1 - t))
    assert s[2, 2] == pytest.approx(-math.sqrt(t))


def test_balanced_beamsplitter_preserves_two_vacua():
    two = tensor(vacuum(1), vacuum(1))
    out = apply(two, beamsplitter(0.5))
    assert np.allclose(out.cov, np.eye(4))
    assert np.allclose(out.mean, 0.0)


@given(st.floats(-1.2, 1.2), st.floats(-math.pi, math.pi))
@settings(deadline=None, max_examples=60)
def test_squeezer_rotation_symplectic(r, theta):
    omega = symplectic_form(1)
    for op in (squeezer(r, theta), rotation(theta)):
        assert np.allclose(op.matrix @ omega @ op.matrix.T, omega, atol=1e-10)


def test_embed_identity_elsewhere():
    op = embed(squeezer(0.3), 3, (1,))
    st3 = apply(tensor(tensor(coherent(1.0), coherent(0.5j)), vacuum(1)), op)
    # untouched modes keep coherent moments
    assert np.allclose(reduce_to_modes(st3, (0,)).mean, [2.0, 0.0])
    assert np.allclose(reduce_to_modes(st3, (2,)).cov, np.eye(2))
    assert reduce_to_modes(st3, (1,)).cov[0, 0] == pytest.approx(math.exp(-0.6))


def test_identity_op():
    st2 = tensor(coherent(0.2), vacuum(1))
    out = apply(st2, identity_op(2))
    assert np.allclose(out.mean, st2.mean)
    assert np.allclose(out.cov, st2.cov)


# ---------------------------------------------------------------------------
# channels

def test_loss_channel_limits():
    st_ = coherent(1.0 + 0.5j)
    assert np.allclose(loss_channel(st_, 0, 1.0).mean, st_.mean)
    # eta -> 0 approaches vacuum; eta = 0 itself is rejected
    dark = loss_channel(st_, 0, 1e-12)
    assert np.allclose(dark.mean, 0.0, atol=1e-5)
    assert np.allclose(dark.cov, np.eye(2), atol=1e-10)
    with pytest.raises(PhysicalityError):
        loss_channel(st_, 0, 0.0)


def test_loss_channel_interpolates():
    eta = 0.7
    st_ = apply(vacuum(1), squeezer(0.5))
    out = loss_channel(st_, 0, eta)
    assert np.allclose(out.cov, eta * st_.cov + (1 - eta) * np.eye(2))
    out.require_physical()


def test_displace():
    out = displace(vacuum(1), 0, 1.2, -0.4)
    assert np.allclose(out.mean, [1.2, -0.4])
    assert np.allclose(out.cov, np.eye(2))


def test_physicality_validation():
    with pytest.raises(PhysicalityError):
        GaussianState(np.zeros(3), np.eye(3))
    with pytest.raises(PhysicalityError):
        GaussianState(np.zeros(2), np.array([[1.0, 0.5], [0.1, 1.0]]))
    bad = GaussianState(np.zeros(2), 0.5 * np.eye(2))
    with pytest.raises(PhysicalityError):
        bad.require_physical()


# ---------------------------------------------------------------------------
# conditioning

def _two_mode_state() -> GaussianState:
    anc = squeezed_vacuum(AncillaSpec(0.4, 2.8, angle=0.3))
    st2 = tensor(coherent(0.4 - 0.2j), anc)
    st2 = apply(st2, beamsplitter(0.65))
    return displace(st2, 1, 0.3, 0.1)


def test_heterodyne_product_state_unchanged():
    st2 = tensor(coherent(0.4 + 0.1j), apply(vacuum(1), squeezer(0.4)))
    out = condition_on_heterodyne(st2, 1, 0.7 - 0.2j)
    assert np.allclose(out.mean, st2.mean[:2], atol=1e-12)
    assert np.allclose(out.cov, st2.cov[:2, :2], atol=1e-12)


def test_heterodyne_equals_split_plus_two_homodynes():
    """Heterodyne conditioning == balanced split with vacuum, then homodyne
    x on the transmitted arm and y on the reflected arm."""
    st2 = _two_mode_state()
    alpha_m = 0.35 - 0.15j
    direct = condition_on_heterodyne(st2, 1, alpha_m)

    st3 = tensor(st2, vacuum(1))
    st3 = apply(st3, embed(beamsplitter(0.5), 3, (1, 2)))
    # outcome scaling: X = x_d / sqrt(t), Y = y_e / sqrt(1-t), alpha = (X+iY)/2
    x_d = math.sqrt(0.5) * 2.0 * alpha_m.real
    y_e = math.sqrt(0.5) * 2.0 * alpha_m.imag
    after_x, _ = condition_on_homodyne(st3, 1, "x", x_d)
    after_xy, _ = condition_on_homodyne(after_x, 1, "y", y_e)
    assert np.allclose(after_xy.mean, direct.mean, atol=1e-10)
    assert np.allclose(after_xy.cov, direct.cov, atol=1e-10)


def test_heterodyne_against_sampled_conditional(rng):
    """Monte-Carlo oracle: sample the joint Gaussian, add the heterodyne
    unit of detection noise, window on the outcome, compare moments."""
    st2 = _two_mode_state()
    alpha0 = 0.2 + 0.1j
    cond = condition_on_heterodyne(st2, 1, alpha0)

    n = 4_000_000
    samples = rng.multivariate_normal(st2.mean, st2.cov, size=n)
    noisy = samples[:, 2:4] + rng.standard_normal((n, 2))
    alpha = 0.5 * (noisy[:, 0] + 1j * noisy[:, 1])
    window = np.abs(alpha - alpha0) < 0.05
    sel = samples[window][:, :2]
    assert sel.shape[0] > 5_000
    assert np.allclose(sel.mean(axis=0), cond.mean, atol=0.04)
    assert np.allclose(np.cov(sel.T), cond.cov, atol=0.06)


def test_homodyne_returns_marginal():
    st2 = _two_mode_state()
    _, (m, v) = condition_on_homodyne(st2, 0, "y", 0.1)
    assert m == pytest.approx(st2.mean[1])
    assert v == pytest.approx(st2.cov[1, 1])


# ---------------------------------------------------------------------------
# fidelity

def test_fidelity_identity_and_symmetry(rng):
    for _ in range(5):
        a = apply(coherent(rng.normal() + 1j * rng.normal()),
                  squeezer(rng.uniform(-0.5, 0.5), rng.uniform(0, math.pi)))
        b = apply(coherent(rng.normal() + 1j * rng.normal()),
                  squeezer(rng.uniform(-0.5, 0.5), rng.uniform(0, math.pi)))
        assert fidelity(a, a) == pytest.approx(1.0, abs=1e-12)
        f_ab = fidelity(a, b)
        assert 0.0 <= f_ab <= 1.0
        assert f_ab == pytest.approx(fidelity(b, a), abs=1e-12)


def test_fidelity_coherent_overlap():
    a, b = 0.4 + 0.3j, -0.2 + 0.6j
    assert fidelity(coherent(a), coherent(b)) == pytest.approx(
        math.exp(-abs(a - b) ** 2), rel=1e-12)


def test_fidelity_vacuum_vs_squeezed():
    r = 0.37
    f = fidelity(vacuum(1), apply(vacuum(1), squeezer(r)))
    assert f == pytest.approx(1.0 / math.cosh(r), rel=1e-12)


def test_fidelity_vacuum_vs_thermal():
    v = 1.9
    f = fidelity(vacuum(1), GaussianState(np.zeros(2), v * np.eye(2)))
    assert f == pytest.approx(2.0 / (1.0 + v), rel=1e-12)


def test_fidelity_unitary_invariance(rng):
    for _ in range(4):
        a = GaussianState([0.3, -0.1], np.diag([0.8, 1.3]))
        b = coherent(0.2 - 0.5j)
        op = rotation(rng.uniform(0, 2 * math.pi))
        assert fidelity(apply(a, op), apply(b, op)) == pytest.approx(
            fidelity(a, b), rel=1e-10)


def test_fidelity_against_number_basis_oracle(rng):
    """Dual-route check: the Gaussian closed form vs Uhlmann fidelity of
    number-basis density matrices built from thermal + squeeze + rotate +
    displace circuits."""
    dim = 70

    def build(v_th, r, theta, beta):
        q = (v_th - 1.0) / (v_th + 1.0)
        weights = (1 - q) * q ** np.arange(dim)
        rho = np.diag(weights / weights.sum()).astype(complex)
        u_sq = fock.squeeze_matrix(r, dim)
        n = np.arange(dim)
        u_rot = np.diag(np.exp(1j * theta * n))
        u_d = fock.displacement_matrix(beta, dim)
        u = u_d @ u_rot @ u_sq
        rho = u @ rho @ u.conj().T
        mean = np.array([2 * beta.real, 2 * beta.imag])
        cov = rotation(theta).matrix @ squeezer(r).matrix @ (v_th * np.eye(2)) \
            @ squeezer(r).matrix.T @ rotation(theta).matrix.T
        return rho, GaussianState(mean, cov)

    for _ in range(4):
        rho_a, st_a = build(rng.uniform(1.0, 2.2), rng.uniform(-0.4, 0.4),
                            rng.uniform(0, math.pi), 0.3 + 0.2j)
        rho_b, st_b = build(rng.uniform(1.0, 2.2), rng.uniform(-0.4, 0.4),
                            rng.uniform(0, math.pi), 0.1 - 0.4j)
        f_oracle = uhlmann_fidelity(rho_a, rho_b)
        f_closed = fidelity(st_a, st_b)
        assert f_closed == pytest.approx(f_oracle, abs=2e-6)


def test_tensor_reduce_roundtrip():
    a = coherent(0.5 + 0.1j)
    b = apply(vacuum(1), squeezer(0.3))
    ab = tensor(a, b)
    assert np.allclose(reduce_to_modes(ab, (0,)).mean, a.mean)
    assert np.allclose(reduce_to_modes(ab, (1,)).cov, b.cov)
