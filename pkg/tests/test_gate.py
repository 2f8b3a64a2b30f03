"""Gate engine: geometry, unity gain, deterministic limit, heralded output
and the fidelity/success tradeoff."""

from __future__ import annotations

import math

import numpy as np
import pytest

from heraldsqueeze.exceptions import (
    FilterBreakdownError,
    OperationalRegimeError,
    UnityGainError,
)
from heraldsqueeze.filters import FilterSpec
from heraldsqueeze.gate import (
    CutoffRule,
    GateConfig,
    conventional_output,
    deterministic_limit,
    heralded_output,
    joint_moments,
    outcome_moments,
    solve_gains_from_gamma,
    solved_config,
    target_state,
    tradeoff_curve,
    unity_gain_solve,
)
from heraldsqueeze.gaussian import (
    AncillaSpec,
    apply,
    coherent,
    db_to_r,
    db_to_variance,
    fidelity,
    squeezer,
    vacuum,
)

ANC6 = AncillaSpec(v_sq=db_to_variance(6.0), v_asq=1.0 / db_to_variance(6.0))
R2DB = db_to_r(2.0)


def _config(g_f=1.0, *, t_m=1.0, cutoff=CutoffRule("coverage", 0.999),
            anc=ANC6, r_t=R2DB, **kw):
    return solved_config(r_t, anc, g_f, cutoff, t_m=t_m, **kw)


# ---------------------------------------------------------------------------
# geometry

def test_transmissivity_matches_target():
    cfg = _config()
    assert cfg.t_s == pytest.approx(0.6309573444801932, rel=1e-12)
    assert cfg.t_s == pytest.approx(math.exp(-2.0 * R2DB), rel=1e-14)


def test_unity_gain_feedforward_frozen_value():
    # y-quadrature gain at gamma = 1, t_m = 1:
    # g_y = (1/sqrt(t_s) - sqrt(t_s)) / sqrt(1 - t_s)
    cfg = _config()
    t_s = cfg.t_s
    expected = (1 / math.sqrt(t_s) - math.sqrt(t_s)) / math.sqrt(1 - t_s)
    assert cfg.gains[1] == pytest.approx(expected, rel=1e-12)
    assert cfg.gains[1] == pytest.approx(0.7647831015792083, rel=1e-12)


def test_unity_gain_mean_mapping():
    """Output mean equals the squeezed input mean for every input."""
    for t_m in (1.0, 0.5):
        s_t = np.diag([math.exp(-R2DB), math.exp(R2DB)])
        for alpha in (0.0, 0.4 + 0.2j, -0.9 + 1.1j):
            cfg = _config(1.6, t_m=t_m, input_state=coherent(alpha))
            res = heralded_output(cfg, coherent(alpha))
            assert np.allclose(res.output.mean, s_t @ coherent(alpha).mean,
                               atol=1e-10)


def test_unity_gain_solve_balanced_split_x_gain_zero():
    """At t_m = 1/2 and gamma = 1 the transmitted-path scaling already
    produces the squeezed x quadrature, so the x feedforward vanishes."""
    _, gains = unity_gain_solve(R2DB, 0.5, ANC6,
                                FilterSpec(1.0, 5.0, dims=2))
    assert gains[0] == pytest.approx(0.0, abs=1e-12)


def test_output_variances_at_unit_gamma():
    """t_m = 1: Var(x_out) = t_s Vin_x + (1-t_s) v_sq; Var(y_out) = 1/t_s."""
    cfg = _config()
    res = heralded_output(cfg, vacuum(1))
    t_s = cfg.t_s
    assert res.output.cov[0, 0] == pytest.approx(
        t_s * 1.0 + (1 - t_s) * ANC6.v_sq, rel=1e-12)
    assert res.output.cov[1, 1] == pytest.approx(1.0 / t_s, rel=1e-12)


def test_target_state():
    st = target_state(coherent(0.5 - 0.3j), R2DB)
    ref = apply(coherent(0.5 - 0.3j), squeezer(R2DB))
    assert np.allclose(st.mean, ref.mean)
    assert np.allclose(st.cov, ref.cov)


def test_outcome_moments_topologies():
    """t_m = 1 measures one quadrature; t_m < 1 measures two, with the
    balanced split reproducing the heterodyne POVM covariance."""
    mu1, d1 = outcome_moments(0.631, 1.0, ANC6, 1.0, vacuum(1))
    assert mu1.shape == (1,) and d1.shape == (1, 1)
    mu2, d2 = outcome_moments(0.631, 0.5, ANC6, 1.0, coherent(0.3 + 0.2j))
    assert mu2.shape == (2,) and d2.shape == (2, 2)
    # heterodyne POVM: quadrature covariance of the measured mode + unity
    # vacuum unit from the idle port
    mixed_cov = 0.5 * np.eye(2) * (1 - 0.631)  # reflected input share ...
    # cross-check via joint moments instead of re-deriving here:
    mu_q, s_qq, s_qm, mu_m, d = joint_moments(0.631, 0.5, ANC6, 1.0,
                                              coherent(0.3 + 0.2j))
    assert np.allclose(d, d2)
    assert np.allclose(mu_m, mu2)


# ---------------------------------------------------------------------------
# deterministic limit and reduction

def test_deterministic_limit_frozen_values():
    assert deterministic_limit(ANC6, R2DB) == pytest.approx(
        0.9651775593737907, rel=1e-10)
    anc_eq = ANC6
    assert deterministic_limit(anc_eq, db_to_r(6.0)) == pytest.approx(
        0.8529872303339104, rel=1e-10)


def test_deterministic_limit_equals_conventional_gate():
    cfg = _config()
    res = conventional_output(cfg, coherent(0.7 - 0.4j))
    assert res.fidelity == pytest.approx(deterministic_limit(ANC6, R2DB),
                                         rel=1e-12)
    assert res.success_probability == pytest.approx(1.0)


def test_heralded_reduces_to_conventional_at_gf_one(rng):
    """g_f = 1 reduction identity on randomized configurations."""
    for _ in range(20):
        target_db = rng.uniform(0.5, 6.0)
        anc_db = rng.uniform(target_db + 0.5, 9.0)
        anc = AncillaSpec(db_to_variance(anc_db),
                          1.0 / db_to_variance(anc_db) * rng.uniform(1.0, 1.3))
        t_m = rng.choice([1.0, 0.5])
        alpha = rng.normal(scale=0.5) + 1j * rng.normal(scale=0.5)
        cfg = solved_config(db_to_r(target_db), anc, 1.0,
                            CutoffRule("coverage", 0.999), t_m=t_m,
                            eta_inloop=rng.uniform(0.9, 1.0))
        her = heralded_output(cfg, coherent(alpha))
        conv = conventional_output(cfg, coherent(alpha))
        assert her.fidelity == pytest.approx(conv.fidelity, abs=1e-10)
        assert np.allclose(her.output.mean, conv.output.mean, atol=1e-10)
        assert np.allclose(her.output.cov, conv.output.cov, atol=1e-10)


# ---------------------------------------------------------------------------
# heralded output

def test_heralding_purifies_toward_target():
    """Fidelity increases with filter strength and the output approaches a
    pure state (det cov -> 1)."""
    dets, fids = [], []
    for g_f in (1.0, 1.5, 2.0, 2.5):
        res = heralded_output(_config(g_f), vacuum(1))
        dets.append(float(np.linalg.det(res.output.cov)))
        fids.append(res.fidelity)
    assert np.all(np.diff(fids) > 0)
    assert np.all(np.diff(dets) < 0)
    assert dets[-1] < dets[0]


def test_heralded_fidelity_mean_independent():
    f0 = heralded_output(_config(1.7), vacuum(1)).fidelity
    for alpha in (0.5, 1.2j, -0.8 + 0.9j):
        cfg = _config(1.7, input_state=coherent(alpha))
        assert heralded_output(cfg, coherent(alpha)).fidelity == pytest.approx(
            f0, abs=1e-11)


def test_filter_breakdown_raises():
    with pytest.raises(FilterBreakdownError):
        heralded_output(_config(9.0), vacuum(1))


def test_operational_regime_floor():
    """A cutoff far below the outcome spread leaves most accepted mass in
    the unconditional tail: the analytic model must refuse."""
    cfg = solved_config(R2DB, ANC6, 2.0, 0.05)  # fixed tiny cutoff
    with pytest.raises(OperationalRegimeError):
        heralded_output(cfg, vacuum(1))


def test_eta_knobs_degrade_fidelity():
    base = heralded_output(_config(1.5), vacuum(1)).fidelity
    lossy_loop = heralded_output(_config(1.5, eta_inloop=0.9), vacuum(1)).fidelity
    lossy_ver = heralded_output(_config(1.5, eta_verify=0.9), vacuum(1)).fidelity
    assert lossy_loop < base
    assert lossy_ver < base


def test_gain_override_changes_mean_map():
    cfg = _config(1.0, gains=(0.0, 0.0))
    assert cfg.gain_override
    res = heralded_output(cfg, coherent(1.0j))
    s_t = np.diag([math.exp(-R2DB), math.exp(R2DB)])
    assert not np.allclose(res.output.mean, s_t @ coherent(1.0j).mean,
                           atol=1e-3)


def test_solve_gains_from_gamma_consistency():
    """Feeding the gamma matrix of the solved filter back through the
    gain solver reproduces the stored gains."""
    cfg = _config(1.8)
    mu_m, d = outcome_moments(cfg.t_s, cfg.t_m, ANC6, 1.0, vacuum(1))
    v = d / 4.0
    gamma = np.array([[1.0 / (1.0 - 2.0 * cfg.filter.lam * v[0, 0])]])
    t_s, gains = solve_gains_from_gamma(R2DB, 1.0, ANC6, 1.0, gamma,
                                        t_s=cfg.t_s)
    assert t_s == pytest.approx(cfg.t_s)
    assert gains[1] == pytest.approx(cfg.gains[1], rel=1e-10)


def test_solve_gains_cross_tol_rejects_skewed_gamma():
    gamma = np.array([[2.0, 0.4], [0.4, 1.5]])
    with pytest.raises(UnityGainError):
        solve_gains_from_gamma(R2DB, 0.5, ANC6, 1.0, gamma, cross_tol=1e-9)


# ---------------------------------------------------------------------------
# tradeoff curve

def test_tradeoff_curve_endpoint_and_monotonicity():
    grid = np.linspace(1.0, 2.6, 9)
    points = tradeoff_curve(ANC6, R2DB, grid, CutoffRule("coverage", 0.999))
    assert len(points) == 9
    assert points[0].g_f == pytest.approx(1.0)
    assert points[0].success_probability == pytest.approx(1.0, abs=1e-9)
    assert points[0].fidelity == pytest.approx(
        deterministic_limit(ANC6, R2DB), rel=1e-10)
    fids = [p.fidelity for p in points]
    probs = [p.success_probability for p in points]
    assert np.all(np.diff(fids) > 0)
    assert np.all(np.diff(probs) < 0)


def test_tradeoff_reaches_high_fidelity_with_nonzero_success():
    points = tradeoff_curve(ANC6, R2DB, np.linspace(1.0, 3.1, 25),
                            CutoffRule("coverage", 0.999))
    best = max(points, key=lambda p: p.fidelity)
    assert best.fidelity >= 0.99
    assert best.success_probability > 0.0


def test_sweep_point_fields():
    pts = tradeoff_curve(ANC6, R2DB, [1.0], CutoffRule("coverage", 0.99))
    p = pts[0]
    assert list(p.__dataclass_fields__) == [
        "g_f", "alpha_c", "success_probability", "fidelity", "fidelity_stderr"]
    assert p.fidelity_stderr == 0.0


# ---------------------------------------------------------------------------
# cutoff rules

def test_cutoff_rule_kinds():
    fixed = solved_config(R2DB, ANC6, 1.5, 3.0)
    assert fixed.filter.alpha_c == pytest.approx(3.0)
    cov = solved_config(R2DB, ANC6, 1.5, CutoffRule("coverage", 0.999))
    embrace = solved_config(R2DB, ANC6, 1.5, CutoffRule("embrace", 2.0))
    auto = solved_config(R2DB, ANC6, 1.5, CutoffRule("embrace", float("nan")))
    for cfg in (cov, embrace, auto):
        assert cfg.filter.alpha_c > 0.5
    with pytest.raises(ValueError):
        CutoffRule("bogus", 1.0).resolve(1.5, np.zeros(1), np.eye(1), 2)


def test_gate_config_validation():
    with pytest.raises(ValueError):
        GateConfig(r_t=-0.1, ancilla=ANC6, t_s=0.6, t_m=1.0,
                   gains=(0.0, 0.5), filter=FilterSpec(1.0, 1.0))
    with pytest.raises(ValueError):
        GateConfig(r_t=R2DB, ancilla=ANC6, t_s=1.4, t_m=1.0,
                   gains=(0.0, 0.5), filter=FilterSpec(1.0, 1.0))
