"""Analytic composition of the heralded measurement-and-feedforward
squeezing gate.

Topology (modes numbered left to right):

* mode 0 — input state; mode 1 — squeezed-vacuum ancilla.
* The two are mixed on a beamsplitter of transmissivity ``t_s``; mode 0
  becomes the kept (output) mode, mode 1 the measured mode.
* An in-loop efficiency ``eta_inloop`` acts on the measured mode.
* ``t_m = 1``: the quadrature conjugate to the ancilla's squeezed axis
  (``y`` for ``angle = 0``) is homodyned, a one-dimensional outcome.
* ``t_m < 1``: the measured mode is split on a beamsplitter of
  transmissivity ``t_m`` with vacuum; ``x`` is homodyned on one output and
  ``y`` on the other.  The unbiased outcome estimates are
  ``X = x/sqrt(t_m)`` and ``Y = y/sqrt(1 - t_m)`` (at ``t_m = 1/2`` this is
  exactly a heterodyne measurement).
* The heralding filter accepts or rejects based on the outcome in
  alpha-units (``alpha_m = (X + iY)/2``, or ``Y/2`` for ``t_m = 1``).
* Accepted outcomes are rescaled by electronic gains and applied as a
  displacement on the kept mode.

The heralded output ensemble is computed from the joint Gaussian of the
kept-mode quadratures and the outcome estimates: the outcome marginal is
reshaped by the filter and the conditional structure is left untouched,
giving

    cov_out = (S_qq - W D W^T) + (W + G) D_f (W + G)^T
    mu_out  = mu_q + W (mu_f - mu_m) + G mu_f

with ``W = S_qm D^{-1}``, ``G`` the gain matrix and ``(mu_f, D_f)`` the
reshaped outcome moments.  At ``g_f = 1`` this reduces algebraically to
plain linear propagation, which `conventional_output` implements as an
independent code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gaussian as g
from .exceptions import (
    FilterBreakdownError,
    OperationalRegimeError,
    UnityGainError,
)
from .filters import FilterSpec, filtered_moments, minimal_coverage_cutoff, \
    recommended_cutoff
from .gaussian import AncillaSpec, GaussianState

__all__ = [
    "GateConfig",
    "GateResult",
    "SweepPoint",
    "CutoffRule",
    "target_state",
    "unity_gain_solve",
    "solve_gains_from_gamma",
    "conventional_output",
    "heralded_output",
    "deterministic_limit",
    "tradeoff_curve",
    "solved_config",
    "joint_moments",
    "outcome_moments",
]


@dataclass(frozen=True)
class GateConfig:
    """Full gate parameterization."""

    r_t: float
    ancilla: AncillaSpec
    t_s: float
    t_m: float
    gains: tuple[float, float]
    filter: FilterSpec
    eta_inloop: float = 1.0
    eta_verify: float = 1.0
    regime_min_coverage: float = 0.98
    gain_override: bool = False

    def __post_init__(self) -> None:
        if self.r_t < 0.0:
            raise ValueError("target squeezing parameter must be >= 0")
        for name in ("t_s", "t_m", "eta_inloop", "eta_verify"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        expected_dims = 1 if self.t_m == 1.0 else 2
        if self.filter.dims != expected_dims:
            raise ValueError(
                f"filter dims {self.filter.dims} inconsistent with t_m = {self.t_m} "
                f"(expected {expected_dims})")
        if self.filter.dims == 1 and self.gains[0] != 0.0:
            raise ValueError("t_m = 1 has no x outcome; g_x must be 0")

    @property
    def outcome_dims(self) -> int:
        return self.filter.dims


@dataclass(frozen=True)
class GateResult:
    """Output state, target, fidelity, success probability and the
    pre-measurement marginal (mean, covariance) of the in-loop outcome
    estimates (quadrature units)."""

    output: GaussianState
    target: GaussianState
    fidelity: float
    success_probability: float
    outcome_marginal: tuple[np.ndarray, np.ndarray]
    gain_override: bool = False


@dataclass(frozen=True)
class SweepPoint:
    g_f: float
    alpha_c: float
    success_probability: float
    fidelity: float
    fidelity_stderr: float = 0.0


@dataclass(frozen=True)
class CutoffRule:
    """How the cutoff is chosen along a sweep.

    * ``kind = "fixed"`` — ``value`` is the cutoff itself.
    * ``kind = "coverage"`` — smallest cutoff keeping a fraction ``value``
      of the filtered ensemble inside (default 0.98).
    * ``kind = "embrace"`` — linear rule
      ``alpha_c = g_f^2 |alpha_m| + beta g_f sigma / sqrt(2)`` with
      ``beta = value`` (``nan`` selects the default beta that restores
      0.98 coverage).
    """

    kind: str = "coverage"
    value: float = 0.98

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "coverage", "embrace"):
            raise ValueError(f"unknown cutoff rule kind {self.kind!r}")

    def resolve(self, g_f: float, mean_alpha: np.ndarray, cov_alpha: np.ndarray,
                dims: int) -> float:
        if self.kind == "fixed":
            return float(self.value)
        if self.kind == "coverage":
            return minimal_coverage_cutoff(g_f, mean_alpha, cov_alpha, dims,
                                           coverage=float(self.value))
        sigma = math.sqrt(float(np.max(np.linalg.eigvalsh(np.atleast_2d(cov_alpha)))))
        beta = None if math.isnan(self.value) else float(self.value)
        return recommended_cutoff(g_f, float(np.linalg.norm(mean_alpha)), sigma,
                                  beta, dims=dims)


# ---------------------------------------------------------------------------
# joint moments of (kept-mode quadratures, outcome estimates)

def joint_moments(t_s: float, t_m: float, ancilla: AncillaSpec, eta_inloop: float,
                  input_state: GaussianState):
    """Joint Gaussian moments of the kept mode and the outcome estimates.

    Returns ``(mu_q, S_qq, S_qm, mu_m, D)`` where ``q`` indexes the kept
    mode's quadratures and ``m`` the measurement estimates (length 1 for
    ``t_m = 1``, else 2), all in quadrature units.
    """
    if input_state.nmodes != 1:
        raise ValueError("the gate takes a single-mode input")
    st = g.tensor(input_state, g.squeezed_vacuum(ancilla))
    st = g.apply(st, g.beamsplitter(t_s))
    st = g.loss_channel(st, 1, eta_inloop)
    if t_m == 1.0:
        sel = np.array([3])  # y quadrature of the measured mode
        lmat = np.zeros((1, 4))
        lmat[0, 3] = 1.0
    else:
        st = g.tensor(st, g.vacuum(1))
        st = g.apply(st, g.embed(g.beamsplitter(t_m), 3, (1, 2)))
        lmat = np.zeros((2, 6))
        lmat[0, 2] = 1.0 / math.sqrt(t_m)        # X estimate from x of mode 1
        lmat[1, 5] = 1.0 / math.sqrt(1.0 - t_m)  # Y estimate from y of mode 2
    mu = st.mean
    cov = st.cov
    mu_q = mu[:2].copy()
    s_qq = cov[:2, :2].copy()
    s_qm = cov[:2, :] @ lmat.T
    mu_m = lmat @ mu
    d = lmat @ cov @ lmat.T
    return mu_q, s_qq, s_qm, mu_m, d


def outcome_moments(t_s: float, t_m: float, ancilla: AncillaSpec, eta_inloop: float,
                    input_state: GaussianState):
    """Pre-measurement outcome-estimate moments ``(mu_m, D)``."""
    _, _, _, mu_m, d = joint_moments(t_s, t_m, ancilla, eta_inloop, input_state)
    return mu_m, d


def _mean_maps(t_s: float, t_m: float, ancilla: AncillaSpec, eta_inloop: float):
    """Linear coefficients (P, M) of the input mean in the kept-mode mean
    and the outcome-estimate mean."""
    k = 1 if t_m == 1.0 else 2
    p = np.zeros((2, 2))
    m = np.zeros((k, 2))
    for j, unit in enumerate((np.array([1.0, 0.0]), np.array([0.0, 1.0]))):
        probe = GaussianState(unit, np.eye(2))
        mu_q, _, _, mu_m, _ = joint_moments(t_s, t_m, ancilla, eta_inloop, probe)
        p[:, j] = mu_q
        m[:, j] = mu_m
    return p, m


def _gain_matrix(config: GateConfig) -> np.ndarray:
    g_x, g_y = config.gains
    if config.outcome_dims == 1:
        return np.array([[0.0], [g_y]])
    return np.diag([g_x, g_y])


# ---------------------------------------------------------------------------
# target and gain solving

def target_state(input_state: GaussianState, r_t: float) -> GaussianState:
    """Ideal target: the input squeezed by ``r_t`` (squeezes x)."""
    return g.apply(input_state, g.squeezer(r_t))


def solve_gains_from_gamma(r_t: float, t_m: float, ancilla: AncillaSpec,
                           eta_inloop: float, gamma_matrix: np.ndarray,
                           t_s: float | None = None,
                           cross_tol: float = 1e-9) -> tuple[float, tuple[float, float]]:
    """Electronic gains making the heralded output mean equal the target
    mean for every coherent input, given the outcome-reshaping matrix
    ``Gamma`` (the filtered-to-raw outcome amplification, k x k).

    Shared by `unity_gain_solve` (analytic Gamma) and by the Monte Carlo
    gain calibration (empirical Gamma, which needs a looser ``cross_tol``
    for its sampling noise).
    """
    t_s = math.exp(-2.0 * r_t) if t_s is None else t_s
    k = 1 if t_m == 1.0 else 2
    gamma_matrix = np.atleast_2d(np.asarray(gamma_matrix, dtype=float))
    if gamma_matrix.shape != (k, k):
        raise ValueError(f"Gamma must be {k} x {k}")
    _, s_qq, s_qm, _, d = joint_moments(
        t_s, t_m, ancilla, eta_inloop, g.vacuum(1))
    w = np.linalg.solve(d.T, s_qm.T).T
    p, m = _mean_maps(t_s, t_m, ancilla, eta_inloop)
    s_t = np.diag([math.exp(-r_t), math.exp(r_t)])
    resid = s_t - p - w @ (gamma_matrix - np.eye(k)) @ m
    gm = gamma_matrix @ m
    scale = max(1.0, float(np.max(np.abs(s_t))))
    if k == 1:
        # no x outcome: the x row must already be satisfied
        if np.max(np.abs(resid[0, :])) > cross_tol * scale:
            raise UnityGainError(
                "no gain choice restores the x mean map (residual "
                f"{resid[0, :]}); with t_m = 1 only the measured quadrature "
                "can be corrected")
        if abs(gm[0, 0]) > cross_tol or abs(resid[1, 0]) > cross_tol * scale:
            raise UnityGainError("x-to-y mean coupling cannot be corrected")
        g_y = float(resid[1, 1] / gm[0, 1])
        return t_s, (0.0, g_y)
    full = resid @ np.linalg.inv(gm)
    if max(abs(full[0, 1]), abs(full[1, 0])) > cross_tol * scale:
        raise UnityGainError(
            "unity gain requires cross-quadrature gains, which the gate "
            "does not provide (ancilla axis not aligned with x/y?)")
    return t_s, (float(full[0, 0]), float(full[1, 1]))


def unity_gain_solve(r_t: float, t_m: float, ancilla: AncillaSpec,
                     filter_spec: FilterSpec,
                     eta_inloop: float = 1.0) -> tuple[float, tuple[float, float]]:
    """Beamsplitter transmissivity (``t_s = exp(-2 r_t)``) and electronic
    gains for unity-gain operation under the given filter."""
    t_s = math.exp(-2.0 * r_t)
    k = 1 if t_m == 1.0 else 2
    if filter_spec.dims != k:
        raise ValueError(f"filter dims {filter_spec.dims} inconsistent with t_m = {t_m}")
    _, d = outcome_moments(t_s, t_m, ancilla, eta_inloop, g.vacuum(1))
    try:
        gamma = _gamma_matrix(filter_spec, d)
    except FilterBreakdownError as exc:
        raise UnityGainError(f"no unity-gain solution: {exc}") from exc
    return solve_gains_from_gamma(r_t, t_m, ancilla, eta_inloop, gamma, t_s=t_s)


def _gamma_matrix(spec: FilterSpec, d_quad: np.ndarray) -> np.ndarray:
    """Outcome-reshaping matrix Gamma (identical in quadrature and alpha
    units) for a raw outcome covariance in quadrature units."""
    d_alpha = np.atleast_2d(d_quad) / 4.0
    mean_f, cov_f, _, _, _ = filtered_moments(
        spec, np.zeros(spec.dims), d_alpha)
    return np.linalg.solve(d_alpha.T, cov_f.T).T


# ---------------------------------------------------------------------------
# gate outputs

def _finish(config: GateConfig, input_state: GaussianState, mu_out, s_out,
            p_success: float, mu_m, d) -> GateResult:
    output = GaussianState(mu_out, s_out)
    verified = output if config.eta_verify == 1.0 else g.loss_channel(
        output, 0, config.eta_verify)
    target = target_state(input_state, config.r_t)
    fid = g.fidelity(verified, target)
    return GateResult(output=output, target=target, fidelity=fid,
                      success_probability=p_success,
                      outcome_marginal=(np.atleast_1d(mu_m), np.atleast_2d(d)),
                      gain_override=config.gain_override)


def conventional_output(config: GateConfig, input_state: GaussianState) -> GateResult:
    """Deterministic (g_f = 1) gate by plain linear propagation — an
    independent code path against which the heralded assembly reduces."""
    if config.filter.g_f != 1.0:
        raise ValueError("conventional_output requires a g_f = 1 configuration")
    mu_q, s_qq, s_qm, mu_m, d = joint_moments(
        config.t_s, config.t_m, config.ancilla, config.eta_inloop, input_state)
    gain = _gain_matrix(config)
    s_out = s_qq + s_qm @ gain.T + gain @ s_qm.T + gain @ d @ gain.T
    mu_out = mu_q + gain @ mu_m
    return _finish(config, input_state, mu_out, s_out, 1.0, mu_m, d)


def heralded_output(config: GateConfig, input_state: GaussianState) -> GateResult:
    """Heralded gate output under the filter (see module docstring)."""
    mu_q, s_qq, s_qm, mu_m, d = joint_moments(
        config.t_s, config.t_m, config.ancilla, config.eta_inloop, input_state)
    spec = config.filter
    mean_f_a, cov_f_a, _, coverage, p_success = filtered_moments(
        spec, mu_m / 2.0, d / 4.0)
    if spec.g_f > 1.0 and coverage < config.regime_min_coverage - 1e-12:
        raise OperationalRegimeError(
            f"operational regime exceeded: filtered coverage {coverage:.6f} < "
            f"{config.regime_min_coverage} (cutoff alpha_c = {spec.alpha_c:.6g} "
            "too small for this input)")
    mu_f = 2.0 * mean_f_a
    d_f = 4.0 * cov_f_a
    gain = _gain_matrix(config)
    w = np.linalg.solve(d.T, s_qm.T).T
    s_cond = s_qq - w @ d @ w.T
    wg = w + gain
    s_out = s_cond + wg @ d_f @ wg.T
    mu_out = mu_q + w @ (mu_f - mu_m) + gain @ mu_f
    return _finish(config, input_state, mu_out, s_out, p_success, mu_m, d)


def deterministic_limit(ancilla: AncillaSpec, r_t: float, t_m: float = 1.0) -> float:
    """Fidelity of the deterministic (g_f = 1) gate under ideal conditions
    (no loss), as a named benchmark curve."""
    dims = 1 if t_m == 1.0 else 2
    spec = FilterSpec(g_f=1.0, alpha_c=1e6, dims=dims)
    t_s, gains = unity_gain_solve(r_t, t_m, ancilla, spec, 1.0)
    config = GateConfig(r_t=r_t, ancilla=ancilla, t_s=t_s, t_m=t_m, gains=gains,
                        filter=spec)
    return conventional_output(config, g.vacuum(1)).fidelity


def solved_config(r_t: float, ancilla: AncillaSpec, g_f: float,
                  cutoff: float | CutoffRule, *, t_m: float = 1.0,
                  eta_inloop: float = 1.0, eta_verify: float = 1.0,
                  regime_min_coverage: float = 0.98,
                  input_state: GaussianState | None = None,
                  gains: tuple[float, float] | None = None) -> GateConfig:
    """Convenience builder: resolve the cutoff, solve unity gains (unless
    overridden) and assemble a `GateConfig`."""
    dims = 1 if t_m == 1.0 else 2
    t_s = math.exp(-2.0 * r_t)
    if isinstance(cutoff, CutoffRule):
        probe = input_state if input_state is not None else g.vacuum(1)
        mu_m, d = outcome_moments(t_s, t_m, ancilla, eta_inloop, probe)
        alpha_c = cutoff.resolve(g_f, mu_m / 2.0, d / 4.0, dims)
    else:
        alpha_c = float(cutoff)
    spec = FilterSpec(g_f=g_f, alpha_c=alpha_c, dims=dims)
    if gains is None:
        t_s, gains = unity_gain_solve(r_t, t_m, ancilla, spec, eta_inloop)
        override = False
    else:
        override = True
    return GateConfig(r_t=r_t, ancilla=ancilla, t_s=t_s, t_m=t_m,
                      gains=tuple(gains), filter=spec, eta_inloop=eta_inloop,
                      eta_verify=eta_verify,
                      regime_min_coverage=regime_min_coverage,
                      gain_override=override)


def tradeoff_curve(ancilla: AncillaSpec, r_t: float, g_f_grid, cutoff_rule=None,
                   *, t_m: float = 1.0, eta_inloop: float = 1.0,
                   eta_verify: float = 1.0,
                   input_state: GaussianState | None = None) -> list[SweepPoint]:
    """One heralded-gate evaluation per filter strength; the fidelity is
    non-decreasing and the success probability non-increasing along the
    grid in the ideal model."""
    rule = cutoff_rule if cutoff_rule is not None else CutoffRule()
    state = input_state if input_state is not None else g.vacuum(1)
    points = []
    for g_f in g_f_grid:
        config = solved_config(r_t, ancilla, float(g_f), rule, t_m=t_m,
                               eta_inloop=eta_inloop, eta_verify=eta_verify,
                               input_state=state)
        res = heralded_output(config, state)
        points.append(SweepPoint(g_f=float(g_f), alpha_c=config.filter.alpha_c,
                                 success_probability=res.success_probability,
                                 fidelity=res.fidelity))
    return points
