"""Truncated photon-number-basis engine for the heralded gate.

Runs the identical gate (squeezed ancilla, beamsplitter, dual-homodyne
measurement with the probabilistic filter, feedforward displacement) on
arbitrary — in particular non-Gaussian — pure input states, in a Fock
space truncated at ``dim`` photons.

Scope: the dual-homodyne topology only (``t_m = 1/2``), pure ancillas and
ideal efficiencies.  The dual-homodyne outcome is exactly a heterodyne
POVM outcome ``alpha_m`` (projection onto coherent states, density
``<alpha|rho|alpha>/pi``), so the heralded output is assembled by
numerical quadrature over the outcome plane of

    filter weight x POVM density x displaced conditional projector,

giving a density operator; the fidelity is evaluated against the squeezed
ideal target at the same truncation.

Conventions match the Gaussian engine: beamsplitter Heisenberg action
``a1 -> sqrt(t) a1 + sqrt(1-t) a2``, ``a2 -> sqrt(1-t) a1 - sqrt(t) a2``;
the squeezer ``S(r) = exp(r (a^2 - a^dag^2)/2)`` squeezes x; alpha units
``x = 2 Re(alpha)``, ``y = 2 Im(alpha)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .exceptions import QuadratureError, TruncationError
from .filters import FilterSpec
from .gate import GateConfig, solve_gains_from_gamma

__all__ = [
    "FockState",
    "FockGateResult",
    "OutcomeLaw",
    "fock_coherent",
    "fock_single_photon",
    "fock_cat",
    "fock_squeezed_vacuum",
    "fock_beamsplitter",
    "heterodyne_project",
    "heralded_gate_fock",
    "outcome_law",
    "calibrate_gains_fock",
    "displacement_matrix",
    "squeeze_matrix",
]

_NORM_TOL = 1e-6
_TAIL_LIMIT = 1e-6


@dataclass(frozen=True)
class FockState:
    """Pure state in a photon-number basis truncated at ``dim`` levels.

    One mode: ``amplitudes`` has shape ``(dim,)``; two modes:
    ``(dim, dim)`` with axes (mode 1, mode 2).  ``tail_mass`` is the known
    probability mass lost to truncation at construction.
    """

    amplitudes: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim not in (1, 2):
            raise ValueError("amplitudes must be a vector (1 mode) or matrix (2 modes)")
        if amps.ndim == 2 and amps.shape[0] != amps.shape[1]:
            raise ValueError("two-mode amplitudes must be square (same dim per mode)")
        if self.tail_mass > _TAIL_LIMIT:
            raise TruncationError(
                f"truncation tail mass {self.tail_mass:.3g} exceeds {_TAIL_LIMIT}; "
                "increase dim")
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > _NORM_TOL:
            raise TruncationError(
                f"state norm {norm} deviates from 1 by more than {_NORM_TOL}")
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def modes(self) -> int:
        return self.amplitudes.ndim

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class FockGateResult:
    """Heralded-gate output on a Fock-space input.

    ``output`` is the normalized conditional density operator (the
    accepted ensemble mixes over measurement outcomes, so it is mixed even
    for pure inputs).
    """

    output: np.ndarray
    success_probability: float
    fidelity: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.fidelity <= 1.0 + 1e-9:
            raise ValueError(f"fidelity {self.fidelity} outside [0, 1]")
        if not 0.0 < self.success_probability <= 1.0 + 1e-9:
            raise ValueError(
                f"success probability {self.success_probability} outside (0, 1]")


# ---------------------------------------------------------------------------
# tables and constructors

@lru_cache(maxsize=32)
def _log_factorials(dim: int) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, dim)))))


def _coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    """Truncated coherent amplitudes c_n = e^{-|a|^2/2} a^n / sqrt(n!)."""
    n = np.arange(dim)
    logfac = _log_factorials(dim)
    if alpha == 0:
        amps = np.zeros(dim, dtype=complex)
        amps[0] = 1.0
        return amps
    # magnitude in log space to stay finite for large |alpha|, phase exact
    logmag = -abs(alpha) ** 2 / 2.0 + n * math.log(abs(alpha)) - logfac / 2.0
    phase = np.exp(1j * n * np.angle(complex(alpha)))
    return np.exp(logmag) * phase


def fock_coherent(alpha: complex, dim: int) -> FockState:
    """Coherent state |alpha> truncated at ``dim`` levels."""
    amps = _coherent_amplitudes(alpha, dim)
    tail = max(0.0, 1.0 - float(np.sum(np.abs(amps) ** 2)))
    return FockState(amps, tail_mass=tail)


def fock_single_photon(dim: int) -> FockState:
    if dim < 2:
        raise ValueError("dim must be >= 2 for a single photon")
    amps = np.zeros(dim, dtype=complex)
    amps[1] = 1.0
    return FockState(amps, tail_mass=0.0)


def fock_cat(alpha: complex, parity: str, dim: int) -> FockState:
    """Even/odd coherent superposition N (|alpha> +/- |-alpha>)."""
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    sign = 1.0 if parity == "even" else -1.0
    plus = _coherent_amplitudes(alpha, dim)
    minus = _coherent_amplitudes(-alpha, dim)
    nrm = math.sqrt(2.0 + 2.0 * sign * math.exp(-2.0 * abs(alpha) ** 2))
    amps = (plus + sign * minus) / nrm
    tail = max(0.0, 1.0 - float(np.sum(np.abs(amps) ** 2)))
    return FockState(amps, tail_mass=tail)


def fock_squeezed_vacuum(r: float, dim: int, angle: float = 0.0) -> FockState:
    """Squeezed vacuum (x variance e^{-2r} for angle 0), via the even-photon
    recursion c_{n+2}/c_n = -tanh(r) sqrt((n+1)/(n+2))."""
    amps = np.zeros(dim, dtype=complex)
    amps[0] = 1.0 / math.sqrt(math.cosh(r))
    th = math.tanh(r)
    for n in range(0, dim - 2, 2):
        amps[n + 2] = -th * math.sqrt((n + 1.0) / (n + 2.0)) * amps[n]
    if angle != 0.0:
        amps = amps * np.exp(1j * angle * np.arange(dim))
    tail = max(0.0, 1.0 - float(np.sum(np.abs(amps) ** 2)))
    return FockState(amps, tail_mass=tail)


def _lowering(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), k=1)


def displacement_matrix(beta: complex, dim: int) -> np.ndarray:
    """Truncated displacement D(beta) = exp(beta a^dag - beta* a).

    Built from the matrix exponential of the (anti-Hermitian) generator:
    the closed triangular-factor formula cancels catastrophically once
    |beta| sqrt(dim) grows, while the exponential stays unitary to
    rounding on the retained block.
    """
    if beta == 0:
        return np.eye(dim, dtype=complex)
    a = _lowering(dim)
    return expm(beta * a.T.astype(complex) - np.conj(beta) * a)


def squeeze_matrix(r: float, dim: int, angle: float = 0.0) -> np.ndarray:
    """Truncated squeezer S(r) = exp(r (a^2 - a^dag^2) / 2) (squeezes x),
    rotated by ``angle``."""
    a = _lowering(dim)
    gen = 0.5 * r * (a @ a - a.T @ a.T)
    mat = expm(gen)
    if angle != 0.0:
        ph = np.exp(1j * angle * np.arange(dim))
        mat = (ph[:, None] * mat) * np.conj(ph)[None, :]
    return mat


# ---------------------------------------------------------------------------
# beamsplitter

@lru_cache(maxsize=16)
def _bs_blocks(dim: int, t: float) -> tuple:
    """Per-total-photon-number orthogonal blocks of the rotation part,
    built on the full (untruncated) block so each is exactly unitary."""
    phi = math.atan2(math.sqrt(1.0 - t), math.sqrt(t))
    blocks = []
    for total in range(2 * dim - 1):
        size = total + 1
        gen = np.zeros((size, size))
        for n1 in range(total):
            # <n1+1, n2-1| a1^dag a2 |n1, n2>, n2 = total - n1
            val = phi * math.sqrt((n1 + 1.0) * (total - n1))
            gen[n1 + 1, n1] = val
            gen[n1, n1 + 1] = -val
        blocks.append(expm(gen))
    return tuple(blocks)


def fock_beamsplitter(state: FockState, t: float) -> FockState:
    """Apply the beamsplitter of transmissivity ``t`` to a two-mode state.

    Photon number is conserved exactly (block structure); amplitude that
    a block rotates past the truncation is dropped and added to the
    output's ``tail_mass``.
    """
    if state.modes != 2:
        raise ValueError("fock_beamsplitter needs a two-mode state")
    if not 0.0 <= t <= 1.0:
        raise ValueError("transmissivity must lie in [0, 1]")
    dim = state.dim
    psi = state.amplitudes
    out = np.zeros_like(psi)
    blocks = _bs_blocks(dim, t)
    lost = 0.0
    for total in range(2 * dim - 1):
        lo = max(0, total - (dim - 1))
        hi = min(total, dim - 1)
        size = total + 1
        vec = np.zeros(size, dtype=complex)
        n1 = np.arange(lo, hi + 1)
        vec[n1] = psi[n1, total - n1]
        if not np.any(vec):
            continue
        rotated = blocks[total] @ vec
        kept = rotated[lo:hi + 1]
        lost += float(np.sum(np.abs(rotated) ** 2) - np.sum(np.abs(kept) ** 2))
        out[n1, total - n1] = kept
    # mode-2 parity phase makes the reflection sign match the Gaussian
    # convention: a2 -> sqrt(1-t) a1 - sqrt(t) a2
    out = out * np.where(np.arange(dim)[None, :] % 2, -1.0, 1.0)
    return FockState(out, tail_mass=state.tail_mass + max(lost, 0.0))


# ---------------------------------------------------------------------------
# heterodyne projection

def heterodyne_project(state: FockState, mode: int,
                       alpha_m: complex) -> tuple[FockState, float]:
    """Project one mode of a two-mode pure state onto the coherent state
    |alpha_m| (heterodyne POVM element |a><a|/pi).

    Returns the normalized conditional state of the remaining mode and the
    outcome probability density (integrates to 1 over the alpha plane).
    """
    if state.modes != 2:
        raise ValueError("heterodyne_project needs a two-mode state")
    if mode not in (0, 1):
        raise ValueError("mode must be 0 or 1")
    coh = _coherent_amplitudes(alpha_m, state.dim)
    if mode == 1:
        phi = state.amplitudes @ np.conj(coh)
    else:
        phi = state.amplitudes.T @ np.conj(coh)
    nrm2 = float(np.sum(np.abs(phi) ** 2))
    density = nrm2 / math.pi
    if nrm2 <= 0.0:
        raise QuadratureError("zero-probability heterodyne outcome")
    return (FockState(phi / math.sqrt(nrm2), tail_mass=state.tail_mass),
            density)


# ---------------------------------------------------------------------------
# heralded gate

def _mode_alpha_moments(psi: np.ndarray, mode: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of (Re alpha, Im alpha) of one mode's heterodyne
    outcome, from the Husimi widths of the quadratures."""
    dim = psi.shape[0]
    a = _lowering(dim)
    if mode == 1:
        rho = psi.conj().T @ psi  # reduced density of mode 2 (transposed order)
        rho = rho.T
    else:
        rho = psi @ psi.conj().T
    ea = np.trace(a @ rho)
    eaa = np.trace(a @ a @ rho)
    en = np.real(np.trace(a.conj().T @ a @ rho))
    # x = a + a^dag, y = -i(a - a^dag)
    mean_x = 2.0 * np.real(ea)
    mean_y = 2.0 * np.imag(ea)
    var_x = 1.0 + 2.0 * en + 2.0 * np.real(eaa) - mean_x ** 2
    var_y = 1.0 + 2.0 * en - 2.0 * np.real(eaa) - mean_y ** 2
    mean = np.array([mean_x, mean_y]) / 2.0
    var = (np.array([max(var_x, 1e-12), max(var_y, 1e-12)]) + 1.0) / 4.0
    return mean, var


def _envelope(spec: FilterSpec, mean: np.ndarray, var: np.ndarray):
    """Gaussian envelope (mean, variance per dim) that dominates the
    outcome integrand, including the filter's reshaping; falls back to a
    cutoff-wide envelope past the reshaping breakdown."""
    lam = spec.lam
    env_mean = np.empty(2)
    env_var = np.empty(2)
    for i in range(2):
        denom = 1.0 - 2.0 * lam * var[i]
        if denom <= 1e-9:
            # Reshaping diverges: the accepted mass piles up against the
            # cutoff.  Cover the whole disk plus the raw tails.
            return np.zeros(2), np.maximum(var, (spec.alpha_c / 1.8) ** 2)
        gamma = 1.0 / denom
        env_mean[i] = gamma * mean[i]
        env_var[i] = max(gamma * var[i], 1.44 * var[i])
    return env_mean, env_var


def _gh_nodes(spec: FilterSpec, mean: np.ndarray, var: np.ndarray,
              n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensored Gauss-Hermite nodes (complex alpha) and plane weights."""
    env_mean, env_var = _envelope(spec, mean, var)
    h, w = np.polynomial.hermite.hermgauss(n_nodes)
    scaled = w * np.exp(h ** 2)
    sx, sy = np.sqrt(2.0 * env_var)
    ax = env_mean[0] + sx * h
    ay = env_mean[1] + sy * h
    alpha = (ax[:, None] + 1j * ay[None, :]).ravel()
    weight = (sx * sy) * np.outer(scaled, scaled).ravel()
    return alpha, weight


def _radial_nodes(spec: FilterSpec, mean: np.ndarray, var: np.ndarray,
                  n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Polar rule splitting the radial axis at the cutoff, where the
    acceptance law has a kink: piecewise Gauss-Legendre in r, uniform
    (trapezoidal) in angle."""
    env_mean, env_var = _envelope(spec, mean, var)
    r_center = float(np.linalg.norm(env_mean))
    sigma = math.sqrt(float(np.max(env_var)))
    r_max = max(spec.alpha_c + 8.0 * sigma, r_center + 8.0 * sigma)
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    segments = []
    for lo, hi in ((0.0, min(spec.alpha_c, r_max)), (min(spec.alpha_c, r_max), r_max)):
        if hi <= lo:
            continue
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
        segments.append((mid + half * x, half * w))
    r = np.concatenate([s[0] for s in segments])
    wr = np.concatenate([s[1] for s in segments]) * r  # polar Jacobian
    n_ang = 2 * n_nodes
    theta = 2.0 * math.pi * np.arange(n_ang) / n_ang
    wt = np.full(n_ang, 2.0 * math.pi / n_ang)
    alpha = (r[:, None] * np.exp(1j * theta)[None, :]).ravel()
    weight = np.outer(wr, wt).ravel()
    return alpha, weight


_QUAD_RULES = {"gauss-hermite": _gh_nodes, "radial": _radial_nodes}


def _acceptance(spec: FilterSpec, alpha: np.ndarray) -> np.ndarray:
    arg = spec.lam * (np.abs(alpha) ** 2 - spec.alpha_c ** 2)
    return np.exp(np.minimum(arg, 0.0))


def _measured_prep(config: GateConfig, input_state: FockState) -> np.ndarray:
    """Joint amplitudes after mixing the input with the ancilla on the
    tapping beamsplitter (mode 1 is the measured arm)."""
    dim = input_state.dim
    anc_r = -0.5 * math.log(config.ancilla.v_sq)
    ancilla = fock_squeezed_vacuum(anc_r, dim, angle=config.ancilla.angle)
    joint = FockState(np.outer(input_state.amplitudes, ancilla.amplitudes),
                      tail_mass=input_state.tail_mass + ancilla.tail_mass)
    return fock_beamsplitter(joint, config.t_s).amplitudes


def _gate_once(config: GateConfig, input_state: FockState, n_nodes: int,
               rule: str) -> tuple[np.ndarray, float]:
    """One quadrature evaluation: unnormalized output operator and the
    success probability."""
    dim = input_state.dim
    psi = _measured_prep(config, input_state)
    mean, var = _mode_alpha_moments(psi, mode=1)
    alpha, weight = _QUAD_RULES[rule](config.filter, mean, var, n_nodes)
    # conditional (unnormalized) kept-mode states for every node at once
    coh = _coherent_amplitudes_batch(alpha, dim)
    phi = psi @ coh.conj().T  # (dim, nodes)
    accept = _acceptance(config.filter, alpha)
    dens_scale = weight * accept / math.pi
    g_x, g_y = config.gains
    beta = g_x * alpha.real + 1j * g_y * alpha.imag
    cols = np.empty_like(phi)
    for j in range(alpha.size):
        cols[:, j] = displacement_matrix(complex(beta[j]), dim) @ phi[:, j]
    scaled = cols * np.sqrt(dens_scale)[None, :]
    rho = scaled @ scaled.conj().T
    p_success = float(np.sum(dens_scale * np.sum(np.abs(phi) ** 2, axis=0)))
    return rho, p_success


def _coherent_amplitudes_batch(alpha: np.ndarray, dim: int) -> np.ndarray:
    """Rows of truncated coherent amplitudes for many alphas."""
    n = np.arange(dim)
    logfac = _log_factorials(dim)
    out = np.empty((alpha.size, dim), dtype=complex)
    mag = np.abs(alpha)
    safe = np.where(mag > 0, mag, 1.0)
    logmag = (-mag[:, None] ** 2 / 2.0 + n[None, :] * np.log(safe)[:, None]
              - logfac[None, :] / 2.0)
    out[:] = np.exp(logmag) * np.exp(1j * np.angle(alpha)[:, None] * n[None, :])
    zero = mag == 0
    if np.any(zero):
        out[zero] = 0.0
        out[zero, 0] = 1.0
    return out


@dataclass(frozen=True)
class OutcomeLaw:
    """Exact raw and filter-accepted outcome moments (alpha units)."""

    mean_raw: np.ndarray
    cov_raw: np.ndarray
    mean_accepted: np.ndarray
    cov_accepted: np.ndarray
    p_success: float


def outcome_law(config: GateConfig, input_state: FockState,
                n_nodes: int = 96, quad_rule: str = "radial") -> OutcomeLaw:
    """Moments of the measured-arm outcome before and after the heralding
    filter, by quadrature over the exact POVM density.

    Unlike the Gaussian engine's reshaped-Gaussian model, this carries no
    approximation beyond quadrature and truncation, so it stays valid past
    the reshaping breakdown and for non-Gaussian inputs.
    """
    psi = _measured_prep(config, input_state)
    mean, var = _mode_alpha_moments(psi, mode=1)
    alpha, weight = _QUAD_RULES[quad_rule](config.filter, mean, var, n_nodes)
    coh = _coherent_amplitudes_batch(alpha, input_state.dim)
    dens = weight * np.sum(np.abs(psi @ coh.conj().T) ** 2, axis=0) / math.pi
    acc = dens * _acceptance(config.filter, alpha)
    pts = np.column_stack([alpha.real, alpha.imag])

    def _moments(w: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        total = float(np.sum(w))
        mu = (w @ pts) / total
        cen = pts - mu
        cov = (cen * w[:, None]).T @ cen / total
        return mu, cov, total

    mu_r, cov_r, _ = _moments(dens)
    mu_a, cov_a, p_s = _moments(acc)
    return OutcomeLaw(mu_r, cov_r, mu_a, cov_a, p_s)


def calibrate_gains_fock(config: GateConfig, input_state: FockState,
                         n_nodes: int = 96, quad_rule: str = "radial",
                         cross_tol: float = 1e-5) -> GateConfig:
    """Return a config with feedforward gains set from the measured
    amplification of the exact accepted-outcome law.

    The per-axis variance ratio accepted/raw estimates the local mean
    amplification of the heralding filter, which the unity-gain solver
    turns into gains; this works past the Gaussian reshaping breakdown,
    where the analytic solve is unavailable.
    """
    law = outcome_law(config, input_state, n_nodes=n_nodes, quad_rule=quad_rule)
    scale = float(np.max(np.abs(law.cov_raw)))
    if abs(law.cov_raw[0, 1]) <= 1e-9 * scale:
        gamma = np.diag(np.diag(law.cov_accepted) / np.diag(law.cov_raw))
    else:
        vals, vecs = np.linalg.eigh(law.cov_raw)
        acc_diag = np.diag(vecs.T @ law.cov_accepted @ vecs)
        gamma = vecs @ np.diag(acc_diag / vals) @ vecs.T
    _, gains = solve_gains_from_gamma(config.r_t, config.t_m, config.ancilla,
                                      config.eta_inloop, gamma, t_s=config.t_s,
                                      cross_tol=cross_tol)
    return replace(config, gains=gains, gain_override=True)


def heralded_gate_fock(config: GateConfig, input_state: FockState,
                       gh_nodes: int = 64, quad_rule: str = "gauss-hermite",
                       convergence_tol: float = 1e-5,
                       check_convergence: bool = True) -> FockGateResult:
    """Run the heralded gate on a Fock-basis input (see module docstring).

    The outcome integral is evaluated at ``gh_nodes`` and, when
    ``check_convergence`` is set, re-evaluated at ``gh_nodes + 16``; a
    fidelity shift above ``convergence_tol`` raises `QuadratureError`.
    """
    if input_state.modes != 1:
        raise ValueError("the gate takes a single-mode input")
    if config.t_m != 0.5:
        raise ValueError("the Fock engine implements the t_m = 1/2 topology only")
    if config.eta_inloop != 1.0 or config.eta_verify != 1.0:
        raise ValueError("the Fock engine models ideal efficiencies only")
    if abs(config.ancilla.v_sq * config.ancilla.v_asq - 1.0) > 1e-9:
        raise ValueError("the Fock engine needs a pure squeezed ancilla")
    if quad_rule not in _QUAD_RULES:
        raise ValueError(f"unknown quadrature rule {quad_rule!r}")
    if input_state.tail_mass > _TAIL_LIMIT:
        raise TruncationError("input truncation tail exceeds the guard")

    rho_raw, p_success = _gate_once(config, input_state, gh_nodes, quad_rule)
    trace = float(np.real(np.trace(rho_raw)))
    if trace <= 0.0:
        raise QuadratureError("outcome quadrature collected no probability mass")
    rho = rho_raw / trace
    dim = input_state.dim
    tvec = squeeze_matrix(config.r_t, dim) @ input_state.amplitudes
    tnorm = float(np.linalg.norm(tvec))
    if tnorm < 1.0 - 1e-3:
        raise TruncationError(
            f"squeezed target loses {1 - tnorm**2:.3g} mass at dim {dim}")
    tvec = tvec / tnorm
    fid = float(np.real(tvec.conj() @ rho @ tvec))

    if check_convergence:
        rho2, p2 = _gate_once(config, input_state, gh_nodes + 16, quad_rule)
        fid2 = float(np.real(tvec.conj() @ rho2 @ tvec)) / float(np.real(np.trace(rho2)))
        if abs(fid2 - fid) > convergence_tol or (
                p_success > 0 and abs(p2 - p_success) > 50 * convergence_tol * p_success):
            raise QuadratureError(
                f"outcome quadrature not converged: fidelity {fid:.8f} -> "
                f"{fid2:.8f}, success {p_success:.6g} -> {p2:.6g} at "
                f"{gh_nodes}+16 nodes ({quad_rule})")
    return FockGateResult(output=rho, success_probability=min(p_success, 1.0),
                          fidelity=min(max(fid, 0.0), 1.0))
