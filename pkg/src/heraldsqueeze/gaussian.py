"""Exact calculus of Gaussian states.

Conventions (fixed package-wide):

* Quadratures ``x = a + a^dag``, ``y = -i(a - a^dag)``; the vacuum has
  covariance equal to the identity (variance 1 per quadrature).
* A coherent amplitude ``alpha`` has mean vector ``(2 Re alpha, 2 Im alpha)``.
* Mean/covariance entries are ordered ``(x1, y1, x2, y2, ...)``.
* Squeezing in dB: ``V = 10**(-s/10)``, squeezing parameter ``r = s ln(10)/20``
  so that ``V = exp(-2 r)``.
* Beamsplitter of transmissivity ``t`` maps annihilation operators as
  ``b = sqrt(t) a1 + sqrt(1-t) a2``, ``c = sqrt(1-t) a1 - sqrt(t) a2``
  (a self-inverse reflection).
* ``squeezer(r, angle=0)`` squeezes ``x``: phase-space matrix
  ``diag(e^-r, e^+r)``.
* ``rotation(theta)`` has matrix ``[[cos, -sin], [sin, cos]]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import PhysicalityError

__all__ = [
    "GaussianState",
    "SymplecticOp",
    "AncillaSpec",
    "vacuum",
    "coherent",
    "squeezed_vacuum",
    "db_to_variance",
    "variance_to_db",
    "db_to_r",
    "r_to_db",
    "beamsplitter",
    "squeezer",
    "rotation",
    "identity_op",
    "embed",
    "tensor",
    "apply",
    "loss_channel",
    "displace",
    "reduce_to_modes",
    "condition_on_homodyne",
    "condition_on_heterodyne",
    "fidelity",
    "symplectic_form",
]

_SYMMETRY_TOL = 1e-10
_SYMPLECTIC_TOL = 1e-10
_PHYSICALITY_SLACK = 1e-9


def symplectic_form(nmodes: int) -> np.ndarray:
    """Standard symplectic form Omega for ``nmodes`` modes."""
    omega = np.zeros((2 * nmodes, 2 * nmodes))
    for k in range(nmodes):
        omega[2 * k, 2 * k + 1] = 1.0
        omega[2 * k + 1, 2 * k] = -1.0
    return omega


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GaussianState:
    """N-mode Gaussian state: mean quadrature vector plus covariance.

    The covariance is symmetrized on construction; arrays are stored
    read-only so states can be shared freely across threads.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1 or mean.size % 2 != 0 or mean.size == 0:
            raise PhysicalityError(
                f"mean must have even positive length, got shape {mean.shape}")
        if cov.shape != (mean.size, mean.size):
            raise PhysicalityError(
                f"cov shape {cov.shape} does not match mean length {mean.size}")
        asym = np.max(np.abs(cov - cov.T)) if cov.size else 0.0
        if asym > _SYMMETRY_TOL * max(1.0, np.max(np.abs(cov))):
            raise PhysicalityError(f"covariance asymmetry {asym:g} exceeds tolerance")
        cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "mean", _readonly(mean))
        object.__setattr__(self, "cov", _readonly(cov))

    @property
    def nmodes(self) -> int:
        return self.mean.size // 2

    def symplectic_eigenvalues(self) -> np.ndarray:
        """Symplectic spectrum of the covariance (vacuum value: 1)."""
        omega = symplectic_form(self.nmodes)
        ev = np.linalg.eigvals(1j * omega @ self.cov)
        nu = np.sort(np.abs(ev))
        # eigenvalues come in +/- pairs; keep one of each
        return nu[self.nmodes:]

    def require_physical(self, slack: float = _PHYSICALITY_SLACK) -> "GaussianState":
        nu_min = float(np.min(self.symplectic_eigenvalues()))
        if nu_min < 1.0 - slack:
            raise PhysicalityError(
                f"covariance violates the uncertainty bound: nu_min = {nu_min:.12g}")
        return self

    def purity(self) -> float:
        det = float(np.linalg.det(self.cov))
        return 1.0 / math.sqrt(max(det, np.finfo(float).tiny))

    def is_pure(self, tol: float = 1e-8) -> bool:
        return abs(float(np.linalg.det(self.cov)) - 1.0) <= tol * self.nmodes


@dataclass(frozen=True)
class SymplecticOp:
    """Linear phase-space map: ``z -> matrix @ z + displacement``."""

    matrix: np.ndarray
    displacement: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2 != 0:
            raise PhysicalityError(f"matrix must be square 2N x 2N, got {m.shape}")
        n = m.shape[0] // 2
        omega = symplectic_form(n)
        defect = np.max(np.abs(m @ omega @ m.T - omega))
        if defect > _SYMPLECTIC_TOL * max(1.0, float(np.max(np.abs(m))) ** 2):
            raise PhysicalityError(
                f"matrix is not symplectic: |M Omega M^T - Omega| = {defect:g}")
        d = self.displacement
        d = np.zeros(m.shape[0]) if d is None else np.asarray(d, dtype=float)
        if d.shape != (m.shape[0],):
            raise PhysicalityError(
                f"displacement shape {d.shape} does not match matrix {m.shape}")
        object.__setattr__(self, "matrix", _readonly(m))
        object.__setattr__(self, "displacement", _readonly(d))

    @property
    def nmodes(self) -> int:
        return self.matrix.shape[0] // 2

    def then(self, other: "SymplecticOp") -> "SymplecticOp":
        """Composite map applying ``self`` first, then ``other``."""
        return SymplecticOp(
            other.matrix @ self.matrix,
            other.matrix @ self.displacement + other.displacement,
        )

    def inverse(self) -> "SymplecticOp":
        minv = np.linalg.inv(self.matrix)
        return SymplecticOp(minv, -minv @ self.displacement)


@dataclass(frozen=True)
class AncillaSpec:
    """Squeezed-vacuum resource: squeezed/anti-squeezed variances and axis.

    ``v_sq``/``v_asq`` are quadrature variances (vacuum = 1); ``angle`` is
    the squeezing axis in radians (``angle = 0``: squeezed in ``x``).
    """

    v_sq: float
    v_asq: float
    angle: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.v_sq <= 1.0 + 1e-12):
            raise PhysicalityError(f"v_sq must lie in (0, 1], got {self.v_sq}")
        if self.v_asq < 1.0 - 1e-12:
            raise PhysicalityError(f"v_asq must be >= 1, got {self.v_asq}")
        if self.v_sq * self.v_asq < 1.0 - 1e-9:
            raise PhysicalityError(
                f"uncertainty violation: v_sq*v_asq = {self.v_sq * self.v_asq:.12g} < 1")

    @classmethod
    def from_db(cls, squeezed_db: float, antisqueezed_db: float | None = None,
                angle: float = 0.0) -> "AncillaSpec":
        """Build from dB figures; omit ``antisqueezed_db`` for a pure state."""
        v_sq = db_to_variance(squeezed_db)
        v_asq = 1.0 / v_sq if antisqueezed_db is None else db_to_variance(-antisqueezed_db)
        return cls(v_sq=v_sq, v_asq=v_asq, angle=angle)

    def is_pure(self, tol: float = 1e-9) -> bool:
        return abs(self.v_sq * self.v_asq - 1.0) <= tol


# ---------------------------------------------------------------------------
# constructors

def vacuum(n: int) -> GaussianState:
    """Vacuum state of ``n`` modes (mean 0, identity covariance)."""
    if n < 1:
        raise PhysicalityError("mode count must be >= 1")
    return GaussianState(np.zeros(2 * n), np.eye(2 * n))


def coherent(alpha: complex) -> GaussianState:
    """Single-mode coherent state with mean ``(2 Re alpha, 2 Im alpha)``."""
    alpha = complex(alpha)
    return GaussianState(np.array([2.0 * alpha.real, 2.0 * alpha.imag]), np.eye(2))


def squeezed_vacuum(spec: AncillaSpec) -> GaussianState:
    """Squeezed vacuum with covariance R(angle) diag(v_sq, v_asq) R(angle)^T."""
    r = _rotation_matrix(spec.angle)
    cov = r @ np.diag([spec.v_sq, spec.v_asq]) @ r.T
    return GaussianState(np.zeros(2), cov)


# ---------------------------------------------------------------------------
# dB conversions

def db_to_variance(s: float) -> float:
    """Squeezed-quadrature variance for ``s`` dB of squeezing (vacuum = 1)."""
    return 10.0 ** (-s / 10.0)


def variance_to_db(v: float) -> float:
    if v <= 0:
        raise ValueError("variance must be positive")
    return -10.0 * math.log10(v)


def db_to_r(s: float) -> float:
    """Squeezing parameter ``r`` with ``exp(-2 r) = 10**(-s/10)``."""
    return s * math.log(10.0) / 20.0


def r_to_db(r: float) -> float:
    return 20.0 * r / math.log(10.0)


# ---------------------------------------------------------------------------
# symplectic constructors

def _rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def identity_op(nmodes: int) -> SymplecticOp:
    return SymplecticOp(np.eye(2 * nmodes))


def rotation(theta: float) -> SymplecticOp:
    """Single-mode phase-space rotation by ``theta``."""
    return SymplecticOp(_rotation_matrix(theta))


def squeezer(r: float, angle: float = 0.0) -> SymplecticOp:
    """Single-mode squeezer; at ``angle = 0`` the matrix is diag(e^-r, e^+r)."""
    if not math.isfinite(r):
        raise PhysicalityError("squeezing parameter must be finite")
    core = np.diag([math.exp(-r), math.exp(r)])
    rot = _rotation_matrix(angle)
    return SymplecticOp(rot @ core @ rot.T)


def beamsplitter(t: float) -> SymplecticOp:
    """Two-mode beamsplitter of transmissivity ``t`` (see module docstring
    for the sign convention)."""
    if not 0.0 <= t <= 1.0:
        raise PhysicalityError(f"transmissivity must lie in [0, 1], got {t}")
    rt, rr = math.sqrt(t), math.sqrt(1.0 - t)
    eye = np.eye(2)
    m = np.block([[rt * eye, rr * eye], [rr * eye, -rt * eye]])
    return SymplecticOp(m)


def embed(op: SymplecticOp, nmodes: int, modes: tuple[int, ...]) -> SymplecticOp:
    """Embed an operation acting on ``modes`` into an ``nmodes`` register."""
    if len(modes) != op.nmodes:
        raise ValueError("mode tuple length must match the operation size")
    if len(set(modes)) != len(modes) or any(not 0 <= m < nmodes for m in modes):
        raise ValueError(f"invalid mode indices {modes} for {nmodes} modes")
    mat = np.eye(2 * nmodes)
    disp = np.zeros(2 * nmodes)
    idx = np.concatenate([[2 * m, 2 * m + 1] for m in modes]).astype(int)
    mat[np.ix_(idx, idx)] = op.matrix
    disp[idx] = op.displacement
    return SymplecticOp(mat, disp)


# ---------------------------------------------------------------------------
# channels and measurements

def tensor(a: GaussianState, b: GaussianState) -> GaussianState:
    """Product state of two registers (block-diagonal covariance)."""
    n = a.mean.size + b.mean.size
    mean = np.concatenate([a.mean, b.mean])
    cov = np.zeros((n, n))
    cov[: a.mean.size, : a.mean.size] = a.cov
    cov[a.mean.size:, a.mean.size:] = b.cov
    return GaussianState(mean, cov)


def apply(state: GaussianState, op: SymplecticOp) -> GaussianState:
    """Evolve: mean -> M mean + d, cov -> M cov M^T."""
    if op.nmodes != state.nmodes:
        raise ValueError(
            f"operation acts on {op.nmodes} modes, state has {state.nmodes}")
    m = op.matrix
    return GaussianState(m @ state.mean + op.displacement, m @ state.cov @ m.T)


def loss_channel(state: GaussianState, mode: int, eta: float) -> GaussianState:
    """Pure-loss channel of efficiency ``eta`` on one mode:
    mean scales by sqrt(eta); the mode's covariance block becomes
    ``eta * block + (1 - eta) * I``."""
    if not 0.0 < eta <= 1.0:
        raise PhysicalityError(f"efficiency must lie in (0, 1], got {eta}")
    if not 0 <= mode < state.nmodes:
        raise ValueError(f"mode {mode} out of range")
    n2 = state.mean.size
    scale = np.ones(n2)
    scale[2 * mode] = scale[2 * mode + 1] = math.sqrt(eta)
    mean = state.mean * scale
    cov = state.cov * np.outer(scale, scale)
    cov[2 * mode, 2 * mode] += 1.0 - eta
    cov[2 * mode + 1, 2 * mode + 1] += 1.0 - eta
    return GaussianState(mean, cov)


def displace(state: GaussianState, mode: int, dx: float, dy: float) -> GaussianState:
    """Displace one mode's mean by (dx, dy); covariance unchanged."""
    if not 0 <= mode < state.nmodes:
        raise ValueError(f"mode {mode} out of range")
    mean = state.mean.copy()
    mean[2 * mode] += dx
    mean[2 * mode + 1] += dy
    return GaussianState(mean, state.cov)


def reduce_to_modes(state: GaussianState, modes: tuple[int, ...]) -> GaussianState:
    """Marginal state of the listed modes (in the listed order)."""
    idx = np.concatenate([[2 * m, 2 * m + 1] for m in modes]).astype(int)
    return GaussianState(state.mean[idx], state.cov[np.ix_(idx, idx)])


def condition_on_homodyne(
    state: GaussianState, mode: int, quadrature: str, outcome: float,
) -> tuple[GaussianState, tuple[float, float]]:
    """Condition on a homodyne measurement of ``quadrature`` ('x' or 'y')
    of ``mode`` giving ``outcome``.

    Returns the conditional state on the remaining modes and the
    pre-measurement marginal (mean, variance) of the measured quadrature.
    """
    if quadrature not in ("x", "y"):
        raise ValueError("quadrature must be 'x' or 'y'")
    if state.nmodes < 2:
        raise ValueError("conditioning requires at least two modes")
    j = 2 * mode + (0 if quadrature == "x" else 1)
    keep = np.array([i for i in range(state.mean.size) if i // 2 != mode])
    v_m = float(state.cov[j, j])
    if v_m <= 1e-300:
        raise PhysicalityError("degenerate (zero-variance) homodyne marginal")
    c = state.cov[keep, j]
    cov = state.cov[np.ix_(keep, keep)] - np.outer(c, c) / v_m
    mean = state.mean[keep] + c * ((outcome - state.mean[j]) / v_m)
    return GaussianState(mean, cov), (float(state.mean[j]), v_m)


def condition_on_heterodyne(
    state: GaussianState, mode: int, outcome: complex,
) -> GaussianState:
    """Condition on a dual-homodyne (heterodyne) measurement of ``mode``
    with complex outcome ``alpha``; equivalent to splitting the mode on a
    balanced beamsplitter with vacuum and homodyning x/y on the outputs."""
    if state.nmodes < 2:
        raise ValueError("conditioning requires at least two modes")
    outcome = complex(outcome)
    sel = np.array([2 * mode, 2 * mode + 1])
    keep = np.array([i for i in range(state.mean.size) if i // 2 != mode])
    sigma_b = state.cov[np.ix_(sel, sel)] + np.eye(2)
    cross = state.cov[np.ix_(keep, sel)]
    gain = cross @ np.linalg.inv(sigma_b)
    d = np.array([2.0 * outcome.real, 2.0 * outcome.imag])
    mean = state.mean[keep] + gain @ (d - state.mean[sel])
    cov = state.cov[np.ix_(keep, keep)] - gain @ cross.T
    return GaussianState(mean, cov)


# ---------------------------------------------------------------------------
# fidelity

def fidelity(a: GaussianState, b: GaussianState) -> float:
    """Uhlmann fidelity of two single-mode Gaussian states
    (squared-overlap convention: F(|psi>, |phi>) = |<psi|phi>|^2)."""
    if a.nmodes != 1 or b.nmodes != 1:
        raise ValueError("fidelity is implemented for single-mode states only")
    s = a.cov + b.cov
    delta = a.mean - b.mean
    big_delta = float(np.linalg.det(s))
    lam = (float(np.linalg.det(a.cov)) - 1.0) * (float(np.linalg.det(b.cov)) - 1.0)
    lam = max(lam, 0.0)
    denom = math.sqrt(big_delta + lam) - math.sqrt(lam)
    expo = math.exp(-0.5 * float(delta @ np.linalg.solve(s, delta)))
    return min(1.0, 2.0 * expo / denom)
