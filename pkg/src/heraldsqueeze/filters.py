"""The heralding filter.

A measurement outcome ``alpha_m`` (in alpha-units: ``alpha = x/2 + i y/2``
for quadrature outcomes ``x, y``) is accepted with probability

    P_f(alpha_m) = exp[(1 - 1/g_f) (|alpha_m|^2 - alpha_c^2)]   if |alpha_m| < alpha_c
    P_f(alpha_m) = 1                                            otherwise

where ``g_f >= 1`` is the filter strength and ``alpha_c`` the cutoff.
For ``dims = 1`` (single-homodyne topologies) the same law is restricted
to the real axis with ``alpha_m = x_m / 2``.

Acting on a Gaussian ensemble ``N(mu, V)`` per outcome dimension, the
inside-cutoff part of the accepted ensemble is again Gaussian with

    gamma = 1 / (1 - 2 lambda V),   lambda = 1 - 1/g_f  (alpha-units)
    mean' = gamma mu,  variance' = gamma V

which for the vacuum-noise kernel ``V = 1/2`` amplifies mean and variance
by exactly ``g_f``.  ``2 lambda V >= 1`` is a gain-variance breakdown: the
accepted ensemble has no Gaussian reshaping and analytic callers refuse
(the Monte Carlo engine remains valid there).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from .exceptions import FilterBreakdownError, QuadratureError

__all__ = [
    "FilterSpec",
    "FilteredGaussian",
    "acceptance_probability",
    "filtered_gaussian",
    "filtered_moments",
    "success_probability",
    "coverage_fraction",
    "recommended_cutoff",
    "minimal_coverage_cutoff",
    "mass_inside_cutoff",
    "reshape_factor",
    "alpha_from_quadrature",
    "quadrature_from_alpha",
]


@dataclass(frozen=True)
class FilterSpec:
    """Filter strength, cutoff (alpha-units) and outcome dimensionality."""

    g_f: float
    alpha_c: float
    dims: int = 2

    def __post_init__(self) -> None:
        if not (self.g_f >= 1.0 and math.isfinite(self.g_f)):
            raise ValueError(f"filter strength must satisfy g_f >= 1, got {self.g_f}")
        if not (self.alpha_c > 0.0):
            raise ValueError(f"cutoff must be positive, got {self.alpha_c}")
        if self.dims not in (1, 2):
            raise ValueError(f"dims must be 1 or 2, got {self.dims}")

    @property
    def lam(self) -> float:
        """Exponent coefficient lambda = 1 - 1/g_f (alpha-units)."""
        return 1.0 - 1.0 / self.g_f


@dataclass(frozen=True)
class FilteredGaussian:
    """Gaussian reshaping of an outcome ensemble under the filter.

    ``mean``/``variance`` are per-dimension arrays of the inside-cutoff
    reshaped Gaussian; ``weight`` is its unnormalized mass factor relative
    to the raw ensemble (cutoff mass not included); ``coverage`` is the
    probability mass of the reshaped Gaussian lying inside the cutoff.
    """

    mean: np.ndarray
    variance: np.ndarray
    weight: float
    coverage: float


def alpha_from_quadrature(m):
    """Convert quadrature-unit outcomes to alpha-units (factor 1/2)."""
    return np.asarray(m, dtype=float) / 2.0


def quadrature_from_alpha(a):
    """Convert alpha-unit outcomes to quadrature units (factor 2)."""
    return np.asarray(a, dtype=float) * 2.0


def acceptance_probability(spec: FilterSpec, outcome) -> float:
    """Pointwise acceptance law; ``outcome`` is real for ``dims = 1`` and
    complex for ``dims = 2`` (alpha-units)."""
    if spec.dims == 1:
        r2 = float(np.real(outcome)) ** 2
    else:
        z = complex(outcome)
        r2 = z.real * z.real + z.imag * z.imag
    ac2 = spec.alpha_c * spec.alpha_c
    if r2 >= ac2:
        return 1.0
    return math.exp(spec.lam * (r2 - ac2))


def reshape_factor(spec: FilterSpec, variance: float) -> float:
    """Gaussian reshaping factor gamma = 1/(1 - 2 lambda V); raises on
    gain-variance breakdown."""
    denom = 1.0 - 2.0 * spec.lam * variance
    if denom <= 0.0:
        raise FilterBreakdownError(
            f"gain-variance breakdown: 2*lambda*V = {2.0 * spec.lam * variance:.6g} >= 1 "
            f"(g_f = {spec.g_f}, V = {variance:.6g})")
    return 1.0 / denom


def _as_mean_vector(spec: FilterSpec, mean) -> np.ndarray:
    if spec.dims == 2 and isinstance(mean, complex):
        return np.array([mean.real, mean.imag])
    vec = np.atleast_1d(np.asarray(mean, dtype=float))
    if vec.size == 1 and spec.dims == 2:
        vec = np.array([float(vec[0]), 0.0])
    if vec.size != spec.dims:
        raise ValueError(f"mean has {vec.size} entries, expected {spec.dims}")
    return vec


def _as_variance_vector(spec: FilterSpec, variance) -> np.ndarray:
    vec = np.atleast_1d(np.asarray(variance, dtype=float))
    if vec.size == 1:
        vec = np.full(spec.dims, float(vec[0]))
    if vec.size != spec.dims:
        raise ValueError(f"variance has {vec.size} entries, expected {spec.dims}")
    if np.any(vec <= 0.0):
        raise ValueError("variances must be positive")
    return vec


def filtered_gaussian(spec: FilterSpec, mean, variance) -> FilteredGaussian:
    """Reshape a Gaussian outcome ensemble (diagonal covariance); ``mean``
    may be a scalar, a length-``dims`` sequence, or (for dims = 2) a complex
    number; ``variance`` a scalar or per-dimension sequence (alpha-units)."""
    mu = _as_mean_vector(spec, mean)
    var = _as_variance_vector(spec, variance)
    gamma = np.array([reshape_factor(spec, v) for v in var])
    mean_f = gamma * mu
    var_f = gamma * var
    lam = spec.lam
    weight = math.exp(-lam * spec.alpha_c**2) * float(
        np.prod(np.sqrt(gamma)) * math.exp(lam * float(np.sum(gamma * mu * mu))))
    coverage = mass_inside_cutoff(mean_f, np.diag(var_f), spec.alpha_c, spec.dims)
    return FilteredGaussian(mean=mean_f, variance=var_f, weight=weight,
                            coverage=coverage)


def filtered_moments(spec: FilterSpec, mean, cov):
    """General reshaping for a full outcome covariance (alpha-units).

    The filter is isotropic in ``|alpha|``, so a correlated Gaussian is
    reshaped per-dimension in its eigenbasis.  Returns
    ``(mean_f, cov_f, weight, coverage, success_probability)``.
    """
    mu = np.atleast_1d(np.asarray(mean, dtype=float))
    sigma = np.atleast_2d(np.asarray(cov, dtype=float))
    k = spec.dims
    if mu.shape != (k,) or sigma.shape != (k, k):
        raise ValueError("mean/cov shapes do not match the filter dimensionality")
    if k == 1:
        rot = np.eye(1)
        lam_ev = np.array([sigma[0, 0]])
    else:
        lam_ev, rot = np.linalg.eigh(sigma)
    mu_rot = rot.T @ mu
    gamma = np.array([reshape_factor(spec, v) for v in lam_ev])
    mean_f = rot @ (gamma * mu_rot)
    cov_f = rot @ np.diag(gamma * lam_ev) @ rot.T
    lam = spec.lam
    weight = math.exp(-lam * spec.alpha_c**2) * float(
        np.prod(np.sqrt(gamma)) * math.exp(lam * float(np.sum(gamma * mu_rot**2))))
    coverage = mass_inside_cutoff(mean_f, cov_f, spec.alpha_c, k)
    c_raw = mass_inside_cutoff(mu, sigma, spec.alpha_c, k)
    p_success = min(1.0, max(0.0, weight * coverage + (1.0 - c_raw)))
    return mean_f, cov_f, weight, coverage, p_success


def success_probability(spec: FilterSpec, mean, variance) -> float:
    """Probability that the filter accepts an outcome drawn from the
    Gaussian ensemble ``N(mean, variance)``: reshaped mass inside the
    cutoff plus raw mass outside it."""
    mu = _as_mean_vector(spec, mean)
    var = _as_variance_vector(spec, variance)
    return filtered_moments(spec, mu, np.diag(var))[4]


def coverage_fraction(spec: FilterSpec, mean, variance) -> float:
    """Mass of the reshaped (filtered) Gaussian lying inside the cutoff."""
    return filtered_gaussian(spec, mean, variance).coverage


# ---------------------------------------------------------------------------
# cutoff selection

def recommended_cutoff(g_f: float, outcome_magnitude: float, sigma: float,
                       beta: float | None = None, *, dims: int = 2,
                       coverage_target: float = 0.98) -> float:
    """Cutoff rule ``alpha_c = g_f^2 |alpha_m| + beta g_f sigma / sqrt(2)``.

    When ``beta`` is omitted, the smallest beta for which the filtered
    ensemble keeps at least ``coverage_target`` of its mass inside the
    cutoff is used.
    """
    if g_f < 1.0:
        raise ValueError("g_f must be >= 1")
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if beta is not None:
        return g_f**2 * abs(outcome_magnitude) + beta * g_f * sigma / math.sqrt(2.0)

    def cov_at(beta_try: float) -> float:
        alpha_c = recommended_cutoff(g_f, outcome_magnitude, sigma, beta_try, dims=dims)
        if alpha_c <= 0.0:
            return 0.0
        spec = FilterSpec(g_f=g_f, alpha_c=alpha_c, dims=dims)
        return coverage_fraction(spec, abs(outcome_magnitude), sigma**2)

    lo, hi = 0.0, 4.0
    if cov_at(lo) >= coverage_target:
        beta_star = 0.0
    else:
        while cov_at(hi) < coverage_target:
            hi *= 2.0
            if hi > 1e6:
                raise QuadratureError("could not bracket the default-beta search")
        beta_star = brentq(lambda b: cov_at(b) - coverage_target, lo, hi, xtol=1e-10)
    return recommended_cutoff(g_f, outcome_magnitude, sigma, beta_star, dims=dims)


def minimal_coverage_cutoff(g_f: float, mean, cov, dims: int,
                            coverage: float = 0.98) -> float:
    """Smallest cutoff for which the filtered ensemble keeps at least
    ``coverage`` of its mass inside (the reshaping factor does not depend
    on the cutoff, so this is a quantile of the reshaped Gaussian)."""
    if not 0.0 < coverage < 1.0:
        raise ValueError("coverage target must lie in (0, 1)")
    mu = np.atleast_1d(np.asarray(mean, dtype=float))
    sigma = np.atleast_2d(np.asarray(cov, dtype=float))
    probe = FilterSpec(g_f=g_f, alpha_c=1.0, dims=dims)
    if dims == 1:
        lam_ev, rot = np.array([sigma[0, 0]]), np.eye(1)
    else:
        lam_ev, rot = np.linalg.eigh(sigma)
    gamma = np.array([reshape_factor(probe, v) for v in lam_ev])
    mean_f = rot @ (gamma * (rot.T @ mu))
    cov_f = rot @ np.diag(gamma * lam_ev) @ rot.T
    if dims == 1 and abs(mean_f[0]) < 1e-14:
        return float(ndtri(0.5 * (1.0 + coverage)) * math.sqrt(cov_f[0, 0]))
    scale = math.sqrt(float(np.max(np.linalg.eigvalsh(cov_f)))) + float(
        np.linalg.norm(mean_f))
    lo, hi = 1e-9 * scale, 8.0 * scale
    while mass_inside_cutoff(mean_f, cov_f, hi, dims) < coverage:
        hi *= 2.0
        if hi > 1e9 * scale:
            raise QuadratureError("could not bracket the coverage cutoff")
    return float(brentq(
        lambda r: mass_inside_cutoff(mean_f, cov_f, r, dims) - coverage,
        lo, hi, xtol=1e-12 * scale, rtol=1e-12))


# ---------------------------------------------------------------------------
# Gaussian mass inside the cutoff region

def mass_inside_cutoff(mean, cov, radius: float, dims: int) -> float:
    """Probability that a Gaussian outcome lies inside the cutoff region:
    an interval ``|alpha| < radius`` for dims = 1, a disk for dims = 2."""
    mu = np.atleast_1d(np.asarray(mean, dtype=float))
    sigma = np.atleast_2d(np.asarray(cov, dtype=float))
    if radius <= 0.0:
        return 0.0
    if dims == 1:
        s = math.sqrt(float(sigma[0, 0]))
        return float(ndtr((radius - mu[0]) / s) - ndtr((-radius - mu[0]) / s))
    return _disk_mass(mu, sigma, radius)


def _disk_mass(mu: np.ndarray, sigma: np.ndarray, radius: float) -> float:
    """Mass of a 2-D Gaussian inside the origin-centred disk of the given
    radius, by whitened polar reduction with adaptive angular quadrature."""
    ev, rot = np.linalg.eigh(sigma)
    if np.any(ev <= 0.0):
        raise ValueError("outcome covariance must be positive definite")
    m = rot.T @ mu  # disk is rotation invariant
    vx, vy = float(ev[0]), float(ev[1])
    sx, sy = math.sqrt(vx), math.sqrt(vy)
    mx, my = float(m[0]), float(m[1])
    c0 = mx * mx + my * my - radius * radius

    def integrand(theta: float) -> float:
        ct, st = math.cos(theta), math.sin(theta)
        a = vx * ct * ct + vy * st * st
        b = 2.0 * (sx * mx * ct + sy * my * st)
        disc = b * b - 4.0 * a * c0
        if disc <= 0.0:
            return 0.0
        root = math.sqrt(disc)
        r_hi = (-b + root) / (2.0 * a)
        if r_hi <= 0.0:
            return 0.0
        r_lo = max((-b - root) / (2.0 * a), 0.0)
        return math.exp(-0.5 * r_lo * r_lo) - math.exp(-0.5 * r_hi * r_hi)

    points = None
    if c0 > 0.0:
        # tangency angles give square-root kinks; locate them as quad
        # break points
        thetas = np.linspace(0.0, 2.0 * math.pi, 1441)
        disc_vals = np.array([
            (2.0 * (sx * mx * math.cos(t) + sy * my * math.sin(t))) ** 2
            - 4.0 * (vx * math.cos(t) ** 2 + vy * math.sin(t) ** 2) * c0
            for t in thetas])
        sign = np.signbit(disc_vals)
        crossings = []
        for i in range(len(thetas) - 1):
            if sign[i] != sign[i + 1]:
                f = lambda t: (2.0 * (sx * mx * math.cos(t) + sy * my * math.sin(t))) ** 2 \
                    - 4.0 * (vx * math.cos(t) ** 2 + vy * math.sin(t) ** 2) * c0
                crossings.append(brentq(f, thetas[i], thetas[i + 1], xtol=1e-13))
        points = crossings or None

    result = integrate.quad(integrand, 0.0, 2.0 * math.pi, points=points,
                            limit=500, epsabs=1e-13, epsrel=1e-10,
                            full_output=True)
    value, abserr = result[0], result[1]
    if len(result) > 3:  # quadrature warning message present
        raise QuadratureError(f"disk-mass quadrature did not converge: {result[3]}")
    mass = value / (2.0 * math.pi)
    if abserr / (2.0 * math.pi) > max(1e-8 * mass, 1e-12):
        raise QuadratureError(
            f"disk-mass quadrature error estimate too large: {abserr:g}")
    return min(1.0, max(0.0, mass))
