"""Trajectory-level Monte Carlo simulator for the heralded gate.

Independent cross-check of the analytic engine: each trajectory samples
the in-loop measurement outcome from its exact Gaussian marginal, accepts
it by comparing a uniform variate against the filter acceptance
probability, then samples the output quadratures from the conditional
state displaced by the feedforward.  Accepted-sample moments estimate the
output ensemble (outcomes in alpha units, quadratures in x/y units).

Reproducibility: shard ``s`` owns the counter-based stream
``Philox(key=[seed, shard_key_offset + s])``; results are bit-identical
for fixed ``(seed, shards)`` regardless of thread scheduling, because
shards share nothing and are merged in shard order.  Key2 values at or
above ``2**63`` are reserved (bootstrap resampling uses ``[seed, 2**63]``,
gain-calibration pilots offset their shards by ``2**63 + 1``).

Error bars: per-block sufficient statistics feed a block bootstrap
(trajectories are i.i.d., so blocks only reduce resampling cost); the
acceptance rate gets a Wilson interval.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _backend
from . import gaussian as g
from ._kernels_py import KernelParams
from . import _kernels_py
from .exceptions import AcceptanceStarvationError
from .filters import alpha_from_quadrature
from .gate import GateConfig, _gain_matrix, joint_moments, solve_gains_from_gamma
from .gaussian import GaussianState

__all__ = [
    "RunConfig",
    "EnsembleStats",
    "CalibrationResult",
    "simulate",
    "estimate_fidelity",
    "acceptance_rate",
    "wilson_interval",
    "calibrate_gains",
    "write_trajectories",
    "read_trajectories",
    "DUMP_MAGIC",
]

BOOTSTRAP_KEY2 = 1 << 63
CALIBRATION_KEY2 = (1 << 63) + 1
DUMP_MAGIC = b"HSQMCTRJ"
DUMP_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    """One simulation run.

    ``count_mode = "accepted"`` (default) runs until ``n_trajectories``
    acceptances, capped by ``budget`` total trajectories; ``"total"`` runs
    exactly ``n_trajectories`` trajectories.
    """

    gate: GateConfig
    input: GaussianState
    n_trajectories: int
    seed: int
    shards: int = 1
    count_mode: str = "accepted"
    budget: int = 1_000_000_000
    block_target: int = 256
    shard_key_offset: int = 0

    def __post_init__(self) -> None:
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if self.shards < 1:
            raise ValueError("shards must be >= 1")
        if self.count_mode not in ("accepted", "total"):
            raise ValueError("count_mode must be 'accepted' or 'total'")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        last = self.shard_key_offset + self.shards
        if not (0 <= self.shard_key_offset and last <= 2 ** 64):
            raise ValueError("shard keys must fit in 64 bits")
        if self.shard_key_offset < 2 ** 63 < last:
            raise ValueError(
                "shard keys must stay below 2**63 (keys >= 2**63 are "
                "reserved for bootstrap/calibration streams)")
        if self.input.nmodes != 1:
            raise ValueError("the gate takes a single-mode input")


@dataclass(frozen=True)
class EnsembleStats:
    """Accepted-ensemble sample moments with standard errors.

    Outcomes are in alpha units (``alpha_m = (X + iY)/2`` components);
    quadrature moments describe the output-mode samples.  Block-level
    sufficient statistics (stream-ordered) support bootstrap resampling.
    """

    accepted: int
    total: int
    outcome_mean: np.ndarray
    outcome_cov: np.ndarray
    outcome_mean_se: np.ndarray
    outcome_cov_se: np.ndarray
    quad_mean: np.ndarray
    quad_cov: np.ndarray
    quad_mean_se: np.ndarray
    quad_cov_se: np.ndarray
    seed: int
    shards: int
    block_n: np.ndarray
    block_sum_m: np.ndarray
    block_sum_mm: np.ndarray
    block_sum_q: np.ndarray
    block_sum_qq: np.ndarray

    @property
    def outcome_variance(self) -> np.ndarray:
        return np.diag(self.outcome_cov).copy()

    @property
    def output_state(self) -> GaussianState:
        return GaussianState(self.quad_mean, self.quad_cov)


def _split_counts(n: int, shards: int) -> list[int]:
    base, rem = divmod(n, shards)
    return [base + (1 if s < rem else 0) for s in range(shards)]


def build_kernel_params(config: GateConfig, input_state: GaussianState) -> KernelParams:
    """Reduce a gate configuration to the constants the kernel needs."""
    mu_q, s_qq, s_qm, mu_m, d = joint_moments(
        config.t_s, config.t_m, config.ancilla, config.eta_inloop, input_state)
    k = config.outcome_dims
    w = np.linalg.solve(d.T, s_qm.T).T
    s_cond = s_qq - w @ d @ w.T
    cmap = 2.0 * (w + _gain_matrix(config))
    return KernelParams(
        k=k,
        mu_alpha=alpha_from_quadrature(mu_m),
        chol_alpha=np.linalg.cholesky(d / 4.0),
        lam=config.filter.lam,
        alpha_c2=config.filter.alpha_c ** 2,
        c0=mu_q - w @ mu_m,
        cmap=cmap,
        chol_cond=np.linalg.cholesky(_nudge_spd(s_cond)),
    )


def _nudge_spd(mat: np.ndarray) -> np.ndarray:
    """Symmetrize and, if needed, lift a conditional covariance that is
    PSD-but-singular at the working precision onto the SPD cone."""
    sym = 0.5 * (mat + mat.T)
    try:
        np.linalg.cholesky(sym)
        return sym
    except np.linalg.LinAlgError:
        bump = 1e-12 * max(1.0, float(np.trace(sym)))
        return sym + bump * np.eye(sym.shape[0])


def _max_workers(shards: int) -> int:
    env = os.environ.get("HERALD_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(shards, cap))


def simulate(run: RunConfig, dump_path: str | os.PathLike | None = None) -> EnsembleStats:
    """Run the trajectory simulation described by ``run``.

    Raises `AcceptanceStarvationError` when the accepted-count target is
    not reached within the budget (or, in total mode, when fewer than two
    trajectories are accepted); the error carries the empirical acceptance
    counts and a Wilson upper bound on the rate.
    """
    params = build_kernel_params(run.gate, run.input)
    backend = _kernels_py if dump_path is not None else _backend.get_backend()
    accepted_mode = run.count_mode == "accepted"
    if accepted_mode:
        quotas = _split_counts(run.n_trajectories, run.shards)
        limits = _split_counts(run.budget, run.shards)
        block_size = max(1, run.n_trajectories // run.block_target)
    else:
        quotas = [None] * run.shards
        limits = _split_counts(run.n_trajectories, run.shards)
        block_size = max(1, run.n_trajectories // run.block_target)
    sinks = [[] for _ in range(run.shards)] if dump_path is not None else None

    def job(s: int):
        sink = sinks[s] if sinks is not None else None
        return backend.run_shard(params, run.seed, run.shard_key_offset + s,
                                 limits[s], quotas[s], block_size,
                                 accepted_mode, sink)

    workers = _max_workers(run.shards)
    if workers == 1:
        results = [job(s) for s in range(run.shards)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(run.shards)))

    accepted = sum(r.accepted for r in results)
    total = sum(r.processed for r in results)
    starved = (accepted < run.n_trajectories) if accepted_mode else (accepted < 2)
    if starved:
        hi = wilson_interval(accepted, max(total, 1), z=3.0)[1]
        raise AcceptanceStarvationError(
            f"acceptance starvation: {accepted} acceptances in {total} "
            f"trajectories (Wilson 3-sigma upper rate bound {hi:.3g})",
            accepted=accepted, total=total, rate_upper_bound=hi)

    k = params.k
    block_n = np.concatenate([r.block_n for r in results])
    block_sum_m = np.concatenate([r.block_sum_m for r in results]).reshape(-1, k)
    block_sum_mm = np.concatenate([r.block_sum_mm for r in results]).reshape(-1, k, k)
    block_sum_q = np.concatenate([r.block_sum_q for r in results]).reshape(-1, 2)
    block_sum_qq = np.concatenate([r.block_sum_qq for r in results]).reshape(-1, 2, 2)

    n = float(accepted)
    mean_m = block_sum_m.sum(axis=0) / n
    cov_m = _sample_cov(block_sum_mm.sum(axis=0), mean_m, n)
    mean_q = block_sum_q.sum(axis=0) / n
    cov_q = _sample_cov(block_sum_qq.sum(axis=0), mean_q, n)

    stats = EnsembleStats(
        accepted=accepted, total=total,
        outcome_mean=mean_m, outcome_cov=cov_m,
        outcome_mean_se=np.sqrt(np.diag(cov_m) / n),
        outcome_cov_se=_cov_entry_se(cov_m, n),
        quad_mean=mean_q, quad_cov=cov_q,
        quad_mean_se=np.sqrt(np.diag(cov_q) / n),
        quad_cov_se=_cov_entry_se(cov_q, n),
        seed=run.seed, shards=run.shards,
        block_n=block_n, block_sum_m=block_sum_m, block_sum_mm=block_sum_mm,
        block_sum_q=block_sum_q, block_sum_qq=block_sum_qq)
    if dump_path is not None:
        write_trajectories(dump_path, k, sinks)
    return stats


def _sample_cov(sum_outer: np.ndarray, mean: np.ndarray, n: float) -> np.ndarray:
    cov = (sum_outer - n * np.outer(mean, mean)) / (n - 1.0)
    return 0.5 * (cov + cov.T)


def _cov_entry_se(cov: np.ndarray, n: float) -> np.ndarray:
    """Large-sample standard error of each sample-covariance entry under
    approximately Gaussian data: Var(C_ij) = (C_ii C_jj + C_ij^2)/(n-1)."""
    d = np.diag(cov)
    return np.sqrt((np.outer(d, d) + cov ** 2) / (n - 1.0))


def wilson_interval(accepted: int, total: int, z: float = 3.0) -> tuple[float, float]:
    """Wilson score interval for the acceptance rate."""
    if total < 1:
        raise ValueError("total must be >= 1")
    p = accepted / total
    z2 = z * z / total
    center = (p + z2 / 2.0) / (1.0 + z2)
    half = z * math.sqrt(p * (1.0 - p) / total + z2 / (4.0 * total)) / (1.0 + z2)
    return max(0.0, center - half), min(1.0, center + half)


def acceptance_rate(stats: EnsembleStats) -> tuple[float, float]:
    """Empirical acceptance rate and its binomial standard error."""
    p = stats.accepted / stats.total
    return p, math.sqrt(p * (1.0 - p) / stats.total)


def estimate_fidelity(stats: EnsembleStats, target: GaussianState,
                      resamples: int = 200) -> tuple[float, float]:
    """Gaussian fidelity of the sampled output moments against ``target``,
    with a block-bootstrap standard error (stream ``[seed, 2**63]``)."""
    point = g.fidelity(stats.output_state, target)
    nblocks = stats.block_n.size
    if nblocks < 2 or resamples < 2:
        return point, float("nan")
    rng = _kernels_py.make_stream(stats.seed, BOOTSTRAP_KEY2)
    fids = np.empty(resamples)
    for r in range(resamples):
        idx = rng.integers(0, nblocks, size=nblocks)
        n = float(stats.block_n[idx].sum())
        if n < 2.0:
            fids[r] = point
            continue
        mean = stats.block_sum_q[idx].sum(axis=0) / n
        cov = _sample_cov(stats.block_sum_qq[idx].sum(axis=0), mean, n)
        fids[r] = g.fidelity(GaussianState(mean, cov), target)
    return point, float(np.std(fids, ddof=1))


@dataclass(frozen=True)
class CalibrationResult:
    """Gains calibrated from a pilot run: the ready-to-use configuration,
    the per-axis empirical outcome amplification and the pilot stats."""

    config: GateConfig
    gamma: np.ndarray
    gamma_matrix: np.ndarray
    pilot: EnsembleStats


def calibrate_gains(config: GateConfig, input_state: GaussianState | None = None,
                    n_accepted: int = 20000, seed: int = 0, shards: int = 1,
                    budget: int = 1_000_000_000) -> CalibrationResult:
    """Empirical unity-gain calibration.

    A pilot run with zero gains (the outcome stream does not depend on the
    gains) measures the accepted-outcome variance per principal axis of
    the raw outcome law; the ratio to the raw variance is the empirical
    amplification, which is exactly the local mean response of the
    accepted ensemble.  Valid beyond the analytic reshaping's breakdown
    point, where `unity_gain_solve` has no answer.
    """
    state = input_state if input_state is not None else g.vacuum(1)
    pilot_cfg = replace(config, gains=(0.0, 0.0), gain_override=True)
    pilot_run = RunConfig(gate=pilot_cfg, input=state, n_trajectories=n_accepted,
                          seed=seed, shards=shards, budget=budget,
                          shard_key_offset=CALIBRATION_KEY2)
    stats = simulate(pilot_run)
    _, d = _raw_outcome(pilot_cfg, state)
    d_alpha = d / 4.0
    k = pilot_cfg.outcome_dims
    off_scale = math.sqrt(d_alpha[0, 0] * d_alpha[-1, -1])
    if k == 1 or abs(d_alpha[0, 1]) <= 1e-9 * off_scale:
        gamma = np.diag(stats.outcome_cov) / np.diag(d_alpha)
        gamma_matrix = np.diag(gamma)
    else:
        evals, rot = np.linalg.eigh(d_alpha)
        rotated = rot.T @ stats.outcome_cov @ rot
        gamma = np.diag(rotated) / evals
        gamma_matrix = rot @ np.diag(gamma) @ rot.T
    _, gains = solve_gains_from_gamma(
        config.r_t, config.t_m, config.ancilla, config.eta_inloop,
        gamma_matrix, t_s=config.t_s, cross_tol=1e-5)
    calibrated = replace(config, gains=gains, gain_override=True)
    return CalibrationResult(config=calibrated, gamma=np.atleast_1d(gamma),
                             gamma_matrix=np.atleast_2d(gamma_matrix),
                             pilot=stats)


def _raw_outcome(config: GateConfig, state: GaussianState):
    _, _, _, mu_m, d = joint_moments(
        config.t_s, config.t_m, config.ancilla, config.eta_inloop, state)
    return mu_m, d


# ---------------------------------------------------------------------------
# raw-trajectory dump

def _record_dtype(k: int) -> np.dtype:
    return np.dtype([("outcome", "<f8", (k,)), ("accepted", "u1"),
                     ("quad", "<f8", (2,))])


def write_trajectories(path, k: int, shard_sinks: list[list]) -> None:
    """Binary dump: 16-byte header (magic, version u8, k u8, six zero
    bytes) then packed little-endian records ``(outcome f64 x k,
    accepted u8, quad f64 x 2)``; quads are NaN for rejected
    trajectories.  Shards appear in shard order."""
    dtype = _record_dtype(k)
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC + bytes([DUMP_VERSION, k]) + b"\x00" * 6)
        for sink in shard_sinks:
            for a, acc, q in sink:
                rec = np.empty(a.shape[0], dtype=dtype)
                rec["outcome"] = a.reshape(-1, k)
                rec["accepted"] = acc.astype(np.uint8)
                qq = q.copy()
                qq[~acc] = np.nan
                rec["quad"] = qq
                fh.write(rec.tobytes())


def read_trajectories(path) -> tuple[dict, np.ndarray]:
    """Read a dump written by `write_trajectories`."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:8] != DUMP_MAGIC:
            raise ValueError("not a trajectory dump (bad magic)")
        version, k = header[8], header[9]
        if version != DUMP_VERSION:
            raise ValueError(f"unsupported dump version {version}")
        body = fh.read()
    records = np.frombuffer(body, dtype=_record_dtype(k))
    return {"version": version, "k": k}, records
