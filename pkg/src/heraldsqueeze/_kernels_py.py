"""Portable trajectory kernel (NumPy implementation).

Stream contract (shared with the compiled kernel, bit-for-bit):

* Each shard owns one counter-based stream: ``Philox(key=[seed, key2])``
  wrapped in a ``numpy.random.Generator``.
* Trajectories are drawn in fixed batches of ``BATCH = 65536`` in three
  phases per batch, in this exact order:

  1. ``standard_normal((BATCH, k))`` — outcome noise,
  2. ``random(BATCH)``              — acceptance uniforms,
  3. ``standard_normal((BATCH, 2))``— output-quadrature noise.

  A batch is always drawn in full even when only a prefix is consumed
  (budget cap or accepted-count quota reached mid-batch), so the stream
  position never depends on the acceptance pattern.
* Trajectory ``i``: outcome ``alpha_i = mu + L_A z_i`` (alpha units),
  accepted iff ``u_i < exp(min(lam (|alpha_i|^2 - alpha_c^2), 0))``,
  output quadrature sample ``q_i = c0 + C alpha_i + L_cond w_i``.
* In accepted-count mode a shard stops at the trajectory of its quota-th
  acceptance; later rows of that batch are discarded.

Per-backend results are deterministic for fixed (seed, shards).  Across
backends the trajectory streams and accept decisions are identical;
accumulated moments may differ in the last floating-point bits because
summation order differs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BATCH = 65536


@dataclass(frozen=True)
class KernelParams:
    """Precomputed per-run constants, all plain float64 arrays.

    ``k`` outcome dimensions; outcome law N(mu_alpha, L_A L_A^T) in alpha
    units; acceptance exponent ``lam`` and squared cutoff ``alpha_c2``;
    output sample map q = c0 + cmap @ alpha + chol_cond @ w.
    """

    k: int
    mu_alpha: np.ndarray     # (k,)
    chol_alpha: np.ndarray   # (k, k) lower triangular
    lam: float
    alpha_c2: float
    c0: np.ndarray           # (2,)
    cmap: np.ndarray         # (2, k)
    chol_cond: np.ndarray    # (2, 2) lower triangular


@dataclass
class ShardResult:
    """Raw per-shard tallies; blocks are in stream order."""

    processed: int
    accepted: int
    block_n: np.ndarray       # (K,) accepted count per block
    block_sum_m: np.ndarray   # (K, k) accepted outcome sums
    block_sum_mm: np.ndarray  # (K, k, k) accepted outcome outer-product sums
    block_sum_q: np.ndarray   # (K, 2) accepted quadrature sums
    block_sum_qq: np.ndarray  # (K, 2, 2)


class _BlockAccumulator:
    """Chops the accepted stream into blocks of sufficient statistics.

    The block counter advances by accepted samples (``by_accepted``) or by
    processed trajectories; blocks with zero accepted samples are dropped.
    """

    def __init__(self, k: int, block_size: int, by_accepted: bool) -> None:
        self.k = k
        self.block_size = block_size
        self.by_accepted = by_accepted
        self.fill = 0  # accepted or processed count inside the current block
        self._reset_sums()
        self.blocks: list[tuple] = []

    def _reset_sums(self) -> None:
        k = self.k
        self.n = 0
        self.sm = np.zeros(k)
        self.smm = np.zeros((k, k))
        self.sq = np.zeros(2)
        self.sqq = np.zeros((2, 2))

    def _push(self) -> None:
        if self.n > 0:
            self.blocks.append((self.n, self.sm, self.smm, self.sq, self.sqq))
        self._reset_sums()
        self.fill = 0

    def _add_accepted(self, a: np.ndarray, q: np.ndarray) -> None:
        self.n += a.shape[0]
        self.sm += a.sum(axis=0)
        self.smm += a.T @ a
        self.sq += q.sum(axis=0)
        self.sqq += q.T @ q

    def add_batch(self, a: np.ndarray, acc: np.ndarray, q: np.ndarray) -> None:
        if self.by_accepted:
            idx = np.nonzero(acc)[0]
            pos = 0
            while pos < idx.size:
                take = min(idx.size - pos, self.block_size - self.fill)
                sel = idx[pos:pos + take]
                self._add_accepted(a[sel], q[sel])
                self.fill += take
                pos += take
                if self.fill == self.block_size:
                    self._push()
        else:
            start = 0
            n_use = acc.shape[0]
            while start < n_use:
                take = min(n_use - start, self.block_size - self.fill)
                sl = slice(start, start + take)
                sel = np.nonzero(acc[sl])[0] + start
                if sel.size:
                    self._add_accepted(a[sel], q[sel])
                self.fill += take
                start += take
                if self.fill == self.block_size:
                    self._push()

    def finish(self) -> tuple:
        self._push()
        k = self.k
        m = len(self.blocks)
        out = (np.empty(m, dtype=np.int64), np.empty((m, k)),
               np.empty((m, k, k)), np.empty((m, 2)), np.empty((m, 2, 2)))
        for i, blk in enumerate(self.blocks):
            for j in range(5):
                out[j][i] = blk[j]
        return out


def make_stream(seed: int, key2: int) -> np.random.Generator:
    """The shard stream: Philox keyed by (seed, key2)."""
    key = np.array([np.uint64(seed), np.uint64(key2)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def run_shard(params: KernelParams, seed: int, key2: int, limit: int,
              quota: int | None, block_size: int, by_accepted: bool,
              sink: list | None = None) -> ShardResult:
    """Process one shard; see the module docstring for the stream contract.

    ``limit`` caps processed trajectories; ``quota`` (if given) stops the
    shard at its quota-th acceptance.  ``sink`` (portable backend only)
    receives per-batch ``(alpha, accepted, quads)`` arrays for raw dumps.
    """
    rng = make_stream(seed, key2)
    k = params.k
    mu = params.mu_alpha
    cht = params.chol_alpha.T.copy()
    lam = params.lam
    ac2 = params.alpha_c2
    c0 = params.c0
    cmt = params.cmap.T.copy()
    cct = params.chol_cond.T.copy()
    acc_blocks = _BlockAccumulator(k, block_size, by_accepted)
    processed = 0
    accepted = 0
    while processed < limit and (quota is None or accepted < quota):
        z = rng.standard_normal((BATCH, k))
        u = rng.random(BATCH)
        w = rng.standard_normal((BATCH, 2))
        n_use = min(BATCH, limit - processed)
        a = mu + z[:n_use] @ cht
        r2 = np.einsum("ij,ij->i", a, a)
        arg = lam * (r2 - ac2)
        p = np.exp(np.minimum(arg, 0.0))
        acc = u[:n_use] < p
        if quota is not None:
            hits = np.cumsum(acc)
            need = quota - accepted
            if hits.size and hits[-1] >= need:
                n_use = int(np.searchsorted(hits, need)) + 1
                a = a[:n_use]
                acc = acc[:n_use]
        q = c0 + a @ cmt + w[:n_use] @ cct
        processed += n_use
        accepted += int(np.count_nonzero(acc))
        acc_blocks.add_batch(a, acc, q)
        if sink is not None:
            sink.append((a, acc, q))
    bn, bsm, bsmm, bsq, bsqq = acc_blocks.finish()
    return ShardResult(processed=processed, accepted=accepted, block_n=bn,
                       block_sum_m=bsm, block_sum_mm=bsmm, block_sum_q=bsq,
                       block_sum_qq=bsqq)


BACKEND_NAME = "numpy"
