# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled trajectory kernel.

Implements exactly the stream contract of ``_kernels_py`` (same Philox
streams, same three-phase batch draws, same accept decisions); see that
module's docstring.  Accumulation order differs, so merged moments may
differ from the portable kernel in the last floating-point bits.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp

import numpy as np

cimport numpy as cnp
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_normal,
    random_standard_uniform,
)

from ._kernels_py import BATCH as _BATCH
from ._kernels_py import ShardResult, make_stream

cnp.import_array()

BACKEND_NAME = "cython"

cdef int BATCH = _BATCH


def run_shard(params, seed, key2, limit, quota, block_size, by_accepted,
              sink=None):
    """Drop-in replacement for ``_kernels_py.run_shard`` (no sink support;
    the portable kernel handles raw dumps)."""
    if sink is not None:
        raise ValueError("the compiled kernel does not collect raw records")
    gen = make_stream(seed, key2)
    capsule = gen.bit_generator.capsule
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")

    cdef int k = params.k
    cdef double mu0 = params.mu_alpha[0]
    cdef double mu1 = params.mu_alpha[1] if k == 2 else 0.0
    cdef double ch00 = params.chol_alpha[0, 0]
    cdef double ch10 = params.chol_alpha[1, 0] if k == 2 else 0.0
    cdef double ch11 = params.chol_alpha[1, 1] if k == 2 else 0.0
    cdef double lam = params.lam
    cdef double ac2 = params.alpha_c2
    cdef double c00_ = params.c0[0]
    cdef double c01_ = params.c0[1]
    cdef double cm00 = params.cmap[0, 0]
    cdef double cm10 = params.cmap[1, 0]
    cdef double cm01 = params.cmap[0, 1] if k == 2 else 0.0
    cdef double cm11 = params.cmap[1, 1] if k == 2 else 0.0
    cdef double cc00 = params.chol_cond[0, 0]
    cdef double cc10 = params.chol_cond[1, 0]
    cdef double cc11 = params.chol_cond[1, 1]

    cdef long long limit_c = limit
    cdef long long quota_c = quota if quota is not None else -1
    cdef long long block_c = block_size
    cdef bint by_acc = 1 if by_accepted else 0

    cdef long long max_blocks
    if by_acc:
        max_blocks = (quota_c // block_c if quota_c >= 0 else 0) + 2
    else:
        max_blocks = limit_c // block_c + 2

    bn_arr = np.zeros(max_blocks, dtype=np.int64)
    bsm_arr = np.zeros((max_blocks, k))
    bsmm_arr = np.zeros((max_blocks, k, k))
    bsq_arr = np.zeros((max_blocks, 2))
    bsqq_arr = np.zeros((max_blocks, 2, 2))
    cdef long long[::1] bn = bn_arr
    cdef double[:, ::1] bsm = bsm_arr
    cdef double[:, :, ::1] bsmm = bsmm_arr
    cdef double[:, ::1] bsq = bsq_arr
    cdef double[:, :, ::1] bsqq = bsqq_arr

    zbuf = np.empty(BATCH * k)
    ubuf = np.empty(BATCH)
    wbuf = np.empty(BATCH * 2)
    cdef double[::1] zb = zbuf
    cdef double[::1] ub = ubuf
    cdef double[::1] wb = wbuf

    # current-block accumulators
    cdef long long blk = 0, fill = 0, n_in_blk = 0
    cdef double sm0 = 0, sm1 = 0, smm00 = 0, smm01 = 0, smm11 = 0
    cdef double sq0 = 0, sq1 = 0, sqq00 = 0, sqq01 = 0, sqq11 = 0

    cdef long long processed = 0, accepted = 0
    cdef long long i, n_use, used
    cdef double z0, z1, a0, a1, r2, arg, w0, w1, q0, q1
    cdef bint acc, hit_quota = 0

    with gen.bit_generator.lock:
        while processed < limit_c and (quota_c < 0 or accepted < quota_c):
            with nogil:
                for i in range(BATCH * k):
                    zb[i] = random_standard_normal(rng)
                for i in range(BATCH):
                    ub[i] = random_standard_uniform(rng)
                for i in range(BATCH * 2):
                    wb[i] = random_standard_normal(rng)
                n_use = limit_c - processed
                if n_use > BATCH:
                    n_use = BATCH
                used = n_use
                for i in range(n_use):
                    z0 = zb[i * k]
                    a0 = mu0 + ch00 * z0
                    if k == 2:
                        z1 = zb[i * k + 1]
                        a1 = mu1 + (ch10 * z0 + ch11 * z1)
                        r2 = a0 * a0 + a1 * a1
                    else:
                        a1 = 0.0
                        r2 = a0 * a0
                    arg = lam * (r2 - ac2)
                    if arg > 0.0:
                        arg = 0.0
                    acc = ub[i] < exp(arg)
                    w0 = wb[2 * i]
                    w1 = wb[2 * i + 1]
                    q0 = (c00_ + (cm00 * a0 + cm01 * a1)) + cc00 * w0
                    q1 = (c01_ + (cm10 * a0 + cm11 * a1)) + (cc10 * w0 + cc11 * w1)
                    if acc:
                        accepted += 1
                        n_in_blk += 1
                        sm0 += a0
                        smm00 += a0 * a0
                        if k == 2:
                            sm1 += a1
                            smm01 += a0 * a1
                            smm11 += a1 * a1
                        sq0 += q0
                        sq1 += q1
                        sqq00 += q0 * q0
                        sqq01 += q0 * q1
                        sqq11 += q1 * q1
                        if by_acc:
                            fill += 1
                    if not by_acc:
                        fill += 1
                    if fill == block_c:
                        if n_in_blk > 0:
                            bn[blk] = n_in_blk
                            bsm[blk, 0] = sm0
                            bsmm[blk, 0, 0] = smm00
                            if k == 2:
                                bsm[blk, 1] = sm1
                                bsmm[blk, 0, 1] = smm01
                                bsmm[blk, 1, 0] = smm01
                                bsmm[blk, 1, 1] = smm11
                            bsq[blk, 0] = sq0
                            bsq[blk, 1] = sq1
                            bsqq[blk, 0, 0] = sqq00
                            bsqq[blk, 0, 1] = sqq01
                            bsqq[blk, 1, 0] = sqq01
                            bsqq[blk, 1, 1] = sqq11
                            blk += 1
                        fill = 0
                        n_in_blk = 0
                        sm0 = sm1 = smm00 = smm01 = smm11 = 0
                        sq0 = sq1 = sqq00 = sqq01 = sqq11 = 0
                    if quota_c >= 0 and accepted == quota_c:
                        used = i + 1
                        hit_quota = 1
                        break
                processed += used
            if hit_quota:
                break

    # final partial block
    if n_in_blk > 0:
        bn_arr[blk] = n_in_blk
        bsm_arr[blk, 0] = sm0
        bsmm_arr[blk, 0, 0] = smm00
        if k == 2:
            bsm_arr[blk, 1] = sm1
            bsmm_arr[blk, 0, 1] = smm01
            bsmm_arr[blk, 1, 0] = smm01
            bsmm_arr[blk, 1, 1] = smm11
        bsq_arr[blk, 0] = sq0
        bsq_arr[blk, 1] = sq1
        bsqq_arr[blk, 0, 0] = sqq00
        bsqq_arr[blk, 0, 1] = sqq01
        bsqq_arr[blk, 1, 0] = sqq01
        bsqq_arr[blk, 1, 1] = sqq11
        blk += 1

    return ShardResult(
        processed=int(processed), accepted=int(accepted),
        block_n=bn_arr[:blk].copy(), block_sum_m=bsm_arr[:blk].copy(),
        block_sum_mm=bsmm_arr[:blk].copy(), block_sum_q=bsq_arr[:blk].copy(),
        block_sum_qq=bsqq_arr[:blk].copy())
