"""Numba kernels for the all-pairs sweeps.

Every condensed slot is written independently and the per-pair routines are
shared between the sweeps and the scalar APIs, so results are bitwise
identical whether a pair is computed alone, inside a sweep, or under any
thread count.

The NUMBA_NUM_THREADS bump below must run before numba is imported anywhere
in the process; it lets callers oversubscribe a small machine (the sweeps
scale fine with more threads than cores and results do not depend on it).
"""

from __future__ import annotations

import math
import os
import sys

os.environ.setdefault("NUMBA_NUM_THREADS", str(max(os.cpu_count() or 1, 16)))

import numba
import numpy as np
from numba import njit, prange

from .errors import ConfigError

# block count for prange scheduling; fixed so slot->block assignment never
# depends on the thread count
_SWEEP_BLOCKS = 1024


def set_threads(requested: int) -> int:
    """Set the numba worker count, clamping to the process maximum."""
    if requested < 1:
        raise ConfigError(f"thread count must be >= 1, got {requested}")
    maxt = int(numba.config.NUMBA_NUM_THREADS)
    actual = min(int(requested), maxt)
    if actual < requested:
        print(f"gridmi: clamping {requested} threads to process max {maxt}",
              file=sys.stderr)
    numba.set_num_threads(actual)
    return actual


@njit(cache=True)
def decode_pair(k, n):
    """Condensed index k -> (i, j), i < j, row-major upper triangle."""
    i = int((2 * n - 1 - math.sqrt((2.0 * n - 1.0) ** 2 - 8.0 * k)) * 0.5)
    if i < 0:
        i = 0
    while i * n - (i * (i + 1)) // 2 > k:
        i -= 1
    while (i + 1) * n - ((i + 1) * (i + 2)) // 2 <= k:
        i += 1
    j = k - (i * n - (i * (i + 1)) // 2) + i + 1
    return i, j


@njit(cache=True)
def _mi_pair_into(li, lj, ma, mb, q, lut, joint):
    """Plug-in MI in nats for one label pair, using a caller-owned Q x Q
    scratch buffer.

    Orientation is canonicalized (lexicographically smaller label row first)
    so the value is bitwise symmetric in the arguments.
    """
    t = li.shape[0]
    swap = False
    for s in range(t):
        if li[s] != lj[s]:
            swap = li[s] > lj[s]
            break
    if swap:
        li, lj = lj, li
        ma, mb = mb, ma
    for a in range(q):
        for b in range(q):
            joint[a, b] = 0
    for s in range(t):
        joint[li[s], lj[s]] += 1
    log_t = lut[t]
    acc = 0.0
    for a in range(q):
        la = lut[ma[a]]
        for b in range(q):
            nab = joint[a, b]
            if nab > 0:
                acc += (nab / t) * (lut[nab] + log_t - la - lut[mb[b]])
    # absorb summation roundoff: the exact value lies in [0, ln q]
    if acc < 0.0:
        acc = 0.0
    elif acc > lut[q]:
        acc = lut[q]
    return acc


@njit(cache=True)
def mi_pair_nats(li, lj, ma, mb, q, lut):
    """Single-pair MI; same bits as the sweep's per-slot value."""
    joint = np.zeros((q, q), dtype=np.int64)
    return _mi_pair_into(li, lj, ma, mb, q, lut, joint)


@njit(parallel=True, cache=True)
def mi_sweep(labels, margins, lut, out):
    """All-pairs plug-in MI into the condensed vector `out`.

    labels: (N, T) uint8, C-contiguous. margins: (N, Q) int64.
    """
    n = labels.shape[0]
    q = margins.shape[1]
    m = n * (n - 1) // 2
    nb = _SWEEP_BLOCKS if m > _SWEEP_BLOCKS else m
    for b in prange(nb):
        k0 = b * m // nb
        k1 = (b + 1) * m // nb
        if k1 > k0:
            joint = np.zeros((q, q), dtype=np.int64)
            i, j = decode_pair(k0, n)
            for k in range(k0, k1):
                out[k] = _mi_pair_into(labels[i], labels[j],
                                       margins[i], margins[j], q, lut, joint)
                j += 1
                if j == n:
                    i += 1
                    j = i + 1


@njit(cache=True)
def corr_pair(zi, zj):
    """Dot product of two standardized rows (zero mean, unit norm)."""
    acc = 0.0
    for s in range(zi.shape[0]):
        acc += zi[s] * zj[s]
    return acc


@njit(parallel=True, cache=True)
def corr_sweep(z, out):
    """All-pairs correlations of standardized rows into `out`.

    z: (N, T) float64, rows zero-mean and unit-norm.
    """
    n = z.shape[0]
    m = n * (n - 1) // 2
    nb = _SWEEP_BLOCKS if m > _SWEEP_BLOCKS else m
    for b in prange(nb):
        k0 = b * m // nb
        k1 = (b + 1) * m // nb
        if k1 > k0:
            i, j = decode_pair(k0, n)
            for k in range(k0, k1):
                out[k] = corr_pair(z[i], z[j])
                j += 1
                if j == n:
                    i += 1
                    j = i + 1
