"""Loop-bound numeric kernels with optional numba acceleration.

Two implementations exist for every kernel: a numba ``@njit`` version and a
pure numpy/python fallback. Selection happens once at import time: setting
the environment variable ``MIXSUM_NUMBA=0`` (or ``false``/``off``) forces the
fallback path, as does an unavailable numba install. Both paths are exact
integer computations and return identical results.

Dense linear algebra (matmul, attention) is deliberately NOT routed through
numba; numpy's BLAS already owns those. The kernels here are the ones that
would otherwise run as interpreted Python loops: LCS table fill for ROUGE-L
and the pair-count/merge scans of subword vocabulary training.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("MIXSUM_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in ("0", "false", "off", "no")

USING_NUMBA = False
if _WANT_NUMBA:
    try:
        from numba import njit

        USING_NUMBA = True
    except ImportError:
        USING_NUMBA = False


# ---------------------------------------------------------------------------
# LCS length (ROUGE-L)
# ---------------------------------------------------------------------------

def _lcs_length_py(a: np.ndarray, b: np.ndarray) -> int:
    # Row sweep: dp[j] = max(diag+1 if match else 0, up, left), with the
    # left dependency resolved by a running maximum.
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    prev = np.zeros(m + 1, dtype=np.int64)
    curr = np.zeros(m + 1, dtype=np.int64)
    for i in range(n):
        cand = np.where(b == a[i], prev[:m] + 1, 0)
        curr[1:] = np.maximum.accumulate(np.maximum(cand, prev[1:]))
        prev, curr = curr, prev
    return int(prev[m])


def _lcs_length_nb(a, b):  # pragma: no cover - exercised via dispatch
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    prev = np.zeros(m + 1, dtype=np.int64)
    curr = np.zeros(m + 1, dtype=np.int64)
    for i in range(n):
        ai = a[i]
        for j in range(m):
            if b[j] == ai:
                v = prev[j] + 1
            else:
                v = prev[j + 1]
            if curr[j] > v:
                v = curr[j]
            curr[j + 1] = v
        for j in range(m + 1):
            prev[j] = curr[j]
    return int(prev[m])


# ---------------------------------------------------------------------------
# BPE training scans
#
# A word table is (flat, bounds, freqs): all symbol sequences concatenated
# into one int64 array, word w spanning flat[bounds[w]:bounds[w+1]], with
# occurrence count freqs[w].
# ---------------------------------------------------------------------------

_PAIR_SHIFT = 32  # symbol ids stay below 2**31, so (a << 32) | b is unique


def _best_pair_py(flat: np.ndarray, bounds: np.ndarray, freqs: np.ndarray):
    counts: dict[int, int] = {}
    for w in range(len(freqs)):
        lo, hi = bounds[w], bounds[w + 1]
        f = int(freqs[w])
        for i in range(lo, hi - 1):
            key = (int(flat[i]) << _PAIR_SHIFT) | int(flat[i + 1])
            counts[key] = counts.get(key, 0) + f
    if not counts:
        return -1, -1, 0
    # highest count wins; ties broken by the lexicographically smallest pair
    best_key = min(counts, key=lambda k: (-counts[k], k))
    return best_key >> _PAIR_SHIFT, best_key & 0xFFFFFFFF, counts[best_key]


def _best_pair_nb(flat, bounds, freqs):  # pragma: no cover
    counts = {}
    for w in range(len(freqs)):
        lo = bounds[w]
        hi = bounds[w + 1]
        f = freqs[w]
        for i in range(lo, hi - 1):
            key = (flat[i] << _PAIR_SHIFT) | flat[i + 1]
            if key in counts:
                counts[key] += f
            else:
                counts[key] = f
    best_key = np.int64(-1)
    best_count = np.int64(0)
    for key in counts:
        c = counts[key]
        if c > best_count or (c == best_count and key < best_key):
            best_key = key
            best_count = c
    if best_count == 0:
        return -1, -1, 0
    return int(best_key >> _PAIR_SHIFT), int(best_key & 0xFFFFFFFF), int(best_count)


def _apply_merge_py(flat: np.ndarray, bounds: np.ndarray, a: int, b: int, new_id: int):
    out = np.empty_like(flat)
    new_bounds = np.empty_like(bounds)
    new_bounds[0] = 0
    pos = 0
    for w in range(len(bounds) - 1):
        lo, hi = int(bounds[w]), int(bounds[w + 1])
        i = lo
        while i < hi:
            if i + 1 < hi and flat[i] == a and flat[i + 1] == b:
                out[pos] = new_id
                i += 2
            else:
                out[pos] = flat[i]
                i += 1
            pos += 1
        new_bounds[w + 1] = pos
    return out[:pos].copy(), new_bounds


def _apply_merge_nb(flat, bounds, a, b, new_id):  # pragma: no cover
    out = np.empty_like(flat)
    new_bounds = np.empty_like(bounds)
    new_bounds[0] = 0
    pos = 0
    for w in range(len(bounds) - 1):
        lo = bounds[w]
        hi = bounds[w + 1]
        i = lo
        while i < hi:
            if i + 1 < hi and flat[i] == a and flat[i + 1] == b:
                out[pos] = new_id
                i += 2
            else:
                out[pos] = flat[i]
                i += 1
            pos += 1
        new_bounds[w + 1] = pos
    return out[:pos].copy(), new_bounds


if USING_NUMBA:
    lcs_length = njit(cache=True)(_lcs_length_nb)
    best_pair = njit(cache=True)(_best_pair_nb)
    apply_merge = njit(cache=True)(_apply_merge_nb)
else:
    lcs_length = _lcs_length_py
    best_pair = _best_pair_py
    apply_merge = _apply_merge_py
