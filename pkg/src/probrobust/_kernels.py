"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``PROBROBUST_DISABLE_NUMBA=1`` before import to force the numpy path.
Both implementations are always importable under explicit names
(``*_numpy`` / ``*_numba``) so they can be benchmarked side by side.

The counter hash works on uint64 with wraparound and is bit-identical in
both paths. Dense layers agree to rounding (summation order differs).
"""

import os

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    """splitmix64 finalizer on a Python int (bijective on 64-bit words)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def key_prefix(seed: int, stream: int) -> int:
    h = mix64((seed & _MASK) + _GOLDEN)
    return mix64(h ^ ((stream + 2 * _GOLDEN) & _MASK))


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _mix64_array(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def counter_uniforms_numpy(prefix, indices, n_sub, sub_offset):
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _mix64_array(np.uint64(prefix) ^ idx)
        subs = (np.arange(n_sub, dtype=np.uint64) + np.uint64(sub_offset) + np.uint64(1)) * np.uint64(_GOLDEN)
        out = _mix64_array(h[:, None] + subs[None, :])
    return (out >> np.uint64(11)).astype(np.float64) * _INV_2_53


def dense_numpy(X, W, b, relu):
    out = X @ W.T + b
    if relu:
        np.maximum(out, 0.0, out=out)
    return out


def margins_numpy(logits, ref):
    n = logits.shape[0]
    rows = np.arange(n)
    ref_logit = logits[rows, ref]
    masked = logits.copy()
    masked[rows, ref] = -np.inf
    return masked.max(axis=1) - ref_logit


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover
    NUMBA_AVAILABLE = False

if NUMBA_AVAILABLE:
    _U30 = np.uint64(30)
    _U27 = np.uint64(27)
    _U31 = np.uint64(31)
    _U11 = np.uint64(11)
    _UM1 = np.uint64(_M1)
    _UM2 = np.uint64(_M2)
    _UG = np.uint64(_GOLDEN)
    _U1 = np.uint64(1)

    @njit(cache=True, nogil=True)
    def _mix64_nb(z):
        z = (z ^ (z >> _U30)) * _UM1
        z = (z ^ (z >> _U27)) * _UM2
        return z ^ (z >> _U31)

    @njit(cache=True, nogil=True)
    def _counter_uniforms_nb(prefix, idx, n_sub, sub_offset):
        n = idx.shape[0]
        out = np.empty((n, n_sub), dtype=np.float64)
        for i in range(n):
            h = _mix64_nb(prefix ^ idx[i])
            for s in range(n_sub):
                sub = (np.uint64(s) + sub_offset + _U1) * _UG
                v = _mix64_nb(h + sub)
                out[i, s] = np.float64(v >> _U11) * _INV_2_53
        return out

    def counter_uniforms_numba(prefix, indices, n_sub, sub_offset):
        idx = np.ascontiguousarray(indices, dtype=np.uint64)
        return _counter_uniforms_nb(np.uint64(prefix), idx, int(n_sub), np.uint64(sub_offset))

    @njit(cache=True, nogil=True)
    def _bias_act_nb(Z, b, relu):
        n, m = Z.shape
        for i in range(n):
            for j in range(m):
                s = Z[i, j] + b[j]
                if relu and s < 0.0:
                    s = 0.0
                Z[i, j] = s
        return Z

    def dense_numba(X, W, b, relu):
        # the product stays in BLAS; a hand loop is several times slower
        Z = np.ascontiguousarray(X, dtype=np.float64) @ W.T
        return _bias_act_nb(Z, b, bool(relu))

    @njit(cache=True, nogil=True)
    def _margins_nb(logits, ref):
        n, c = logits.shape
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            r = ref[i]
            best = -np.inf
            for j in range(c):
                if j != r and logits[i, j] > best:
                    best = logits[i, j]
            out[i] = best - logits[i, r]
        return out

    def margins_numba(logits, ref):
        return _margins_nb(np.ascontiguousarray(logits), np.ascontiguousarray(ref, dtype=np.int64))


USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("PROBROBUST_DISABLE_NUMBA", "") not in ("1", "true", "yes")

if USE_NUMBA:
    counter_uniforms = counter_uniforms_numba
    dense = dense_numba
    margins = margins_numba
else:
    counter_uniforms = counter_uniforms_numpy
    dense = dense_numpy
    margins = margins_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
