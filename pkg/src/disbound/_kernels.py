"""Hot numerical kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``DISBOUND_DISABLE_NUMBA`` is unset (or set to ``0``).  Both paths
are always importable so they can be compared in tests and benchmarks.
"""

import math
import os

import numpy as np
from scipy.special import gammaln, logsumexp

BRACKET_CEILING = 1.0 - 1e-15


def _numba_requested():
    flag = os.environ.get("DISBOUND_DISABLE_NUMBA", "0").strip().lower()
    return flag in ("", "0", "false", "no")


try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _numba_requested()


def _maybe_njit(fn):
    if _njit is None:
        return fn
    return _njit(cache=True)(fn)


# ---------------------------------------------------------------- scalar code
# Written in the numba-compatible subset so the same source serves both paths.


def _kl_scalar(q, p):
    if q == p:
        return 0.0
    if p <= 0.0 or p >= 1.0:
        return math.inf
    # log1p of relative differences keeps full relative accuracy near q == p
    d = q - p
    out = 0.0
    if q > 0.0:
        if abs(d) < 0.5 * p:
            out += q * math.log1p(d / p)
        else:
            out += q * math.log(q / p)
    if q < 1.0:
        if abs(d) < 0.5 * (1.0 - p):
            out += (1.0 - q) * math.log1p(-d / (1.0 - p))
        else:
            out += (1.0 - q) * math.log((1.0 - q) / (1.0 - p))
    return out if out > 0.0 else 0.0


def _make_kl_inverse(kl_fn):
    def kl_inverse(q, psi, tol, max_iter):
        if q >= 1.0:
            return 1.0, 0
        if psi <= 0.0:
            return q, 0
        lo = q
        hi = BRACKET_CEILING
        if kl_fn(q, hi) <= psi:
            return hi, 0
        it = 0
        while hi - lo > tol and it < max_iter:
            mid = 0.5 * (lo + hi)
            if kl_fn(q, mid) <= psi:
                lo = mid
            else:
                hi = mid
            it += 1
        return lo, it

    return kl_inverse


def _make_log_moment(kl_fn):
    # log of sum_k C(m,k) p^k (1-p)^(m-k) exp(m kl(k/m || p))
    def log_moment(m, p):
        logs = np.empty(m + 1)
        top = -math.inf
        lgm = math.lgamma(m + 1.0)
        for k in range(m + 1):
            if (p == 0.0 and k > 0) or (p == 1.0 and k < m):
                logs[k] = -math.inf
                continue
            val = lgm - math.lgamma(k + 1.0) - math.lgamma(m - k + 1.0)
            if k > 0:
                val += k * math.log(p)
            if k < m:
                val += (m - k) * math.log1p(-p)
            val += m * kl_fn(k / m, p)
            logs[k] = val
            if val > top:
                top = val
        acc = 0.0
        for k in range(m + 1):
            if logs[k] > -math.inf:
                acc += math.exp(logs[k] - top)
        return top + math.log(acc)

    return log_moment


def _make_batches(kl_fn, kl_inverse_fn):
    def kl_loop(q, p, out):
        for i in range(q.shape[0]):
            out[i] = kl_fn(q[i], p[i])

    def kl_inverse_loop(q, psi, tol, max_iter, out_p, out_it):
        for i in range(q.shape[0]):
            a, b = kl_inverse_fn(q[i], psi[i], tol, max_iter)
            out_p[i] = a
            out_it[i] = b

    return kl_loop, kl_inverse_loop


_kl_inverse_scalar = _make_kl_inverse(_kl_scalar)

# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:
    _kl_scalar_nb = _maybe_njit(_kl_scalar)
    _kl_inverse_scalar_nb = _maybe_njit(_make_kl_inverse(_kl_scalar_nb))
    _log_moment_nb = _maybe_njit(_make_log_moment(_kl_scalar_nb))
    _kl_batch_nb, _kl_inverse_batch_nb = (
        _maybe_njit(f) for f in _make_batches(_kl_scalar_nb, _kl_inverse_scalar_nb)
    )


def kl_batch_numba(q, p):
    q = np.ascontiguousarray(q, dtype=np.float64).ravel()
    p = np.ascontiguousarray(p, dtype=np.float64).ravel()
    out = np.empty_like(q)
    _kl_batch_nb(q, p, out)
    return out


def kl_inverse_batch_numba(q, psi, tol=1e-12, max_iter=200):
    q = np.ascontiguousarray(q, dtype=np.float64).ravel()
    psi = np.ascontiguousarray(psi, dtype=np.float64).ravel()
    out_p = np.empty_like(q)
    out_it = np.empty(q.shape[0], dtype=np.int64)
    _kl_inverse_batch_nb(q, psi, float(tol), int(max_iter), out_p, out_it)
    return out_p, out_it


def log_maurer_moment_numba(m, p):
    return float(_log_moment_nb(int(m), float(p)))


# ---------------------------------------------------------------- numpy path


def kl_batch_numpy(q, p):
    q = np.asarray(q, dtype=np.float64).ravel()
    p = np.asarray(p, dtype=np.float64).ravel()
    inner = (p > 0.0) & (p < 1.0)
    safe_p = np.where(inner, p, 0.5)
    d = q - safe_p
    near_low = np.abs(d) < 0.5 * safe_p
    near_high = np.abs(d) < 0.5 * (1.0 - safe_p)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_a = np.where(near_low, np.log1p(d / safe_p), np.log(q / safe_p))
        log_b = np.where(near_high, np.log1p(-d / (1.0 - safe_p)), np.log((1.0 - q) / (1.0 - safe_p)))
        a = np.where(q > 0.0, q * log_a, 0.0)
        b = np.where(q < 1.0, (1.0 - q) * log_b, 0.0)
    out = np.where(inner, np.maximum(a + b, 0.0), np.inf)
    out[q == p] = 0.0
    return out


def kl_inverse_batch_numpy(q, psi, tol=1e-12, max_iter=200):
    q = np.asarray(q, dtype=np.float64).ravel().copy()
    psi = np.asarray(psi, dtype=np.float64).ravel()
    n = q.shape[0]
    iterations = np.zeros(n, dtype=np.int64)
    result = q.copy()
    done = (q >= 1.0) | (psi <= 0.0)
    result[q >= 1.0] = 1.0
    hi = np.full(n, BRACKET_CEILING)
    saturated = ~done & (kl_batch_numpy(q, hi) <= psi)
    result[saturated] = BRACKET_CEILING
    done |= saturated
    lo = q.copy()
    active = ~done
    while np.any(active):
        live = active & (hi - lo > tol) & (iterations < max_iter)
        if not np.any(live):
            break
        idx = np.flatnonzero(live)
        mid = 0.5 * (lo[idx] + hi[idx])
        ok = kl_batch_numpy(q[idx], mid) <= psi[idx]
        lo[idx[ok]] = mid[ok]
        hi[idx[~ok]] = mid[~ok]
        iterations[idx] += 1
        active = live
    result[~done] = lo[~done]
    return result, iterations


def log_maurer_moment_numpy(m, p):
    m = int(m)
    k = np.arange(m + 1, dtype=np.float64)
    if p == 0.0 or p == 1.0:
        # only the atom at k = m p carries mass; kl(p||p) = 0 there
        return 0.0
    log_pmf = gammaln(m + 1.0) - gammaln(k + 1.0) - gammaln(m - k + 1.0) + k * np.log(p) + (m - k) * np.log1p(-p)
    return float(logsumexp(log_pmf + m * kl_batch_numpy(k / m, np.full(m + 1, p))))


# ---------------------------------------------------------------- dispatch

if USE_NUMBA:
    kl_batch = kl_batch_numba
    kl_inverse_batch = kl_inverse_batch_numba
    log_maurer_moment = log_maurer_moment_numba
    kl_inverse_scalar = _kl_inverse_scalar_nb
else:
    kl_batch = kl_batch_numpy
    kl_inverse_batch = kl_inverse_batch_numpy
    log_maurer_moment = log_maurer_moment_numpy
    kl_inverse_scalar = _kl_inverse_scalar

BACKEND = "numba" if USE_NUMBA else "numpy"
