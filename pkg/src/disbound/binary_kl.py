"""Binary KL divergence, its inverse by bisection, and the inverse's partials."""

from dataclasses import dataclass
import math

import numpy as np

from . import _kernels

DEFAULT_TOL = 1e-12
MAX_ITER = 200
GRAD_GUARD = 1e-12


class InfiniteDivergenceError(ArithmeticError):
    """kl(q||p) is +inf because p sits on {0, 1} while q differs from it."""


class DegeneratePointError(ValueError):
    """The inverse's derivative is singular at the requested point."""


@dataclass(frozen=True)
class KlInverseResult:
    p_star: float
    iterations: int
    residual: float


def _check_risk(name, value):
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


def kl(q, p):
    """Binary KL divergence kl(q||p) with 0 ln 0 = 0.

    Accepts scalars or arrays; raises InfiniteDivergenceError if any entry
    is infinite.
    """
    q_arr = np.asarray(q, dtype=np.float64)
    p_arr = np.asarray(p, dtype=np.float64)
    q_arr, p_arr = np.broadcast_arrays(q_arr, p_arr)
    if np.any((q_arr < 0) | (q_arr > 1) | (p_arr < 0) | (p_arr > 1)) or np.any(np.isnan(q_arr + p_arr)):
        raise ValueError("risks must lie in [0, 1]")
    out = _kernels.kl_batch(q_arr.ravel(), p_arr.ravel()).reshape(q_arr.shape)
    if np.any(np.isinf(out)):
        raise InfiniteDivergenceError("kl(q||p) is infinite: p is 0 or 1 and q differs from p")
    if out.ndim == 0:
        return float(out)
    return out


def kl_inverse(q, psi, tol=DEFAULT_TOL):
    """Largest p in [q, 1) with kl(q||p) <= psi, to absolute tolerance tol."""
    q = float(q)
    psi = float(psi)
    _check_risk("q", q)
    if not math.isfinite(psi):
        raise ValueError(f"psi must be finite, got {psi!r}")
    if psi < 0:
        raise ValueError(f"psi must be nonnegative, got {psi!r}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    p_star, iterations = _kernels.kl_inverse_scalar(q, psi, tol, MAX_ITER)
    residual = abs(_kernels._kl_scalar(q, p_star) - psi) if q < 1.0 else 0.0
    return KlInverseResult(float(p_star), int(iterations), float(residual))


def kl_inverse_many(q, psi, tol=DEFAULT_TOL):
    """Vectorized kl_inverse returning only the p_star array."""
    q_arr, psi_arr = np.broadcast_arrays(np.asarray(q, dtype=np.float64), np.asarray(psi, dtype=np.float64))
    if np.any((q_arr < 0) | (q_arr > 1)):
        raise ValueError("q must lie in [0, 1]")
    if not np.all(np.isfinite(psi_arr)) or np.any(psi_arr < 0):
        raise ValueError("psi must be finite and nonnegative")
    p_star, _ = _kernels.kl_inverse_batch(q_arr.ravel(), psi_arr.ravel(), tol, MAX_ITER)
    return p_star.reshape(q_arr.shape)


def kl_inverse_grad(q, psi):
    """Partial derivatives (d/dq, d/dpsi) of kl_inverse at (q, psi)."""
    q = float(q)
    psi = float(psi)
    if not (0.0 < q < 1.0):
        raise ValueError(f"q must lie in (0, 1), got {q!r}")
    if not math.isfinite(psi):
        raise ValueError(f"psi must be finite, got {psi!r}")
    if psi < GRAD_GUARD:
        raise DegeneratePointError(f"psi={psi!r} is below the singularity guard {GRAD_GUARD}")
    p = kl_inverse(q, psi).p_star
    denom = (1.0 - q) / (1.0 - p) - q / p
    d_q = (math.log1p(-q) - math.log1p(-p) - math.log(q / p)) / denom
    d_psi = 1.0 / denom
    return d_q, d_psi


def pinsker_gap(q, p):
    """kl(q||p) - 2 (q - p)^2, nonnegative by Pinsker's inequality."""
    diff = np.asarray(q, dtype=np.float64) - np.asarray(p, dtype=np.float64)
    return kl(q, p) - 2.0 * diff**2
