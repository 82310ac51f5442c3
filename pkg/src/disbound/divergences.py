"""Divergences between equal-variance isotropic Gaussians and finite measures."""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import logsumexp

SUM_TOL = 1e-12


class AbsoluteContinuityError(ValueError):
    """The first measure puts mass where the reference measure has none."""


@dataclass(frozen=True)
class IsotropicGaussian:
    """N(mean, variance * I) over a d-dimensional weight space."""

    mean: np.ndarray
    variance: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean must have finite entries")
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise ValueError(f"variance must be positive and finite, got {self.variance!r}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", float(self.variance))

    @property
    def dim(self):
        return self.mean.shape[0]


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability vector over a finite index set."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64).ravel()
        if probs.size == 0 or np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("probs must be a nonempty vector of nonnegative finite numbers")
        if abs(probs.sum() - 1.0) > SUM_TOL * max(1, probs.size):
            raise ValueError(f"probs must sum to 1, got {probs.sum()!r}")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def normalized(cls, weights):
        weights = np.asarray(weights, dtype=np.float64)
        return cls(weights / weights.sum())

    @classmethod
    def uniform(cls, size):
        return cls(np.full(size, 1.0 / size))

    def __len__(self):
        return self.probs.shape[0]


def _squared_distance(q, p):
    if q.dim != p.dim:
        raise ValueError(f"dimension mismatch: {q.dim} vs {p.dim}")
    if q.variance != p.variance:
        raise ValueError(f"variance mismatch: {q.variance} vs {p.variance}")
    diff = q.mean - p.mean
    return float(diff @ diff)


def renyi_gaussian(q, p, alpha):
    """Renyi divergence D_alpha(q||p) = alpha ||w - v||^2 / (2 sigma^2)."""
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha!r}")
    return alpha * _squared_distance(q, p) / (2.0 * q.variance)


def kl_gaussian(q, p):
    """KL(q||p) = ||w - v||^2 / (2 sigma^2)."""
    return _squared_distance(q, p) / (2.0 * q.variance)


def disintegrated_kl_gaussian(w, eps, v, sigma2):
    """Log density ratio ln(Q(h)/P(h)) at the sampled weights h = w + eps."""
    w = np.asarray(w, dtype=np.float64).ravel()
    eps = np.asarray(eps, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if not (w.shape == eps.shape == v.shape):
        raise ValueError("w, eps and v must have equal lengths")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    shifted = w + eps - v
    return float((shifted @ shifted - eps @ eps) / (2.0 * sigma2))


def _as_probs(measure):
    if isinstance(measure, DiscreteMeasure):
        return measure.probs
    return DiscreteMeasure(measure).probs


def _check_support(q, p):
    if q.shape != p.shape:
        raise ValueError(f"size mismatch: {q.shape[0]} vs {p.shape[0]}")
    if np.any((q > 0) & (p == 0)):
        raise AbsoluteContinuityError("q is not absolutely continuous with respect to p")


def renyi_discrete(q, p, alpha):
    """(1/(alpha-1)) ln sum_h p(h) (q(h)/p(h))^alpha for finite measures."""
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha!r}")
    q = _as_probs(q)
    p = _as_probs(p)
    _check_support(q, p)
    mask = q > 0
    if math.isinf(alpha):
        return log_esssup_ratio(q, p)
    log_terms = alpha * np.log(q[mask]) - (alpha - 1.0) * np.log(p[mask])
    return max(float(logsumexp(log_terms)) / (alpha - 1.0), 0.0)


def kl_discrete(q, p):
    """KL(q||p) = sum_h q ln(q/p) for finite measures."""
    q = _as_probs(q)
    p = _as_probs(p)
    _check_support(q, p)
    mask = q > 0
    return max(float(np.sum(q[mask] * (np.log(q[mask]) - np.log(p[mask])))), 0.0)


def log_esssup_ratio(q, p):
    """ln max_{h : p(h) > 0} q(h)/p(h), the alpha -> infinity Renyi limit."""
    q = _as_probs(q)
    p = _as_probs(p)
    _check_support(q, p)
    mask = q > 0
    return float(np.max(np.log(q[mask]) - np.log(p[mask])))


def chi2_from_renyi2(d2):
    """Chi-square divergence e^{D_2} - 1; saturates to +inf on overflow."""
    if not d2 >= 0:
        raise ValueError(f"d2 must be nonnegative, got {d2!r}")
    try:
        return math.expm1(d2)
    except OverflowError:
        return math.inf
