"""Bound calculators for disintegrated PAC-Bayes statements.

Every kl-form certificate is ``kl_inverse(empirical_risk, psi)`` where the
budget ``psi`` is a divergence term plus a log term, scaled by 1/m.
"""

from dataclasses import dataclass, field, asdict
import json
import math

import numpy as np

from .binary_kl import kl_inverse
from .divergences import (
    DiscreteMeasure,
    IsotropicGaussian,
    disintegrated_kl_gaussian,
    log_esssup_ratio,
)

SCHEMA_VERSION = 1
DEFAULT_C_GRID = tuple(10.0**k for k in range(-3, 4))
METHODS = ("ours", "rivasplata", "blanchard", "catoni", "stochastic")


class UnsupportedSpaceError(ValueError):
    """The requested quantity needs a finite hypothesis space."""


@dataclass(frozen=True)
class BoundContext:
    m: int
    delta: float
    t_priors: int = 1
    alpha: float = 2.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m!r}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if int(self.t_priors) != self.t_priors or self.t_priors < 1:
            raise ValueError(f"t_priors must be a positive integer, got {self.t_priors!r}")
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha!r}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "t_priors", int(self.t_priors))


@dataclass
class BoundReport:
    method: str
    m: int
    delta: float
    t_priors: int
    sigma2: float | None
    empirical_risk: float
    divergence_term: float
    log_term: float
    psi: float
    certified_risk: float
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        out = asdict(self)
        out["T"] = out.pop("t_priors")
        out["divergence"] = out.pop("divergence_term")
        out["schema_version"] = SCHEMA_VERSION
        return out

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


def _check_risk(r):
    if not (0.0 <= r <= 1.0):
        raise ValueError(f"empirical risk must lie in [0, 1], got {r!r}")


def maurer_moment_bound(m):
    """Upper bound 2 sqrt(m) on E exp(m kl(R_S || R_D)) for [0,1] losses."""
    if m < 1:
        raise ValueError("m must be at least 1")
    return 2.0 * math.sqrt(m)


# ------------------------------------------------------------ budgets


def ours_log_term(ctx):
    return math.log(16.0 * ctx.t_priors * math.sqrt(ctx.m) / ctx.delta**3)


def ours_log_term_parts(ctx):
    """Split of the ours log term into the moment, union and disintegration costs."""
    return {
        "maurer_and_delta": math.log(2.0 * math.sqrt(ctx.m) / ctx.delta),
        "prior_union": math.log(ctx.t_priors),
        "disintegration": math.log(8.0 / ctx.delta**2),
        "disintegration_per_sample": math.log(8.0 / ctx.delta**2) / ctx.m,
    }


def rivasplata_log_term(ctx):
    return math.log(2.0 * ctx.t_priors * math.sqrt(ctx.m) / ctx.delta)


def blanchard_log_term(ctx):
    return math.log(ctx.t_priors * (ctx.m + 1.0) / ctx.delta)


def catoni_log_term(ctx, grid_size):
    return math.log(ctx.t_priors * grid_size / ctx.delta)


def catoni_value(c, r_s, dkl, log_term, m):
    """Catoni-style certified risk for a single c, clipped to [0, 1]."""
    exponent = -c * r_s - (dkl + log_term) / m
    value = -math.expm1(exponent) / -math.expm1(-c)
    return min(max(value, 0.0), 1.0)


# ------------------------------------------------------------ network bounds


def bound_ours_from_distance(ctx, r_s, squared_distance, sigma2):
    """Ours certificate given ||w - v||^2 directly."""
    _check_risk(r_s)
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    divergence = squared_distance / sigma2
    log_term = ours_log_term(ctx)
    psi = (divergence + log_term) / ctx.m
    certified = kl_inverse(r_s, psi).p_star
    return BoundReport(
        method="ours",
        m=ctx.m,
        delta=ctx.delta,
        t_priors=ctx.t_priors,
        sigma2=float(sigma2),
        empirical_risk=float(r_s),
        divergence_term=float(divergence),
        log_term=log_term,
        psi=psi,
        certified_risk=certified,
        extras={"log_term_parts": ours_log_term_parts(ctx)},
    )


def bound_ours(ctx, r_s, w, v, sigma2):
    """Disintegrated bound with the order-2 Renyi divergence between posterior and prior."""
    w = np.asarray(w, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if w.shape != v.shape:
        raise ValueError("w and v must have equal lengths")
    diff = w - v
    return bound_ours_from_distance(ctx, r_s, float(diff @ diff), sigma2)


def bound_baseline_from_dkl(ctx, method, r_s, dkl, sigma2=None, c_grid=DEFAULT_C_GRID):
    """Baseline certificate given the disintegrated KL value directly."""
    _check_risk(r_s)
    m = ctx.m
    if method == "rivasplata":
        divergence = dkl
        log_term = rivasplata_log_term(ctx)
    elif method == "blanchard":
        divergence = (m + 1.0) / m * dkl
        log_term = blanchard_log_term(ctx)
    elif method == "catoni":
        grid = [float(c) for c in c_grid]
        if not grid:
            raise ValueError("catoni needs a nonempty c grid")
        if any(not (c > 0 and math.isfinite(c)) for c in grid):
            raise ValueError("catoni grid values must be positive and finite")
        log_term = catoni_log_term(ctx, len(grid))
        values = [catoni_value(c, r_s, dkl, log_term, m) for c in grid]
        best = int(np.argmin(values))
        return BoundReport(
            method="catoni",
            m=m,
            delta=ctx.delta,
            t_priors=ctx.t_priors,
            sigma2=None if sigma2 is None else float(sigma2),
            empirical_risk=float(r_s),
            divergence_term=float(dkl),
            log_term=log_term,
            psi=(dkl + log_term) / m,
            certified_risk=values[best],
            extras={"c": grid[best], "c_grid": grid},
        )
    else:
        raise ValueError(f"unknown baseline method {method!r}")
    raw_psi = (divergence + log_term) / m
    psi = max(raw_psi, 0.0)
    certified = min(max(kl_inverse(r_s, psi).p_star, 0.0), 1.0)
    return BoundReport(
        method=method,
        m=m,
        delta=ctx.delta,
        t_priors=ctx.t_priors,
        sigma2=None if sigma2 is None else float(sigma2),
        empirical_risk=float(r_s),
        divergence_term=float(divergence),
        log_term=log_term,
        psi=psi,
        certified_risk=certified,
        extras={"unclamped_psi": raw_psi},
    )


def bound_baseline(ctx, method, r_s, w, eps, v, sigma2, c_grid=DEFAULT_C_GRID):
    """Rivasplata, Blanchard or Catoni certificate at the sampled weights w + eps."""
    dkl = disintegrated_kl_gaussian(w, eps, v, sigma2)
    return bound_baseline_from_dkl(ctx, method, r_s, dkl, sigma2, c_grid)


def bound_stochastic_from_distance(ctx, risks_n, squared_distance, sigma2):
    """Randomized-classifier bound via two nested kl inversions."""
    risks = np.asarray(risks_n, dtype=np.float64).ravel()
    if risks.size < 1:
        raise ValueError("need at least one sampled risk")
    if np.any((risks < 0) | (risks > 1)):
        raise ValueError("risks must lie in [0, 1]")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    n = risks.size
    mean_risk = float(risks.mean())
    inner_psi = math.log(4.0 / ctx.delta) / n
    inner = kl_inverse(mean_risk, inner_psi).p_star
    divergence = squared_distance / (2.0 * sigma2)
    log_term = math.log(4.0 * ctx.t_priors * math.sqrt(ctx.m) / ctx.delta)
    psi = (divergence + log_term) / ctx.m
    certified = kl_inverse(inner, psi).p_star
    return BoundReport(
        method="stochastic",
        m=ctx.m,
        delta=ctx.delta,
        t_priors=ctx.t_priors,
        sigma2=float(sigma2),
        empirical_risk=mean_risk,
        divergence_term=divergence,
        log_term=log_term,
        psi=psi,
        certified_risk=certified,
        extras={"n": n, "inner_psi": inner_psi, "inner_risk": inner},
    )


def bound_stochastic(ctx, risks_n, w, v, sigma2):
    w = np.asarray(w, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if w.shape != v.shape:
        raise ValueError("w and v must have equal lengths")
    diff = w - v
    return bound_stochastic_from_distance(ctx, risks_n, float(diff @ diff), sigma2)


# ------------------------------------------------------------ general statements


def _check_delta(delta):
    if not (0.0 < delta <= 1.0):
        raise ValueError(f"delta must lie in (0, 1], got {delta!r}")


def theorem2_rhs(d_alpha, alpha, delta, log_moment, t_priors=1):
    """Right side bounding (alpha/(alpha-1)) ln phi.

    With t_priors > 1 the union over priors is taken, which at t_priors = 1
    reduces to the single-prior statement.
    """
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    _check_delta(delta)
    ratio = alpha / (alpha - 1.0)
    log_conf = ratio * math.log(2.0 / delta) + math.log(2.0 * t_priors / delta)
    return log_conf + d_alpha + log_moment


def theorem2_log_phi_rhs(d_alpha, alpha, delta, log_moment):
    """Same statement rearranged to bound ln phi itself."""
    return (alpha - 1.0) / alpha * theorem2_rhs(d_alpha, alpha, delta, log_moment)


def theorem3_rhs(lam, d2, delta, log_moment2):
    """ln(lam/2 e^{d2} + 8 e^{log_moment2} / (2 lam delta^3)), bounding ln phi."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    _check_delta(delta)
    first = math.log(lam / 2.0) + d2
    second = math.log(4.0) + log_moment2 - math.log(lam) - 3.0 * math.log(delta)
    return float(np.logaddexp(first, second))


def optimal_lambda(d2, delta, log_moment2):
    """Minimizer of theorem3_rhs over lam."""
    _check_delta(delta)
    return math.exp(0.5 * (math.log(8.0) + log_moment2 - 3.0 * math.log(delta) - d2))


def alpha_limit_rhs(kind, delta, *, log_esssup_phi=None, posterior=None, prior=None, log_mean_phi=None):
    """Limits of the rearranged general statement as alpha -> 1 or alpha -> infinity.

    kind="one" needs ``log_esssup_phi``; kind="infinity" needs finite
    ``posterior`` and ``prior`` measures plus ``log_mean_phi`` = ln E E phi.
    """
    _check_delta(delta)
    if kind == "one":
        if log_esssup_phi is None:
            raise ValueError("kind='one' needs log_esssup_phi")
        return math.log(2.0 / delta) + log_esssup_phi
    if kind == "infinity":
        if isinstance(posterior, IsotropicGaussian) or isinstance(prior, IsotropicGaussian):
            raise UnsupportedSpaceError("the infinity limit needs finite hypothesis spaces")
        if posterior is None or prior is None or log_mean_phi is None:
            raise ValueError("kind='infinity' needs posterior, prior and log_mean_phi")
        if not isinstance(posterior, DiscreteMeasure):
            posterior = DiscreteMeasure(posterior)
        if not isinstance(prior, DiscreteMeasure):
            prior = DiscreteMeasure(prior)
        return log_esssup_ratio(posterior, prior) + math.log(4.0 / delta**2) + log_mean_phi
    raise ValueError(f"unknown kind {kind!r}")
