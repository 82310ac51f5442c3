"""Exact and Monte Carlo checks that high-probability bounds hold at level 1 - delta."""

import csv
from dataclasses import dataclass, asdict
import math
from pathlib import Path

import numpy as np
from scipy.stats import beta as beta_dist

from . import _kernels
from .bounds import maurer_moment_bound, optimal_lambda, theorem3_rhs
from .mutual_info import info_bound_rhs, log_kl_moment
from .rng import stream

BOUND_KINDS = ("thm2_alpha2", "thm3_lambda", "corollary5_analog", "thm8", "seeger_mi")
COVERAGE_COLUMNS = ("bound_kind", "delta", "trials", "violations", "rate", "cp_upper", "mode", "cp_lower")
CP_LEVEL = 0.99
BLOCK = 4096


@dataclass(frozen=True)
class CoverageResult:
    """Violation statistics of one bound statement.

    In exact mode ``trials`` counts the enumerated (sample, hypothesis)
    pairs, ``violations`` the violating pairs, and ``rate`` is the exact
    probability mass of the violating pairs; both interval ends equal it.
    """

    bound_kind: str
    delta: float
    trials: int
    violations: int
    rate: float
    cp_upper: float
    mode: str
    cp_lower: float

    def as_row(self):
        return asdict(self)


def clopper_pearson(violations, trials, level=CP_LEVEL):
    """Two-sided Clopper-Pearson interval for a binomial proportion."""
    if not (0 <= violations <= trials) or trials < 1:
        raise ValueError("need 0 <= violations <= trials and trials >= 1")
    tail = (1.0 - level) / 2.0
    lower = 0.0 if violations == 0 else float(beta_dist.ppf(tail, violations, trials - violations + 1))
    upper = 1.0 if violations == trials else float(beta_dist.ppf(1.0 - tail, violations + 1, trials - violations))
    return lower, upper


# ------------------------------------------------------------ budgets


def _renyi2_rows(posteriors, prior):
    """D_2(Q_S || prior) for each row; +inf when absolute continuity fails."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_terms = np.where(posteriors > 0, posteriors**2 / prior[None, :], 0.0)
    out = np.log(ratio_terms.sum(axis=1))
    bad = np.any((posteriors > 0) & (prior[None, :] == 0), axis=1)
    out[bad] = np.inf
    return np.maximum(out, 0.0)


def make_budget(problem, bound_kind, delta, alpha=2.0):
    """Return a function mapping posterior rows (B, H) to kl budgets (B,)."""
    m = problem.m
    prior = problem.prior
    if bound_kind == "corollary5_analog":
        log_term = math.log(16.0 * math.sqrt(m) / delta**3)
        return lambda post: (_renyi2_rows(post, prior) + log_term) / m
    if not problem.enumerable:
        raise ValueError(f"{bound_kind} needs exact moment terms, which need an enumerable problem")
    if bound_kind == "thm2_alpha2":
        log_moment = log_kl_moment(problem, prior)
        log_term = 3.0 * math.log(2.0 / delta) + log_moment
        return lambda post: (_renyi2_rows(post, prior) + log_term) / m
    if bound_kind == "thm3_lambda":
        log_moment = log_kl_moment(problem, prior)

        def budget(post):
            d2 = _renyi2_rows(post, prior)
            out = np.empty_like(d2)
            for i, d in enumerate(d2):
                if math.isinf(d):
                    out[i] = math.inf
                    continue
                lam = optimal_lambda(d, delta, log_moment)
                out[i] = 2.0 * theorem3_rhs(lam, d, delta, log_moment) / m
            return out

        return budget
    if bound_kind in ("thm8", "seeger_mi"):
        psi = info_bound_rhs(bound_kind, problem, alpha, delta).psi
        return lambda post: np.full(post.shape[0], psi)
    raise ValueError(f"unknown bound kind {bound_kind!r}; expected one of {BOUND_KINDS}")


def _kl_table(emp_risk, true_risk):
    true = np.broadcast_to(true_risk, emp_risk.shape)
    return _kernels.kl_batch(emp_risk.ravel(), true.ravel()).reshape(emp_risk.shape)


# ------------------------------------------------------------ coverage


def coverage_exact(problem, bound_kind, delta, alpha=2.0):
    en = problem.enumeration
    psi = make_budget(problem, bound_kind, delta, alpha)(en.posteriors)
    violating = _kl_table(en.emp_risk, problem.true_risk) > psi[:, None]
    mass = en.sample_probs[:, None] * en.posteriors
    rate = float(min(mass[violating].sum(), 1.0))
    return CoverageResult(
        bound_kind=bound_kind,
        delta=float(delta),
        trials=int(mass.size),
        violations=int(np.count_nonzero(violating & (mass > 0))),
        rate=rate,
        cp_upper=rate,
        mode="exact",
        cp_lower=rate,
    )


def coverage_monte_carlo(problem, bound_kind, delta, trials, seed, alpha=2.0):
    if trials < 1:
        raise ValueError("trials must be at least 1")
    budget = make_budget(problem, bound_kind, delta, alpha)
    true_risk = problem.true_risk
    violations = 0
    for block, start in enumerate(range(0, trials, BLOCK)):
        size = min(BLOCK, trials - start)
        rng = stream(seed, "coverage", bound_kind, block)
        samples = problem.sample(rng, size)
        emp_risk, posteriors = problem.posteriors_for(samples)
        cdf = np.cumsum(posteriors, axis=1)
        u = rng.random(size)[:, None] * cdf[:, -1:]
        picked = np.minimum((cdf < u).sum(axis=1), problem.n_hypotheses - 1)
        rows = np.arange(size)
        q = emp_risk[rows, picked]
        p = true_risk[picked]
        kl_vals = _kernels.kl_batch(q, p)
        violations += int(np.count_nonzero(kl_vals > budget(posteriors)))
    lower, upper = clopper_pearson(violations, trials)
    return CoverageResult(
        bound_kind=bound_kind,
        delta=float(delta),
        trials=int(trials),
        violations=violations,
        rate=violations / trials,
        cp_upper=upper,
        mode="monte_carlo",
        cp_lower=lower,
    )


def coverage(problem, bound_kind, delta, trials=None, seed=0, alpha=2.0, mode="auto"):
    """Violation rate of ``bound_kind`` at confidence ``delta``.

    mode="exact" enumerates, mode="monte_carlo" simulates ``trials`` draws
    of (S, h), and mode="auto" enumerates whenever the problem allows.
    """
    if not (0.0 < delta <= 1.0):
        raise ValueError("delta must lie in (0, 1]")
    if bound_kind not in BOUND_KINDS:
        raise ValueError(f"unknown bound kind {bound_kind!r}; expected one of {BOUND_KINDS}")
    if mode == "auto":
        mode = "exact" if problem.enumerable else "monte_carlo"
    if mode == "exact":
        problem.require_enumerable()
        return coverage_exact(problem, bound_kind, delta, alpha)
    if mode == "monte_carlo":
        if trials is None:
            raise ValueError("monte carlo coverage needs a trial count")
        return coverage_monte_carlo(problem, bound_kind, delta, trials, seed, alpha)
    raise ValueError(f"unknown mode {mode!r}")


def append_coverage_csv(path, results):
    path = Path(path)
    new_file = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COVERAGE_COLUMNS)
        if new_file:
            writer.writeheader()
        for res in results:
            writer.writerow(res.as_row())


# ------------------------------------------------------------ moments


def maurer_exact(m, p):
    """E exp(m kl(k/m || p)) for k ~ Binomial(m, p), summed in the log domain."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must lie in [0, 1]")
    return math.exp(_kernels.log_maurer_moment(int(m), float(p)))


def maurer_check(m_max, p_grid=None, rel_tol=1e-12):
    """Compare maurer_exact with 2 sqrt(m) over m = 1..m_max and a grid of p.

    Returns (all_passed, rows) with rows of (m, p, exact, bound, passed).
    """
    if p_grid is None:
        p_grid = np.round(np.arange(101) * 0.01, 2)
    rows = []
    for m in range(1, int(m_max) + 1):
        bound = maurer_moment_bound(m)
        for p in p_grid:
            value = maurer_exact(m, float(p))
            rows.append((m, float(p), value, bound, value <= bound * (1.0 + rel_tol)))
    return all(r[4] for r in rows), rows


def moment_term(problem, alpha=2.0, prior=None):
    """ln E_{S'} E_{h ~ prior} phi^{alpha/(alpha-1)} for phi = exp((alpha-1)/alpha m kl).

    The power cancels the exponent's factor, so the value is the same for
    every alpha; the argument is kept for symmetry with the bound formulas.
    """
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    return log_kl_moment(problem, problem.prior if prior is None else prior)


def moment_term_monte_carlo(problem, n_samples, seed, prior=None):
    """Plain Monte Carlo estimate of E E exp(m kl) with its standard error."""
    prior = problem.prior if prior is None else np.asarray(prior, dtype=np.float64)
    rng = stream(seed, "moment_term")
    samples = problem.sample(rng, n_samples)
    emp_risk, _ = problem.posteriors_for(samples)
    h = rng.choice(problem.n_hypotheses, size=n_samples, p=prior)
    vals = np.exp(problem.m * _kernels.kl_batch(emp_risk[np.arange(n_samples), h], problem.true_risk[h]))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples))
