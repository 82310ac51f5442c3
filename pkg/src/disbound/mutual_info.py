"""Finite learning problems, Sibson/Shannon mutual information and the
information-theoretic bound budgets built on them.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math
from pathlib import Path

import numpy as np
from scipy.special import logsumexp
import yaml

from .binary_kl import kl_inverse
from .divergences import DiscreteMeasure
from . import _kernels
from .rng import stream

DEFAULT_ENUMERATION_CAP = 10**6


class EnumerationCapError(ValueError):
    """The problem is too large to enumerate exactly."""


class PreconditionError(ValueError):
    """An input violates a theorem's stated precondition."""


# ------------------------------------------------------------ algorithms


@dataclass(frozen=True)
class GibbsAlgorithm:
    """Q_S(h) proportional to exp(-beta m R_S(h))."""

    beta: float

    def __call__(self, emp_risk, m):
        logits = -self.beta * m * emp_risk
        logits = logits - logits.max(axis=-1, keepdims=True)
        weights = np.exp(logits)
        return weights / weights.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class ConstantAlgorithm:
    """Ignores the sample and always returns the same distribution."""

    probs: tuple

    def __call__(self, emp_risk, m):
        return np.broadcast_to(np.asarray(self.probs, dtype=np.float64), emp_risk.shape).copy()


@dataclass(frozen=True)
class ErmAlgorithm:
    """Uniform over the empirical risk minimizers."""

    def __call__(self, emp_risk, m):
        best = emp_risk.min(axis=-1, keepdims=True)
        weights = (emp_risk <= best + 1e-12).astype(np.float64)
        return weights / weights.sum(axis=-1, keepdims=True)


def make_algorithm(spec, n_hypotheses):
    kind = spec.get("type", "gibbs")
    if kind == "gibbs":
        beta = float(spec.get("beta", 1.0))
        if beta < 0:
            raise ValueError("gibbs beta must be nonnegative")
        return GibbsAlgorithm(beta)
    if kind == "constant":
        probs = DiscreteMeasure(spec["probs"]).probs
        if probs.size != n_hypotheses:
            raise ValueError("constant algorithm probs must have one entry per hypothesis")
        return ConstantAlgorithm(tuple(probs))
    if kind == "erm":
        return ErmAlgorithm()
    raise ValueError(f"unknown algorithm type {kind!r}")


# ------------------------------------------------------------ problem


@dataclass(frozen=True)
class Enumeration:
    """All ordered samples with their probabilities and induced quantities."""

    sample_probs: np.ndarray  # (N,)
    emp_risk: np.ndarray  # (N, H)
    posteriors: np.ndarray  # (N, H)


@dataclass
class FiniteLearningProblem:
    z_probs: np.ndarray
    loss_table: np.ndarray  # (H, Z)
    m: int
    algorithm: object
    hypotheses: list = field(default_factory=list)
    prior: np.ndarray | None = None
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    name: str = "problem"

    def __post_init__(self):
        self.z_probs = DiscreteMeasure(self.z_probs).probs
        self.loss_table = np.atleast_2d(np.asarray(self.loss_table, dtype=np.float64))
        if self.loss_table.shape[1] != self.z_probs.size:
            raise ValueError("loss table needs one column per example in Z")
        if np.any((self.loss_table < 0) | (self.loss_table > 1)):
            raise ValueError("loss table entries must lie in [0, 1]")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")
        self.m = int(self.m)
        if not self.hypotheses:
            self.hypotheses = [f"h{i}" for i in range(self.n_hypotheses)]
        if len(self.hypotheses) != self.n_hypotheses:
            raise ValueError("one name per hypothesis row is required")
        if self.prior is None:
            self.prior = np.full(self.n_hypotheses, 1.0 / self.n_hypotheses)
        self.prior = DiscreteMeasure(self.prior).probs
        if self.prior.size != self.n_hypotheses:
            raise ValueError("prior needs one entry per hypothesis")

    @property
    def n_hypotheses(self):
        return self.loss_table.shape[0]

    @property
    def n_examples(self):
        return self.z_probs.size

    @property
    def true_risk(self):
        return self.loss_table @ self.z_probs

    @property
    def enumeration_size(self):
        return self.n_examples**self.m * self.n_hypotheses

    @property
    def enumerable(self):
        return self.enumeration_size <= self.enumeration_cap

    def require_enumerable(self):
        if not self.enumerable:
            raise EnumerationCapError(
                f"|Z|^m * |H| = {self.enumeration_size} exceeds the enumeration cap "
                f"{self.enumeration_cap}; use Monte Carlo mode"
            )

    def posteriors_for(self, samples):
        """Empirical risks and posteriors for a batch of ordered samples (B, m)."""
        samples = np.asarray(samples)
        counts = np.zeros((samples.shape[0], self.n_examples))
        for j in range(self.n_examples):
            counts[:, j] = (samples == j).sum(axis=1)
        emp_risk = counts @ self.loss_table.T / self.m
        return emp_risk, self.algorithm(emp_risk, self.m)

    @cached_property
    def enumeration(self):
        self.require_enumerable()
        # ordered tuples differ only through their counts, but each tuple is
        # listed to keep the ordered-sample semantics literal
        grids = np.indices((self.n_examples,) * self.m).reshape(self.m, -1).T
        log_probs = np.log(self.z_probs)[grids].sum(axis=1) if np.all(self.z_probs > 0) else None
        if log_probs is None:
            sample_probs = np.prod(self.z_probs[grids], axis=1)
        else:
            sample_probs = np.exp(log_probs)
        emp_risk, posteriors = self.posteriors_for(grids)
        return Enumeration(sample_probs, emp_risk, posteriors)

    def sample(self, rng, size):
        return rng.choice(self.n_examples, size=(size, self.m), p=self.z_probs)


def load_problem(source, enumeration_cap=None):
    """Build a FiniteLearningProblem from a YAML path or an already-parsed mapping."""
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            config = yaml.safe_load(fh)
        if "problem" in config:
            config = config["problem"]
    else:
        config = source
    loss_table = np.asarray(config["loss_table"], dtype=np.float64)
    algorithm = make_algorithm(config.get("algorithm", {"type": "gibbs", "beta": 1.0}), loss_table.shape[0])
    cap = enumeration_cap if enumeration_cap is not None else config.get("enumeration_cap", DEFAULT_ENUMERATION_CAP)
    return FiniteLearningProblem(
        z_probs=config["z_probs"],
        loss_table=loss_table,
        m=config["m"],
        algorithm=algorithm,
        hypotheses=list(config.get("hypotheses", [])),
        prior=config.get("prior"),
        enumeration_cap=int(cap),
        name=str(config.get("name", "problem")),
    )


def fixture_paths():
    """Paths of the enumerable problem configs shipped with the package."""
    return sorted((Path(__file__).parent / "fixtures").glob("*.yaml"))


# ------------------------------------------------------------ mutual information


@dataclass(frozen=True)
class MutualInformation:
    value: float
    prior: DiscreteMeasure
    stderr: float | None = None


def joint_renyi(problem, alpha, prior):
    """D_alpha between the joint law of (S, h) and prior x D^m, by enumeration."""
    en = problem.enumeration
    prior = DiscreteMeasure(prior).probs if not isinstance(prior, DiscreteMeasure) else prior.probs
    if np.any((en.posteriors > 0) & (prior[None, :] == 0) & (en.sample_probs[:, None] > 0)):
        return math.inf
    with np.errstate(divide="ignore"):
        log_q = np.log(en.posteriors)
        log_p = np.log(prior)
        log_w = np.log(en.sample_probs)
    mask = (en.posteriors > 0) & (en.sample_probs[:, None] > 0)
    terms = log_w[:, None] + alpha * log_q - (alpha - 1.0) * log_p[None, :]
    return float(logsumexp(terms[mask])) / (alpha - 1.0)


def _sibson_from_moments(moments, alpha):
    roots = moments ** (1.0 / alpha)
    value = alpha / (alpha - 1.0) * math.log(roots.sum())
    return max(value, 0.0), DiscreteMeasure.normalized(roots)


def sibson_mi(problem, alpha, monte_carlo=False, n_samples=20000, seed=0):
    """Sibson's mutual information of order alpha and its optimal prior.

    Exact by enumeration when the problem fits under the cap; otherwise
    requires ``monte_carlo=True`` and reports a delta-method standard error.
    """
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    if problem.enumerable:
        en = problem.enumeration
        moments = en.sample_probs @ en.posteriors**alpha
        value, prior = _sibson_from_moments(moments, alpha)
        return MutualInformation(value, prior)
    if not monte_carlo:
        problem.require_enumerable()
    rng = stream(seed, "sibson_mi")
    _, posteriors = problem.posteriors_for(problem.sample(rng, n_samples))
    powered = posteriors**alpha
    moments = powered.mean(axis=0)
    value, prior = _sibson_from_moments(moments, alpha)
    roots = moments ** (1.0 / alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = np.where(moments > 0, roots / moments, 0.0) / ((alpha - 1.0) * roots.sum())
    cov = np.atleast_2d(np.cov(powered, rowvar=False)) / n_samples
    stderr = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    return MutualInformation(value, prior, stderr)


def shannon_mi(problem, monte_carlo=False, n_samples=20000, seed=0):
    """Shannon mutual information E_S KL(Q_S || P*) with P* = E_S Q_S."""
    if problem.enumerable:
        en = problem.enumeration
        marginal = en.sample_probs @ en.posteriors
        per_sample = _kl_rows(en.posteriors, marginal)
        return MutualInformation(max(float(en.sample_probs @ per_sample), 0.0), DiscreteMeasure.normalized(marginal))
    if not monte_carlo:
        problem.require_enumerable()
    rng = stream(seed, "shannon_mi")
    _, posteriors = problem.posteriors_for(problem.sample(rng, n_samples))
    marginal = posteriors.mean(axis=0)
    per_sample = _kl_rows(posteriors, marginal)
    stderr = float(per_sample.std(ddof=1) / math.sqrt(n_samples))
    return MutualInformation(max(float(per_sample.mean()), 0.0), DiscreteMeasure.normalized(marginal), stderr)


def _kl_rows(rows, reference):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(rows > 0, rows * (np.log(rows) - np.log(reference)[None, :]), 0.0)
    return terms.sum(axis=1)


# ------------------------------------------------------------ moments


def log_kl_moment(problem, prior):
    """ln E_{S'} E_{h ~ prior} exp(m kl(R_S'(h) || R_D(h))), by enumeration."""
    en = problem.enumeration
    prior = np.asarray(prior.probs if isinstance(prior, DiscreteMeasure) else prior, dtype=np.float64)
    true = np.broadcast_to(problem.true_risk, en.emp_risk.shape)
    kl_vals = _kernels.kl_batch(en.emp_risk.ravel(), true.ravel()).reshape(en.emp_risk.shape)
    with np.errstate(divide="ignore"):
        terms = np.log(en.sample_probs)[:, None] + np.log(prior)[None, :] + problem.m * kl_vals
    mask = (en.sample_probs[:, None] > 0) & (prior[None, :] > 0)
    return float(logsumexp(terms[mask]))


def log_phi_moment(problem, prior, log_phi, power):
    """ln E_{S'} E_{h ~ prior} phi^power for a user-supplied table ln phi (N, H)."""
    en = problem.enumeration
    prior = np.asarray(prior.probs if isinstance(prior, DiscreteMeasure) else prior, dtype=np.float64)
    log_phi = np.asarray(log_phi, dtype=np.float64)
    if log_phi.shape != en.emp_risk.shape:
        raise ValueError(f"log_phi must have shape {en.emp_risk.shape}")
    with np.errstate(divide="ignore"):
        terms = np.log(en.sample_probs)[:, None] + np.log(prior)[None, :] + power * log_phi
    mask = (en.sample_probs[:, None] > 0) & (prior[None, :] > 0)
    return float(logsumexp(terms[mask]))


# ------------------------------------------------------------ bound budgets


@dataclass(frozen=True)
class InfoBound:
    """Budget of an information-theoretic bound.

    ``psi`` bounds kl(R_S || R_D) for kinds thm8, kl_version and seeger_mi
    and bounds 2 (R_S - R_D)^2 for kind esposito.  When a custom ln phi table
    is supplied, ``rhs`` is the raw right side and ``psi`` is None.
    """

    kind: str
    alpha: float
    delta: float
    m: int
    information: float
    log_moment: float | None
    rhs: float
    psi: float | None

    def certified_risk(self, r_s):
        if self.psi is None:
            raise ValueError("no risk certificate for a custom phi")
        if self.kind == "esposito":
            return min(float(r_s) + math.sqrt(self.psi / 2.0), 1.0)
        return kl_inverse(r_s, self.psi).p_star


def info_bound_rhs(kind, problem, alpha, delta, log_phi=None):
    """Right side of the named information-theoretic statement.

    Without ``log_phi`` the kl instantiation phi = exp((alpha-1)/alpha m kl)
    is used (phi = exp(m kl) for kl_version) and the result carries a kl
    budget ``psi``.  With ``log_phi`` (thm8 and kl_version only) the raw
    right side of the statement for that phi is returned.
    """
    if not (0.0 < delta <= 1.0):
        raise ValueError("delta must lie in (0, 1]")
    m = problem.m
    if kind == "kl_version":
        mi = shannon_mi(problem)
        if log_phi is not None:
            if np.any(np.asarray(log_phi) < 0):
                raise PreconditionError("kl_version needs phi >= 1 everywhere")
            moment = log_phi_moment(problem, mi.prior, log_phi, 1.0)
            rhs = (mi.value + moment) / delta
            return InfoBound(kind, 1.0, delta, m, mi.value, moment, rhs, None)
        moment = log_kl_moment(problem, mi.prior)
        rhs = (mi.value + moment) / delta
        return InfoBound(kind, 1.0, delta, m, mi.value, moment, rhs, rhs / m)
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    ratio = alpha / (alpha - 1.0)
    mi = sibson_mi(problem, alpha)
    if kind == "thm8":
        if log_phi is not None:
            moment = log_phi_moment(problem, mi.prior, log_phi, ratio)
            rhs = mi.value + ratio * math.log(1.0 / delta) + moment
            return InfoBound(kind, alpha, delta, m, mi.value, moment, rhs, None)
        moment = log_kl_moment(problem, mi.prior)
        rhs = mi.value + ratio * math.log(1.0 / delta) + moment
        return InfoBound(kind, alpha, delta, m, mi.value, moment, rhs, rhs / m)
    if log_phi is not None:
        raise ValueError(f"{kind} does not take a custom phi")
    if kind == "seeger_mi":
        rhs = mi.value + math.log(2.0 * math.sqrt(m)) - ratio * math.log(delta)
    elif kind == "esposito":
        rhs = mi.value + math.log(2.0) - ratio * math.log(delta)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return InfoBound(kind, alpha, delta, m, mi.value, None, rhs, rhs / m)
