"""Two-phase training: priors on a held-out split, then a posterior mean
fitted by minimizing a disintegrated bound directly.
"""

from dataclasses import dataclass, field, asdict
import json
import math

import numpy as np

from .binary_kl import GRAD_GUARD, kl_inverse, kl_inverse_grad
from .bounds import (
    DEFAULT_C_GRID,
    SCHEMA_VERSION,
    BoundContext,
    blanchard_log_term,
    bound_baseline_from_dkl,
    bound_ours_from_distance,
    bound_stochastic_from_distance,
    catoni_log_term,
    catoni_value,
    ours_log_term,
    rivasplata_log_term,
)
from .gaussian_net import backward, bounded_ce_loss, forward, risks, sample_weights
from .rng import stream

OBJECTIVES = ("ours", "rivasplata", "blanchard", "catoni")
REPORT_METHODS = ("ours", "rivasplata", "blanchard", "catoni")
METRIC_COLUMNS = ("epoch", "phase", "objective", "surrogate_risk", "divergence", "psi")


class TrainingDivergedError(RuntimeError):
    """The loss or objective became non-finite."""


@dataclass(frozen=True)
class TrainingConfig:
    epochs_prior: int = 5
    epochs_posterior: int = 5
    lr_prior: float = 1e-2
    lr_posterior: float = 1e-4
    batch_size: int = 32
    sigma2: float = 1e-3
    delta: float = 0.05
    objective: str = "ours"
    c_grid: tuple = DEFAULT_C_GRID
    seed: int = 0
    n_eval: int = 400
    catoni_lr: float = 1e-2
    z: float = 4.0

    def __post_init__(self):
        if int(self.epochs_prior) != self.epochs_prior or self.epochs_prior < 1:
            raise ValueError("epochs_prior (the number of priors T) must be a positive integer")
        if int(self.epochs_posterior) != self.epochs_posterior or self.epochs_posterior < 0:
            raise ValueError("epochs_posterior must be a nonnegative integer")
        if self.lr_prior < 0 or self.lr_posterior < 0 or self.catoni_lr < 0:
            raise ValueError("learning rates must be nonnegative")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError("batch_size must be a positive integer")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        grid = tuple(float(c) for c in self.c_grid)
        if not grid or any(not c > 0 for c in grid):
            raise ValueError("c_grid must be a nonempty set of positive values")
        if int(self.n_eval) != self.n_eval or self.n_eval < 1:
            raise ValueError("n_eval must be a positive integer")
        object.__setattr__(self, "c_grid", grid)


class Adam:
    """Adam with the usual default constants; state is plain arrays."""

    def __init__(self, lr, size, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


# ------------------------------------------------------------ phase 1


@dataclass
class PriorPhase:
    checkpoints: list
    initial_weights: np.ndarray
    loss_trace: list
    history: list


def learn_priors(arch, config, s_prior):
    """Train on S_prior at sampled weights; record the mean after every epoch."""
    if len(s_prior) == 0:
        raise ValueError("s_prior must be nonempty")
    omega = arch.init_weights(stream(config.seed, "init"))
    initial = omega.copy()
    opt = Adam(config.lr_prior, omega.size)
    checkpoints, trace, history = [], [], []
    for epoch in range(config.epochs_prior):
        losses = []
        for step, idx in enumerate(_batches(len(s_prior), config.batch_size, stream(config.seed, "prior_batches", epoch))):
            h, _ = sample_weights(omega, config.sigma2, stream(config.seed, "prior_noise", epoch, step))
            xb, yb = s_prior.x[idx], s_prior.y[idx]
            loss = float(np.mean(bounded_ce_loss(forward(arch, h, xb), yb, config.z)))
            grad = backward(arch, h, xb, yb, config.z)
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise TrainingDivergedError(f"non-finite prior loss at epoch {epoch + 1}, step {step}")
            omega = opt.step(omega, grad)
            losses.append(loss)
        checkpoints.append(omega.copy())
        trace.append(float(np.mean(losses)))
        history.append(
            {"epoch": epoch + 1, "phase": "prior", "objective": trace[-1], "surrogate_risk": trace[-1], "divergence": None, "psi": None}
        )
    return PriorPhase(checkpoints, initial, trace, history)


def select_prior(arch, checkpoints, s, sigma2=None, seed=None, z=4.0):
    """1-based index of the checkpoint with the lowest noise-free bounded CE on S.

    Ties go to the earliest checkpoint.  ``sigma2`` and ``seed`` are
    accepted for interface symmetry; the criterion does not sample noise.
    """
    if not checkpoints:
        raise ValueError("need at least one checkpoint")
    scores = [risks(arch, v, s, z)[1] for v in checkpoints]
    return int(np.argmin(scores)) + 1


# ------------------------------------------------------------ phase 2 objective


@dataclass
class ObjectiveValue:
    value: float
    grad: np.ndarray
    surrogate_risk: float
    divergence: float
    psi: float
    grad_c: float = 0.0


def _divergence_and_grad(method, omega, eps, prior, sigma2, m):
    if method == "ours":
        diff = omega - prior
        return float(diff @ diff) / sigma2, 2.0 * diff / sigma2
    shifted = omega + eps - prior
    dkl = float(shifted @ shifted - eps @ eps) / (2.0 * sigma2)
    grad = shifted / sigma2
    if method == "blanchard":
        factor = (m + 1.0) / m
        return factor * dkl, factor * grad
    return dkl, grad


def bound_objective(arch, method, omega, eps, prior, xb, yb, m, t_priors, delta, sigma2, c=None, z=4.0, c_grid_size=1):
    """Bound value on a mini-batch at weights omega + eps and its gradient in omega.

    For catoni, ``c`` is the current continuous parameter and the gradient
    with respect to it is returned in ``grad_c``.
    """
    h = omega + eps
    q = float(np.mean(bounded_ce_loss(forward(arch, h, xb), yb, z)))
    grad_q = backward(arch, h, xb, yb, z)
    ctx = BoundContext(m=m, delta=delta, t_priors=t_priors)
    if method == "catoni":
        dkl, grad_div = _divergence_and_grad("rivasplata", omega, eps, prior, sigma2, m)
        log_term = catoni_log_term(ctx, c_grid_size)
        expo = math.exp(-c * q - (dkl + log_term) / m)
        denom = -math.expm1(-c)
        value = (1.0 - expo) / denom
        grad = (c * expo / denom) * grad_q + (expo / (m * denom)) * grad_div
        grad_c = (q * expo * denom - (1.0 - expo) * math.exp(-c)) / denom**2
        return ObjectiveValue(value, grad, q, dkl, (dkl + log_term) / m, grad_c)
    if method == "ours":
        log_term = ours_log_term(ctx)
    elif method == "rivasplata":
        log_term = rivasplata_log_term(ctx)
    elif method == "blanchard":
        log_term = blanchard_log_term(ctx)
    else:
        raise ValueError(f"unknown objective {method!r}")
    divergence, grad_div = _divergence_and_grad(method, omega, eps, prior, sigma2, m)
    psi = (divergence + log_term) / m
    q_safe = min(max(q, 1e-12), 1.0 - 1e-12)
    if psi < GRAD_GUARD:
        # the budget is clamped at zero, where the certificate is q itself
        return ObjectiveValue(q, grad_q, q, divergence, max(psi, 0.0))
    value = kl_inverse(q, psi).p_star
    d_q, d_psi = kl_inverse_grad(q_safe, psi)
    grad = d_q * grad_q + (d_psi / m) * grad_div
    return ObjectiveValue(value, grad, q, divergence, psi)


class CatoniParameter:
    """Catoni's c, stored as c = exp(u) so that gradient steps keep it positive."""

    def __init__(self, c, lr):
        if not c > 0:
            raise ValueError("c must be positive")
        self.u = math.log(c)
        self.lr = lr
        self._opt = Adam(lr, 1)

    @property
    def c(self):
        return math.exp(self.u)

    def step(self, grad_c):
        grad_u = grad_c * self.c
        self.u = float(self._opt.step(np.array([self.u]), np.array([grad_u]))[0])
        return self.c


def catoni_init_and_step(c_grid, first_batch_objective_values, lr=1e-2):
    """Pick the grid value with the lowest first-batch objective.

    Returns (initial c, CatoniParameter implementing the update rule).
    """
    grid = [float(c) for c in c_grid]
    if not grid:
        raise ValueError("c_grid must be nonempty")
    values = list(first_batch_objective_values)
    if len(values) != len(grid):
        raise ValueError("need one objective value per grid point")
    best = grid[int(np.argmin(values))]
    return best, CatoniParameter(best, lr)


# ------------------------------------------------------------ phase 2


@dataclass
class PosteriorPhase:
    posterior_mean: np.ndarray
    history: list
    final_c: float | None = None


def learn_posterior(arch, config, s, prior, t_priors):
    """Minimize the configured bound objective over the posterior mean, starting at the prior."""
    m = len(s)
    omega = np.array(prior, dtype=np.float64, copy=True)
    prior = np.asarray(prior, dtype=np.float64)
    opt = Adam(config.lr_posterior, omega.size)
    method = config.objective
    catoni = None
    history = []
    common = dict(m=m, t_priors=t_priors, delta=config.delta, sigma2=config.sigma2, z=config.z, c_grid_size=len(config.c_grid))
    for epoch in range(config.epochs_posterior):
        values, qs, divs, psis = [], [], [], []
        for step, idx in enumerate(_batches(m, config.batch_size, stream(config.seed, "posterior_batches", epoch))):
            _, eps = sample_weights(omega, config.sigma2, stream(config.seed, "posterior_noise", epoch, step))
            xb, yb = s.x[idx], s.y[idx]
            if method == "catoni" and catoni is None:
                first = [bound_objective(arch, method, omega, eps, prior, xb, yb, c=c, **common).value for c in config.c_grid]
                _, catoni = catoni_init_and_step(config.c_grid, first, config.catoni_lr)
            out = bound_objective(arch, method, omega, eps, prior, xb, yb, c=None if catoni is None else catoni.c, **common)
            if not (math.isfinite(out.value) and np.all(np.isfinite(out.grad))):
                raise TrainingDivergedError(f"non-finite {method} objective at epoch {epoch + 1}, step {step}")
            omega = opt.step(omega, out.grad)
            if catoni is not None:
                catoni.step(out.grad_c)
            values.append(out.value)
            qs.append(out.surrogate_risk)
            divs.append(out.divergence)
            psis.append(out.psi)
        history.append(
            {
                "epoch": epoch + 1,
                "phase": "posterior",
                "objective": float(np.mean(values)),
                "surrogate_risk": float(np.mean(qs)),
                "divergence": float(np.mean(divs)),
                "psi": float(np.mean(psis)),
            }
        )
    return PosteriorPhase(omega, history, None if catoni is None else catoni.c)


# ------------------------------------------------------------ run record


@dataclass
class TrainRun:
    config: dict
    widths: tuple
    prior_checkpoints: list
    selected_prior_index: int
    posterior_mean: np.ndarray
    history: list
    final_c: float | None = None
    summary: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)
    net_risks: dict = field(default_factory=dict)

    @property
    def prior_mean(self):
        return self.prior_checkpoints[self.selected_prior_index - 1]

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "widths": list(self.widths),
            "prior_checkpoints": [np.asarray(v).tolist() for v in self.prior_checkpoints],
            "selected_prior_index": self.selected_prior_index,
            "posterior_mean": np.asarray(self.posterior_mean).tolist(),
            "history": self.history,
            "final_c": self.final_c,
            "summary": self.summary,
            "reports": self.reports,
            "net_risks": {k: np.asarray(v).tolist() for k, v in self.net_risks.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def train(arch, config, s_prior, s):
    """Both phases; evaluation is left to evaluate_run."""
    priors = learn_priors(arch, config, s_prior)
    index = select_prior(arch, priors.checkpoints, s, config.sigma2, config.seed, config.z)
    posterior = learn_posterior(arch, config, s, priors.checkpoints[index - 1], config.epochs_prior)
    cfg = asdict(config)
    cfg["c_grid"] = list(cfg["c_grid"])
    return TrainRun(
        config=cfg,
        widths=arch.widths,
        prior_checkpoints=priors.checkpoints,
        selected_prior_index=index,
        posterior_mean=posterior.posterior_mean,
        history=priors.history + posterior.history,
        final_c=posterior.final_c,
    )


# ------------------------------------------------------------ evaluation


def _summary_row(method, r_test, bound, r_emp, div, bound_ce=None):
    def stats(a):
        a = np.asarray(a, dtype=np.float64)
        # np.std of identical values can round to ~1e-16; report exact zero
        if np.all(a == a.flat[0]):
            return float(a.flat[0]), 0.0
        return float(a.mean()), float(a.std())

    row = {"method": method}
    for name, values in (("r_test", r_test), ("bound", bound), ("r_emp", r_emp), ("div", div)):
        row[f"{name}_mean"], row[f"{name}_std"] = stats(values)
    row["bound_ce_mean"] = None if bound_ce is None else stats(bound_ce)[0]
    return row


def evaluate_run(arch, run, s, s_test, config):
    """Sample n_eval nets from the posterior and certify each with every method.

    Fills run.summary (one row per method, columns as R_T, Bnd, R_S, Div with
    mean and std), run.reports (the bound reports of the first sampled net
    plus the stochastic report) and run.net_risks (per-net arrays).
    """
    m = len(s)
    ctx = BoundContext(m=m, delta=config.delta, t_priors=config.epochs_prior)
    w = run.posterior_mean
    v = run.prior_mean
    diff = w - v
    distance = float(diff @ diff)
    n = config.n_eval
    arrays = {k: np.empty(n) for k in ("r_emp_01", "r_emp_ce", "r_test_01", "dkl")}
    certified = {f"{meth}_{loss}": np.empty(n) for meth in REPORT_METHODS for loss in ("01", "ce")}
    divergences = {meth: np.empty(n) for meth in REPORT_METHODS}
    first_reports = {}
    for i in range(n):
        h, eps = sample_weights(w, config.sigma2, stream(config.seed, "eval", i))
        r01, rce = risks(arch, h, s, config.z)
        rt01, _ = risks(arch, h, s_test, config.z)
        shifted = w + eps - v
        dkl = float(shifted @ shifted - eps @ eps) / (2.0 * config.sigma2)
        arrays["r_emp_01"][i], arrays["r_emp_ce"][i], arrays["r_test_01"][i], arrays["dkl"][i] = r01, rce, rt01, dkl
        for loss, r in (("01", r01), ("ce", rce)):
            ours = bound_ours_from_distance(ctx, r, distance, config.sigma2)
            certified[f"ours_{loss}"][i] = ours.certified_risk
            divergences["ours"][i] = ours.divergence_term
            if i == 0:
                first_reports[f"ours_{loss}"] = ours.to_dict()
            for meth in ("rivasplata", "blanchard", "catoni"):
                rep = bound_baseline_from_dkl(ctx, meth, r, dkl, config.sigma2, config.c_grid)
                certified[f"{meth}_{loss}"][i] = rep.certified_risk
                divergences[meth][i] = rep.divergence_term
                if i == 0:
                    first_reports[f"{meth}_{loss}"] = rep.to_dict()
    summary = [
        _summary_row(
            meth,
            arrays["r_test_01"],
            certified[f"{meth}_01"],
            arrays["r_emp_01"],
            divergences[meth],
            certified[f"{meth}_ce"],
        )
        for meth in REPORT_METHODS
    ]
    stochastic = bound_stochastic_from_distance(ctx, arrays["r_emp_01"], distance, config.sigma2)
    first_reports["stochastic_01"] = stochastic.to_dict()
    summary.append(
        _summary_row("stochastic", arrays["r_test_01"], [stochastic.certified_risk], arrays["r_emp_01"], [stochastic.divergence_term])
    )
    run.summary = summary
    run.reports = first_reports
    run.net_risks = {**arrays, **{f"certified_{k}": v for k, v in certified.items()}}
    return summary
