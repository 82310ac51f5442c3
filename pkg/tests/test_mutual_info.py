import itertools
import math

import numpy as np
import pytest

from disbound.binary_kl import kl_inverse, pinsker_gap
from disbound.mutual_info import (
    EnumerationCapError,
    FiniteLearningProblem,
    GibbsAlgorithm,
    PreconditionError,
    fixture_paths,
    info_bound_rhs,
    joint_renyi,
    load_problem,
    shannon_mi,
    sibson_mi,
)
from disbound.validity_sim import coverage

# 40-digit hand enumeration of the 2x2x2 toy problem (see conftest) at alpha = 2, delta = 0.05
TOY_SIBSON2 = 0.24961993491871400311
TOY_PRIOR = (0.55933555959342347979, 0.44066444040657652021)
TOY_THM8_RHS = 7.1573752139008510552


def fixtures():
    return {p.stem: load_problem(p) for p in fixture_paths()}


def brute_shannon(problem):
    """E_S KL(Q_S || E_S' Q_S') by looping over every ordered sample."""
    rows = []
    for sample in itertools.product(range(problem.n_examples), repeat=problem.m):
        prob = float(np.prod(problem.z_probs[list(sample)]))
        _, post = problem.posteriors_for(np.array([sample]))
        rows.append((prob, post[0]))
    marginal = sum(p * q for p, q in rows)
    return sum(p * float(np.sum(np.where(q > 0, q * np.log(q / marginal), 0.0))) for p, q in rows)


class TestSibson:
    def test_independent_algorithm(self):
        problem = fixtures()["independent"]
        res = sibson_mi(problem, 2.0)
        assert res.value == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(res.prior.probs, [0.5, 0.3, 0.2], atol=1e-12)

    def test_toy_reference(self, toy_problem):
        res = sibson_mi(toy_problem, 2.0)
        assert res.value == pytest.approx(TOY_SIBSON2, abs=1e-12)
        np.testing.assert_allclose(res.prior.probs, TOY_PRIOR, atol=1e-12)

    @pytest.mark.parametrize("alpha", [1.5, 2.0, 4.0])
    def test_simplex_grid_minimum(self, toy_problem, alpha):
        grid = np.linspace(1e-4, 1 - 1e-4, 9999)
        values = [joint_renyi(toy_problem, alpha, [g, 1 - g]) for g in grid]
        res = sibson_mi(toy_problem, alpha)
        assert res.value <= min(values) + 1e-12
        assert res.value == pytest.approx(min(values), abs=1e-6)

    def test_closed_form_equals_joint_divergence(self, toy_problem):
        for alpha in (1.5, 3.0):
            res = sibson_mi(toy_problem, alpha)
            assert joint_renyi(toy_problem, alpha, res.prior) == pytest.approx(res.value, rel=1e-12)

    def test_nondecreasing_in_alpha(self):
        for problem in fixtures().values():
            vals = [sibson_mi(problem, a).value for a in (1.5, 2.0, 4.0, 8.0)]
            assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_optimal_prior_beats_random(self):
        problem = fixtures()["two_atom_gibbs"]
        res = sibson_mi(problem, 2.0)
        assert res.prior.probs.sum() == pytest.approx(1.0, abs=1e-12)
        rng = np.random.default_rng(0)
        for _ in range(50):
            prior = rng.dirichlet(np.ones(problem.n_hypotheses))
            assert res.value <= joint_renyi(problem, 2.0, prior) + 1e-12

    def test_limit_to_shannon(self):
        for problem in fixtures().values():
            assert sibson_mi(problem, 1 + 1e-4).value == pytest.approx(shannon_mi(problem).value, abs=1e-3)

    def test_cap_and_monte_carlo(self):
        exact_problem = fixtures()["three_atom_gibbs"]
        exact = sibson_mi(exact_problem, 2.0).value
        capped = load_problem(fixture_paths()[2], enumeration_cap=100)
        with pytest.raises(EnumerationCapError):
            sibson_mi(capped, 2.0)
        est = sibson_mi(capped, 2.0, monte_carlo=True, n_samples=40000, seed=1)
        assert est.stderr is not None and est.stderr > 0
        assert abs(est.value - exact) < 4 * est.stderr + 1e-3


class TestShannon:
    def test_independent(self):
        assert shannon_mi(fixtures()["independent"]).value == pytest.approx(0.0, abs=1e-12)

    def test_matches_enumeration(self, toy_problem):
        for problem in [toy_problem, fixtures()["two_atom_gibbs"]]:
            assert shannon_mi(problem).value == pytest.approx(brute_shannon(problem), rel=1e-10)

    def test_below_sibson(self):
        for problem in fixtures().values():
            shannon = shannon_mi(problem).value
            for alpha in (1.5, 2.0, 4.0):
                assert shannon <= sibson_mi(problem, alpha).value + 1e-12


class TestInfoBounds:
    def test_independent_seeger_budget(self):
        problem = fixtures()["independent"]
        res = info_bound_rhs("seeger_mi", problem, 2.0, 0.05)
        expected = math.log(2 * math.sqrt(problem.m) / 0.05**2) / problem.m
        assert res.psi == pytest.approx(expected, abs=1e-12)

    def test_thm8_toy(self, toy_problem):
        res = info_bound_rhs("thm8", toy_problem, 2.0, 0.05)
        assert res.rhs == pytest.approx(TOY_THM8_RHS, abs=1e-10)

    def test_kl_version_precondition(self, toy_problem):
        bad = np.zeros((4, 2))
        bad[0, 0] = -0.1
        with pytest.raises(PreconditionError):
            info_bound_rhs("kl_version", toy_problem, 2.0, 0.05, log_phi=bad)
        ok = info_bound_rhs("kl_version", toy_problem, 2.0, 0.05, log_phi=np.zeros((4, 2)))
        assert ok.rhs == pytest.approx(shannon_mi(toy_problem).value / 0.05)

    def test_thm8_validity_by_enumeration(self):
        for problem in fixtures().values():
            if problem.n_examples**problem.m > 10**4:
                continue
            for delta in (0.05, 0.1, 0.3):
                assert coverage(problem, "thm8", delta, mode="exact").rate <= delta

    @pytest.mark.parametrize("alpha", [1.5, 2.0, 4.0])
    @pytest.mark.parametrize("delta", [0.05, 0.1])
    def test_seeger_tighter_where_condition_holds(self, alpha, delta):
        checked = 0
        for problem in fixtures().values():
            seeger = info_bound_rhs("seeger_mi", problem, alpha, delta)
            esposito = info_bound_rhs("esposito", problem, alpha, delta)
            threshold = math.log(math.sqrt(problem.m)) / problem.m
            for q in np.unique(problem.enumeration.emp_risk):
                p_seeger = seeger.certified_risk(q)
                if p_seeger >= 1.0 - 1e-9 or p_seeger <= q:
                    continue
                if pinsker_gap(q, p_seeger) >= threshold:
                    checked += 1
                    assert p_seeger <= esposito.certified_risk(q) + 1e-12
        assert checked > 0


class TestLoading:
    def test_fixtures_enumerable(self):
        probs = fixtures()
        assert len(probs) >= 3
        assert all(p.enumeration_size <= 10**6 for p in probs.values())

    def test_rejects_bad_loss(self):
        with pytest.raises(ValueError):
            FiniteLearningProblem([0.5, 0.5], [[0.0, 1.5]], 2, GibbsAlgorithm(1.0))

    def test_rejects_unknown_algorithm(self):
        with pytest.raises(ValueError):
            load_problem({"z_probs": [1.0], "loss_table": [[0.0]], "m": 1, "algorithm": {"type": "oracle"}})
