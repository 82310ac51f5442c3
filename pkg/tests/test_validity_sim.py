import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import comb

from disbound.mutual_info import fixture_paths, load_problem
from disbound.validity_sim import (
    COVERAGE_COLUMNS,
    append_coverage_csv,
    clopper_pearson,
    coverage,
    maurer_check,
    maurer_exact,
    moment_term,
    moment_term_monte_carlo,
)

MAURER_25 = 6.9529791062452591333


def two_atom():
    return load_problem([p for p in fixture_paths() if p.stem == "two_atom_gibbs"][0])


def p_free_moment(m):
    """For p in (0, 1) the moment reduces to sum_k C(m,k) (k/m)^k (1-k/m)^(m-k)."""
    return sum(comb(m, k, exact=True) * (k / m) ** k * (1 - k / m) ** (m - k) for k in range(m + 1))


class TestMaurer:
    def test_small_cases(self):
        assert maurer_exact(1, 0.5) == pytest.approx(2.0, rel=1e-14)
        assert maurer_exact(1, 0.0) == pytest.approx(1.0, rel=1e-14)
        assert maurer_exact(1, 1.0) == pytest.approx(1.0, rel=1e-14)
        assert maurer_exact(25, 0.3) <= 10.0
        assert maurer_exact(25, 0.3) == pytest.approx(MAURER_25, rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 60), st.floats(0.001, 0.999))
    def test_matches_p_free_form(self, m, p):
        assert maurer_exact(m, p) == pytest.approx(p_free_moment(m), rel=1e-10)

    def test_check_passes(self):
        ok, rows = maurer_check(20, p_grid=[0.0, 0.1, 0.5, 1.0])
        assert ok
        assert len(rows) == 80

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            maurer_exact(0, 0.5)
        with pytest.raises(ValueError):
            maurer_exact(3, 1.5)


class TestCoverage:
    def test_delta_one_is_recorded(self):
        res = coverage(two_atom(), "thm8", 1.0, mode="exact")
        assert res.delta == 1.0
        assert res.rate <= 1.0

    @pytest.mark.parametrize("kind", ["thm2_alpha2", "thm3_lambda", "corollary5_analog", "thm8", "seeger_mi"])
    def test_two_atom_exact(self, kind):
        res = coverage(two_atom(), kind, 0.05, mode="exact")
        assert res.mode == "exact"
        assert res.rate <= 0.05

    def test_monte_carlo_interval(self):
        res = coverage(two_atom(), "corollary5_analog", 0.05, trials=5000, seed=3, mode="monte_carlo")
        assert res.trials == 5000
        assert res.cp_lower <= res.rate <= res.cp_upper
        assert res.cp_lower <= 0.05

    def test_monte_carlo_agrees_with_exact(self):
        problem = two_atom()
        exact = coverage(problem, "thm8", 0.3, mode="exact").rate
        mc = coverage(problem, "thm8", 0.3, trials=20000, seed=5, mode="monte_carlo")
        lo, hi = clopper_pearson(mc.violations, mc.trials, level=0.999)
        assert lo <= exact <= hi

    def test_monte_carlo_is_reproducible(self):
        a = coverage(two_atom(), "seeger_mi", 0.1, trials=3000, seed=9, mode="monte_carlo")
        b = coverage(two_atom(), "seeger_mi", 0.1, trials=3000, seed=9, mode="monte_carlo")
        assert a == b

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            coverage(two_atom(), "thm8", 0.0)
        with pytest.raises(ValueError):
            coverage(two_atom(), "nonsense", 0.05)
        with pytest.raises(ValueError):
            coverage(two_atom(), "thm8", 0.05, mode="monte_carlo")

    def test_csv_appends(self, tmp_path):
        path = tmp_path / "coverage.csv"
        res = coverage(two_atom(), "thm8", 0.05, mode="exact")
        append_coverage_csv(path, [res])
        append_coverage_csv(path, [res])
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        assert tuple(rows[0].keys()) == COVERAGE_COLUMNS


class TestClopperPearson:
    @settings(max_examples=80, deadline=None)
    @given(st.integers(1, 5000), st.data())
    def test_interval_contains_rate(self, n, data):
        k = data.draw(st.integers(0, n))
        lo, hi = clopper_pearson(k, n)
        assert 0.0 <= lo <= k / n <= hi <= 1.0

    def test_zero_violations(self):
        lo, hi = clopper_pearson(0, 1000)
        assert lo == 0.0
        assert hi == pytest.approx(1 - 0.005 ** (1 / 1000), rel=1e-9)


class TestMomentTerm:
    def test_below_log_bound(self):
        for path in fixture_paths():
            problem = load_problem(path)
            assert moment_term(problem) <= math.log(2 * math.sqrt(problem.m)) + 1e-12

    def test_monte_carlo_within_three_se(self):
        problem = two_atom()
        exact = math.exp(moment_term(problem))
        est, se = moment_term_monte_carlo(problem, 50000, seed=2)
        assert abs(est - exact) <= 3 * se

    def test_alpha_invariance(self):
        problem = two_atom()
        assert moment_term(problem, 1.5) == moment_term(problem, 4.0)
        with pytest.raises(ValueError):
            moment_term(problem, 1.0)
