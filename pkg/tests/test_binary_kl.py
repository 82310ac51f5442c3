import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disbound.binary_kl import (
    DegeneratePointError,
    InfiniteDivergenceError,
    kl,
    kl_inverse,
    kl_inverse_grad,
    kl_inverse_many,
    pinsker_gap,
)

# 40-digit evaluations of the closed form
KL_01_03 = 0.11632175658600450078
KL_INV_01_005 = 0.22007860110692461786
GRID_SCAN_01_005 = 0.22007860000345295  # largest feasible point on a 1e-7 grid

risk = st.floats(0.0, 1.0)


def kl_exact(q, p):
    with mpmath.workdps(50):
        q, p = mpmath.mpf(q), mpmath.mpf(p)
        a = q * mpmath.log(q / p) if q > 0 else 0
        b = (1 - q) * mpmath.log((1 - q) / (1 - p)) if q < 1 else 0
        return a + b
inner = st.floats(1e-6, 1 - 1e-6)


class TestKl:
    def test_identity(self):
        assert kl(0.3, 0.3) == 0.0

    def test_q_zero_closed_form(self):
        assert kl(0.0, 0.25) == pytest.approx(-math.log(0.75), rel=1e-15)

    def test_high_precision_value(self):
        assert kl(0.1, 0.3) == pytest.approx(KL_01_03, rel=1e-14)

    def test_infinite_is_its_own_error(self):
        with pytest.raises(InfiniteDivergenceError):
            kl(0.2, 0.0)
        with pytest.raises(InfiniteDivergenceError):
            kl(0.2, 1.0)
        assert not issubclass(InfiniteDivergenceError, OverflowError)

    def test_boundary_equal(self):
        assert kl(0.0, 0.0) == 0.0
        assert kl(1.0, 1.0) == 0.0

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            kl(1.2, 0.5)

    def test_vectorized(self):
        out = kl(np.array([0.1, 0.3]), np.array([0.3, 0.3]))
        np.testing.assert_allclose(out, [KL_01_03, 0.0], rtol=1e-14)

    @given(inner, inner)
    def test_nonnegative(self, q, p):
        assert kl(q, p) >= 0.0


class TestKlInverse:
    def test_zero_budget(self):
        assert kl_inverse(0.37, 0.0).p_star == 0.37

    def test_q_zero_closed_form(self):
        assert kl_inverse(0.0, math.log(2)).p_star == pytest.approx(0.5, abs=1e-12)

    def test_against_root_and_grid_scan(self):
        res = kl_inverse(0.1, 0.05)
        assert res.p_star == pytest.approx(KL_INV_01_005, abs=1e-11)
        assert abs(res.p_star - GRID_SCAN_01_005) < 1e-7
        assert res.residual < 1e-10
        assert 0 < res.iterations <= 200

    def test_q_one(self):
        assert kl_inverse(1.0, 0.3).p_star == 1.0

    def test_rejects_non_finite_budget(self):
        with pytest.raises(ValueError):
            kl_inverse(0.1, math.inf)
        with pytest.raises(ValueError):
            kl_inverse(0.1, math.nan)

    def test_saturates_below_one(self):
        assert kl_inverse(0.5, 1e3).p_star < 1.0

    @given(risk, st.floats(0.0, 20.0), st.floats(1e-12, 1e-4))
    def test_feasible_and_maximal(self, q, psi, tol):
        res = kl_inverse(q, psi, tol)
        assert res.p_star >= q
        if q < 1.0:
            assert kl(q, res.p_star) <= psi
            nxt = res.p_star + tol
            if nxt < 1.0 - 1e-15:
                # float kl cannot resolve a step of tol near q, so compare exactly
                assert kl_exact(q, nxt) > psi

    def test_round_trip_grid(self):
        grid = np.linspace(0.005, 0.995, 100)
        q, p = np.meshgrid(grid, grid, indexing="ij")
        mask = q < p
        psi = kl(q[mask], p[mask])
        back = kl_inverse_many(q[mask], psi)
        assert np.max(np.abs(back - p[mask])) < 1e-8

    def test_monotone_on_grid(self):
        qs = np.linspace(0.0, 0.99, 40)
        psis = np.linspace(0.0, 2.0, 40)
        table = kl_inverse_many(qs[:, None], psis[None, :])
        assert np.all(np.diff(table, axis=0) >= -1e-12)
        assert np.all(np.diff(table, axis=1) >= -1e-12)

    def test_many_matches_scalar(self):
        rng = np.random.default_rng(3)
        q = rng.random(50)
        psi = rng.random(50)
        np.testing.assert_array_equal(kl_inverse_many(q, psi), [kl_inverse(a, b).p_star for a, b in zip(q, psi)])


class TestKlInverseGrad:
    @staticmethod
    def central(q, psi, h=1e-6):
        dq = (kl_inverse(q + h, psi).p_star - kl_inverse(q - h, psi).p_star) / (2 * h)
        dpsi = (kl_inverse(q, psi + h).p_star - kl_inverse(q, psi - h).p_star) / (2 * h)
        return dq, dpsi

    def test_reference_point(self):
        dq, dpsi = kl_inverse_grad(0.1, 0.05)
        fq, fpsi = self.central(0.1, 0.05)
        assert dq == pytest.approx(fq, rel=1e-4)
        assert dpsi == pytest.approx(fpsi, rel=1e-4)

    def test_positive_q_partial(self):
        dq, _ = kl_inverse_grad(0.2, 0.1)
        fq, _ = self.central(0.2, 0.1)
        assert 0 < dq < math.inf
        assert fq > 0

    @given(st.floats(0.01, 0.95), st.floats(1e-3, 2.0))
    @settings(max_examples=200)
    def test_budget_partial_positive(self, q, psi):
        assert kl_inverse_grad(q, psi)[1] > 0

    def test_guard(self):
        with pytest.raises(DegeneratePointError):
            kl_inverse_grad(0.3, 1e-13)
        with pytest.raises(DegeneratePointError):
            kl_inverse_grad(0.3, 0.0)

    def test_rejects_boundary_q(self):
        with pytest.raises(ValueError):
            kl_inverse_grad(0.0, 0.1)


class TestPinsker:
    def test_identity(self):
        assert pinsker_gap(0.3, 0.3) == 0.0

    def test_value(self):
        assert pinsker_gap(0.1, 0.3) == pytest.approx(KL_01_03 - 0.08, rel=1e-13)

    def test_grid_nonnegative(self):
        grid = np.linspace(0.0, 0.999, 200)
        q, p = np.meshgrid(grid, grid[1:], indexing="ij")
        assert np.min(pinsker_gap(q, p)) >= -1e-12
