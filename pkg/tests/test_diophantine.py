"""Divisor checks and the good-set measure estimator."""

import math
from dataclasses import replace

import numpy as np
import pytest

from kamtori.diophantine import (DioParams, FrequencyMap, brute_force_high_ratio,
                                 brute_force_low_ratio, check_high, check_low,
                                 derive_params, measure_estimate, wilson_interval,
                                 with_gamma)
from kamtori.errors import DomainError
from kamtori.series import FourierTaylorSeries

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


class TestDeriveParams:
    def test_arithmetic(self):
        p = derive_params(2.0, 1.0, 1, 1e-3, 1e-3)
        assert p.B == 5 * 2.0 - 1.0 + 2 * 2.0 * 1
        assert p.B == 13.0
        assert p.ell == 2 * 2 * 13.0 / 1.0 + 1e-3
        assert p.ell == pytest.approx(52.001)
        # tau2 is constructed as tau1 + 1, so the identity is bitwise
        assert p.tau2 == p.tau1 + 1.0
        L = math.log(1e3)
        assert p.gamma == L ** -4.0
        assert p.cutoff == (1e-3) ** (-13.0 / p.ell) * L ** 2

    def test_preconditions(self):
        with pytest.raises(DomainError):
            derive_params(1.0, 2.0, 1, 1e-3, 1e-3)  # a > b violated
        with pytest.raises(DomainError):
            derive_params(2.0, 1.0, 1, 0.0, 1e-3)
        with pytest.raises(DomainError):
            derive_params(2.0, 1.0, 1, 1e-3, 1.5)


def golden_omega(p):
    """omega0 whose scaled frequency omega0/eps^a has golden fractional part."""
    target = 1200.0 + (GOLDEN - 1.0)
    return np.array([target * p.eps ** p.a]), target


class TestCheckLow:
    def test_golden_passes_with_brute_force(self):
        p = derive_params(2.0, 1.0, 1, 1e-3, 0.05)
        om, _ = golden_omega(p)
        res = check_low(om, p)
        assert res.passed
        # oracle: exhaustive scan over every (k, l) in the block
        assert brute_force_low_ratio(om, p) >= 1.0
        # the fast path found the same minimal ratio as brute force
        assert res.worst_margin == pytest.approx(brute_force_low_ratio(om, p), rel=1e-12)

    def test_rational_fails_with_witness(self):
        p = derive_params(2.0, 1.0, 1, 1e-3, 0.05)
        # scaled frequency exactly 7/3: divisor vanishes at k = 3, l = -7
        om = np.array([(7.0 / 3.0) * p.eps ** p.a])
        res = check_low(om, p)
        assert not res.passed
        assert res.worst_k == (3,)
        assert res.worst_l == -7
        assert res.worst_value == pytest.approx(0.0, abs=1e-9)

    def test_empty_range_vacuous(self):
        p = derive_params(2.0, 1.0, 1, 1e-3, 0.05)
        p0 = replace(p, cutoff=0.5)
        res = check_low(np.array([1.3]), p0)
        assert res.passed and res.n_checked == 0

    def test_three_candidates_match_brute_force(self, rng):
        p = derive_params(2.0, 1.0, 1, 1e-3, 0.05)
        for _ in range(10):
            om = np.array([rng.uniform(1.0, 2.0) * p.eps ** p.a])
            res = check_low(om, p)
            oracle = brute_force_low_ratio(om, p)
            assert res.worst_margin == pytest.approx(oracle, rel=1e-12)

    def test_d2_enumeration(self):
        p = derive_params(2.0, 1.0, 2, 1e-3, 0.3)
        om = np.array([1.0 + (GOLDEN - 1.0), 1.0 + math.sqrt(2.0) - 1.0]) * p.eps ** p.a
        res = check_low(om, p)
        oracle = brute_force_low_ratio(om, p)
        assert res.worst_margin == pytest.approx(oracle, rel=1e-9)


class TestCheckHigh:
    def test_golden_passes(self):
        p = derive_params(2.0, 1.0, 1, 1e-3, 0.05)
        om, _ = golden_omega(p)
        k_max = 10 * int(p.cutoff)
        res = check_high(om, p, k_max=k_max)
        assert res.passed
        assert brute_force_high_ratio(om, p, min(k_max, 120)) >= 1.0

    def test_beyond_resolution_trivial(self):
        # for k so large that gamma / k^tau2 is below the divisor floor 1/2,
        # every candidate passes
        p = derive_params(2.0, 1.0, 1, 1e-3, 0.05)
        k_big = int((p.gamma / 0.49) ** (-1.0 / p.tau2)) + 1
        assert p.high_bound(k_big) < 0.5

    def test_rational_beyond_cutoff_fails(self):
        p = derive_params(2.0, 1.0, 1, 1e-3, 0.05)
        q = int(p.cutoff) + 7
        om = np.array([(5.0 / q) * p.eps ** p.a])
        res = check_high(om, p, k_max=3 * q)
        assert not res.passed
        assert res.worst_k == (q,) or res.worst_value == pytest.approx(0.0, abs=1e-12)

    def test_k_max_precondition(self):
        p = derive_params(2.0, 1.0, 1, 1e-3, 0.05)
        with pytest.raises(DomainError):
            check_high(np.array([1.3]), p, k_max=3)

    def test_monotone_in_gamma(self):
        p = derive_params(2.0, 1.0, 1, 1e-3, 0.05)
        om = np.array([1.37 * p.eps ** p.a])
        k_max = 2 * int(p.cutoff)
        base = check_high(om, p, k_max=k_max)
        tighter = check_high(om, with_gamma(p, p.gamma * 20.0), k_max=k_max)
        if not base.passed:
            assert not tighter.passed
        assert tighter.worst_margin <= base.worst_margin

    def test_scaling_invariance_exact(self):
        # scaling omega0 and eps^a jointly by a power of two leaves every
        # divisor value bit-identical
        omega0, inv_eps_a = 1.37, 400.0
        lam = 4.0
        for k in range(1, 80):
            x = k * omega0 * inv_eps_a
            x_scaled = k * (omega0 * lam) * (inv_eps_a / lam)
            for l in (-round(x) - 1, -round(x), -round(x) + 1):
                assert abs(x + l) == abs(x_scaled + l)


class TestMeasure:
    def setup_method(self):
        self.H0 = FourierTaylorSeries.from_absolute_polynomial(
            {(2,): 0.5}, 1, [1.5], 2)
        self.fmap = FrequencyMap(self.H0)

    def test_reproducible(self):
        p = derive_params(2.0, 1.0, 1, 1e-3, 1e-2)
        e1 = measure_estimate(self.fmap, p, 120, seed=42)
        e2 = measure_estimate(self.fmap, p, 120, seed=42)
        assert e1.fraction == e2.fraction
        assert e1.worst_witness == e2.worst_witness

    def test_gamma_zero_vacuous(self):
        p = with_gamma(derive_params(2.0, 1.0, 1, 1e-3, 1e-2), 0.0)
        est = measure_estimate(self.fmap, p, 120, seed=1)
        assert est.fraction == 1.0

    def test_fraction_grows_as_eps_shrinks(self):
        p2 = derive_params(2.0, 1.0, 1, 1e-3, 1e-2)
        p3 = derive_params(2.0, 1.0, 1, 1e-3, 1e-3)
        e2 = measure_estimate(self.fmap, p2, 400, seed=3)
        e3 = measure_estimate(self.fmap, p3, 400, seed=3)
        slack = (e2.ci_high - e2.ci_low) / 2 + (e3.ci_high - e3.ci_low) / 2
        assert e3.fraction >= e2.fraction - slack

    def test_sample_floor(self):
        p = derive_params(2.0, 1.0, 1, 1e-3, 1e-2)
        with pytest.raises(DomainError):
            measure_estimate(self.fmap, p, 50, seed=1)

    def test_wilson(self):
        lo, hi = wilson_interval(90, 100)
        assert 0.8 < lo < 0.9 < hi < 0.96
        lo, hi = wilson_interval(100, 100)
        assert hi == 1.0 and lo > 0.95


@pytest.fixture
def rng():
    return np.random.default_rng(7)
