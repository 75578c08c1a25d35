"""Spectral series algebra: norms, arithmetic, calculus, serialization."""

import math

import numpy as np
import pytest

from kamtori.errors import CenterMismatch, DomainError
from kamtori.series import Domain, FourierTaylorSeries, ModeIndex

from conftest import random_real_series

C = [1.5]


def sample_sup(f, s=0.0, n=4000, seed=0):
    """Dense sampling of |f| on the (complexified) torus at fixed action = center."""
    rng = np.random.default_rng(seed)
    th = rng.uniform(0, 2 * np.pi, size=(f.d, n)) + 1j * rng.uniform(-s, s, size=(f.d, n))
    t = rng.uniform(0, 2 * np.pi, size=n) + 1j * rng.uniform(-s, s, size=n)
    vals = f.evaluate(th, t, np.broadcast_to(f.center[:, None], (f.d, n)))
    return float(np.max(np.abs(vals)))


class TestMajorant:
    def test_constant(self):
        f = FourierTaylorSeries.constant(1.0, 1, C)
        assert f.majorant_norm(s=0.3, r=0.1) == 1.0

    def test_single_mode(self):
        # e^{i(theta + t)} at width s = 0.1: weight e^{(1+1)*0.1}
        f = FourierTaylorSeries.harmonic([1], 1, 1.0, 1, C)
        assert f.majorant_norm(s=0.1, r=0.0) == pytest.approx(math.exp(0.2), rel=1e-15)

    def test_two_cosine(self):
        f = FourierTaylorSeries.cosine([1], 0, 2.0, 1, C)
        assert f.majorant_norm(s=0.0, r=0.0) == pytest.approx(2.0, rel=1e-15)
        # sup of 2cos(theta) on the real torus is 2
        assert sample_sup(f) <= 2.0 + 1e-12

    def test_dominates_sampled_sup(self, rng):
        for _ in range(100):
            f = random_real_series(rng, d=1)
            nrm = f.majorant_norm(s=0.0, r=0.0)
            assert nrm >= sample_sup(f, n=500, seed=int(rng.integers(1 << 30))) - 1e-12

    def test_monotone_in_widths(self, rng):
        f = random_real_series(rng)
        assert f.majorant_norm(s=0.2, r=0.05) <= f.majorant_norm(s=0.3, r=0.05)
        assert f.majorant_norm(s=0.2, r=0.05) <= f.majorant_norm(s=0.2, r=0.1)

    def test_center_mismatch(self):
        f = FourierTaylorSeries.constant(1.0, 1, C)
        with pytest.raises(CenterMismatch):
            f.majorant_norm(Domain(0.1, 0.1, (2.0,)))


class TestArithmetic:
    def test_additive_identity(self, rng):
        f = random_real_series(rng)
        g = f + f.zero_like()
        assert g.to_record() == f.to_record()

    def test_mode_cancellation(self):
        f = FourierTaylorSeries.harmonic([1], 0, 1.0, 1, C)
        g = FourierTaylorSeries.harmonic([-1], 0, 1.0, 1, C)
        prod = f.multiply(g)
        assert set(prod.coeffs) == {((0,), 0)}
        assert prod.coeffs[((0,), 0)][(0,)] == pytest.approx(1.0)

    def test_cosine_square(self):
        # cos^2 = 1/2 + cos(2 theta)/2, checked both in coefficients and pointwise
        f = FourierTaylorSeries.cosine([1], 0, 1.0, 1, C)
        prod = f.multiply(f, cutoff="sum")
        assert prod.coeffs[((0,), 0)][(0,)] == pytest.approx(0.5)
        assert prod.coeffs[((2,), 0)][(0,)] == pytest.approx(0.25)
        th = np.linspace(0, 2 * np.pi, 17)
        lhs = np.cos(th) ** 2
        rhs = prod.evaluate(th[None, :], np.zeros_like(th), np.full((1, 17), 1.5))
        np.testing.assert_allclose(rhs.real, lhs, atol=1e-14)

    def test_default_cutoff_is_max(self):
        f = FourierTaylorSeries.harmonic([3], 0, 1.0, 1, C)
        g = FourierTaylorSeries.harmonic([2], 0, 1.0, 1, C)
        prod = f.multiply(g)  # mode (5, 0) exceeds max cutoff 3
        assert prod.is_zero()
        assert not f.multiply(g, cutoff="sum").is_zero()

    def test_majorant_submultiplicative(self, rng):
        dom = Domain(0.2, 0.1, tuple(C))
        for _ in range(25):
            f = random_real_series(rng)
            g = random_real_series(rng)
            fg = f.multiply(g, cutoff="sum")
            assert fg.majorant_norm(dom) <= f.majorant_norm(dom) * g.majorant_norm(dom) * (1 + 1e-12)

    def test_reality_preserved(self, rng):
        for _ in range(20):
            f = random_real_series(rng)
            g = random_real_series(rng)
            assert f.is_real_symmetric()
            assert (f + g).is_real_symmetric()
            assert f.multiply(g, cutoff="sum").is_real_symmetric()
            assert f.derive("theta", 0).is_real_symmetric()
            assert f.derive("t").is_real_symmetric()


class TestCalculus:
    def test_dt_constant(self):
        f = FourierTaylorSeries.constant(3.0, 1, C)
        assert f.derive("t").is_zero()

    def test_single_mode_rule(self):
        f = FourierTaylorSeries.harmonic([2], 1, 1.0, 1, C)
        g = f.derive("theta", 0)
        assert g.coeffs[((2,), 1)][(0,)] == pytest.approx(2j)

    def test_cauchy_bound(self):
        # f = sum_{|k|<=10} e^{-|k|} e^{ik theta}: check the derivative estimate
        coeffs = {((k,), 0): {(0,): math.exp(-abs(k))} for k in range(-10, 11)}
        f = FourierTaylorSeries(1, C, 2, coeffs)
        s, delta = 1.0, 0.5
        lhs = f.derive("theta", 0).majorant_norm(s=s - delta, r=0.0)
        rhs = f.majorant_norm(s=s, r=0.0) / (math.e * delta)
        assert lhs <= rhs

    def test_degree_zero_action_derivative_rejected(self):
        f = FourierTaylorSeries.constant(1.0, 1, C, taylor_degree=0)
        with pytest.raises(DomainError):
            f.derive("action", 0)

    def test_t_integral_round_trip(self, rng):
        for _ in range(20):
            f = random_real_series(rng)
            # remove every l = 0 component to make the integral well defined
            cleaned = {m: p for m, p in f.coeffs.items() if m[1] != 0}
            g = f.with_coeffs(cleaned)
            gi = g.t_integral_from_zero()
            back = gi.derive("t")
            diff = back - g
            assert diff.majorant_norm(s=0.0, r=1.0) < 1e-12 * max(1.0, g.majorant_norm(s=0, r=1))


class TestSplitAndAverage:
    def test_split_trivial(self, rng):
        f = random_real_series(rng)
        low, high = f.split_by_cutoff(f.angle_cutoff)
        assert high.is_zero()
        assert low.to_record()["modes"] == f.to_record()["modes"]

    def test_split_partition(self):
        f = FourierTaylorSeries.constant(1.0, 1, C) + \
            FourierTaylorSeries.harmonic([5], 0, 1.0, 1, C)
        low, high = f.split_by_cutoff(2)
        assert set(low.coeffs) == {((0,), 0)}
        assert set(high.coeffs) == {((5,), 0)}

    def test_split_reconstructs(self, rng):
        for _ in range(10):
            f = random_real_series(rng)
            low, high = f.split_by_cutoff(3)
            diff = (low + high) - f
            assert diff.majorant_norm(s=0.5, r=1.0) == 0.0

    def test_tail_norm_pattern(self):
        # |f_hat(k,l)| = e^{-(|k|+|l|) s0}: tail majorant at s0/2 tracks
        # K^{d+1} e^{-K s0 / 2} within a stable constant
        s0 = 1.0
        coeffs = {}
        for k in range(-20, 21):
            for l in range(-20, 21):
                coeffs[((k,), l)] = {(0,): math.exp(-(abs(k) + abs(l)) * s0)}
        f = FourierTaylorSeries(1, C, 2, coeffs)
        ratios = []
        for K in (4, 6, 8, 10, 12):
            _, high = f.split_by_cutoff(K)
            tail = high.majorant_norm(s=s0 / 2, r=0.0)
            ratios.append(tail / (K ** 2 * math.exp(-K * s0 / 2)))
        assert max(ratios) / min(ratios) < 10.0

    def test_zero_mode_theta(self):
        f = FourierTaylorSeries.constant(3.0, 1, C) + \
            FourierTaylorSeries.cosine([1], 0, 1.0, 1, C)
        avg = f.zero_mode("theta")
        assert set(avg.coeffs) == {((0,), 0)}
        assert avg.coeffs[((0,), 0)][(0,)] == pytest.approx(3.0)

    def test_zero_mode_keeps_time(self):
        f = FourierTaylorSeries.cosine([0], 1, 1.0, 1, C)
        avg = f.zero_mode("theta")
        assert avg.to_record() == f.to_record()
        assert f.zero_mode("theta_t").is_zero()

    def test_zero_mode_mixed(self):
        f = FourierTaylorSeries.cosine([1], -1, 1.0, 1, C)
        assert f.zero_mode("theta_t").is_zero()
        assert f.zero_mode("theta").is_zero()


class TestStructure:
    def test_recenter_exact(self, rng):
        f = random_real_series(rng)
        g = f.recenter([1.9])
        pts_th = rng.uniform(0, 2 * np.pi, size=(1, 30))
        pts_t = rng.uniform(0, 2 * np.pi, size=30)
        pts_I = 1.5 + rng.uniform(-0.3, 0.3, size=(1, 30))
        np.testing.assert_allclose(g.evaluate(pts_th, pts_t, pts_I),
                                   f.evaluate(pts_th, pts_t, pts_I),
                                   rtol=1e-12, atol=1e-12)
        h = g.recenter(C)
        for m, p in f.coeffs.items():
            for a, c in p.items():
                assert h.coeffs[m][a] == pytest.approx(c, abs=1e-14)

    def test_mode_index_order(self):
        assert ModeIndex((2, -1), -3).order == 6

    def test_serialization_bit_exact(self, rng):
        for _ in range(10):
            f = random_real_series(rng)
            g = FourierTaylorSeries.from_json(f.to_json())
            assert g.to_record() == f.to_record()
            assert g.coeffs == f.coeffs  # exact float equality

    def test_add_center_mismatch(self):
        f = FourierTaylorSeries.constant(1.0, 1, C)
        g = FourierTaylorSeries.constant(1.0, 1, [2.0])
        with pytest.raises(CenterMismatch):
            f + g
