"""Normal-form steps: pre, averaging, anchoring, main, and the full run."""

import math
from dataclasses import replace

import numpy as np
import pytest

from kamtori.diophantine import derive_params
from kamtori.engine import (EngineConfig, anchor_frequency, average_transform,
                            composition_check, initial_state, invariance_residual,
                            main_step, pre_step, run)
from kamtori.errors import AnchorLost, DomainError
from kamtori.schedule import make_schedule
from kamtori.series import Domain, FourierTaylorSeries
from kamtori.transforms import fd_jacobian, symplectic_defect

GOLDEN_FRAC = (math.sqrt(5.0) - 1.0) / 2.0
EPS = 0.01
P_DIO = derive_params(2.0, 1.0, 1, 1e-3, EPS)
I0 = (12000 + GOLDEN_FRAC) * EPS ** 2
CFG = EngineConfig(m0_override=3, max_main_steps=10, seed=11, kernel_plateau=0.9)


def quadratic_H0(center=I0, degree=2):
    return FourierTaylorSeries.from_absolute_polynomial({(2,): 0.5}, 1, [center],
                                                        taylor_degree=degree)


def toy_state(P_series=None, tails=None, degree=2):
    sched = make_schedule(P_DIO, m0_override=3)
    H0 = quadratic_H0(degree=degree)
    P = P_series if P_series is not None else \
        FourierTaylorSeries.cosine([1], -1, 1e-3, 1, [I0], taylor_degree=degree)
    return initial_state(H0, P, tails or {}, P_DIO, sched, [I0]), sched


class TestPreStep:
    def test_zero_perturbation_trivial(self):
        state, sched = toy_state(FourierTaylorSeries.zero(1, [I0]),
                                 tails={1: FourierTaylorSeries.cosine([1], -1, 1e-5, 1, [I0])})
        new_state, rep = pre_step(state, sched, CFG)
        assert new_state.h_part.is_zero()
        assert new_state.chain[-1].is_identity()
        # the new perturbation comes from the absorbed analytic piece alone
        expected = 1e-5 / sched.eps_seq(1)
        assert new_state.P_part.coeff_norm() == pytest.approx(expected, rel=1e-12)

    def test_composition_exactness(self, rng):
        state, sched = toy_state()
        new_state, rep = pre_step(state, sched, CFG)
        assert rep.composition_defect is not None
        assert rep.composition_defect <= 1e-9
        assert rep.homological_residual <= 1e-12

    def test_angle_average_absorbed(self):
        P = FourierTaylorSeries.cosine([1], -1, 1e-3, 1, [I0]) + \
            FourierTaylorSeries.cosine([0], 1, 2e-4, 1, [I0])
        state, sched = toy_state(P)
        new_state, rep = pre_step(state, sched, CFG)
        # the k = 0 mode moved into the time-dependent average part
        assert ((0,), 1) in new_state.h_part.coeffs
        assert ((0,), 1) not in new_state.P_part.coeffs
        assert new_state.h_part.coeffs[((0,), 1)][(0,)] == pytest.approx(1e-4)

    def test_reality_preserved(self):
        state, sched = toy_state()
        new_state, _ = pre_step(state, sched, CFG)
        assert new_state.P_part.is_real_symmetric(1e-10)

    def test_wrong_phase_rejected(self):
        state, sched = toy_state()
        bad = replace(state, phase="main")
        with pytest.raises(DomainError):
            pre_step(bad, sched, CFG)


class TestAveraging:
    def _state_at_m0(self, with_time_dependence=True):
        state, sched = toy_state(FourierTaylorSeries.zero(1, [I0]))
        for _ in range(sched.m0):
            state, _ = pre_step(state, sched, CFG)
        if with_time_dependence:
            # install an averaged part c(I) cos t by hand: c quadratic in I
            h = FourierTaylorSeries(1, [I0], 2, {
                ((0,), 1): {(0,): 0.05, (1,): 0.01, (2,): 0.02},
                ((0,), -1): {(0,): 0.05, (1,): 0.01, (2,): 0.02},
            })
            state = replace(state, h_part=h)
        return state, sched

    def test_time_modes_removed(self):
        state, sched = self._state_at_m0()
        new_state, rep = average_transform(state, sched, CFG)
        assert rep.norm_checks["averaged-t-modes"]["holds"]
        assert new_state.h_part is None
        assert new_state.phase == "main"

    def test_integral_value(self):
        # h = c(I) cos t integrates to S = -(1/eps^b) c(I) sin t, so the
        # angle shift is -(1/eps^b) c'(I) sin t
        state, sched = self._state_at_m0()
        new_state, _ = average_transform(state, sched, CFG)
        psi = new_state.chain[-1]
        t = np.linspace(0, 2 * np.pi, 9)
        ph = np.zeros((1, 9))
        act = np.full((1, 9), I0 + 1e-13)
        got = psi.shift[0].evaluate(ph, t, act).real
        # two conjugate modes with coefficient c/2 each make amplitude c
        cprime = 2.0 * (0.01 + 2 * 0.02 * (act[0] - I0))
        expect = -(EPS ** -1.0) * cprime * np.sin(t)
        np.testing.assert_allclose(got, expect, atol=1e-10)

    def test_mean_merged_into_integrable_part(self):
        state, sched = self._state_at_m0()
        h_mean_free = state.h_part.zero_mode("theta_t")
        assert h_mean_free.is_zero()  # cos t has no mean: H0 unchanged
        H0_before = state.H0_part
        new_state, _ = average_transform(state, sched, CFG)
        diff = new_state.H0_part.recenter([I0]) - H0_before
        assert diff.coeff_norm() < 1e-15

    def test_jacobian_symplectic(self, rng):
        state, sched = self._state_at_m0()
        new_state, _ = average_transform(state, sched, CFG)
        psi = new_state.chain[-1]
        for _ in range(10):
            phi = rng.uniform(0, 2 * np.pi, size=1)
            t = rng.uniform(0, 2 * np.pi)
            rho = np.array([I0 + rng.uniform(-1e-6, 1e-6)])
            J = fd_jacobian(psi, phi, t, rho, h=1e-6)
            assert symplectic_defect(J) < 1e-9

    def test_composition_exactness(self):
        state, sched = self._state_at_m0()
        new_state, rep = average_transform(state, sched, CFG)
        assert rep.composition_defect <= 1e-9


class TestAnchor:
    def test_linear_gradient(self):
        H0 = quadratic_H0(center=1.0)
        anchor, its = anchor_frequency(H0, [1.3], [1.0], trust_radius=1.0)
        assert anchor[0] == pytest.approx(1.3, abs=1e-13)

    def test_cubic_root(self):
        # H0 = I^2/2 + 1e-6 I^3: gradient I + 3e-6 I^2 = 1.3
        H0 = FourierTaylorSeries.from_absolute_polynomial(
            {(2,): 0.5, (3,): 1e-6}, 1, [1.0], taylor_degree=3)
        anchor, _ = anchor_frequency(H0, [1.3], [1.0], trust_radius=1.0)
        # quadratic-formula oracle for 3e-6 I^2 + I - 1.3 = 0 (stable branch)
        aa, bb, cc = 3e-6, 1.0, -1.3
        root = -2.0 * cc / (bb + math.sqrt(bb * bb - 4 * aa * cc))
        assert anchor[0] == pytest.approx(root, rel=1e-13)

    def test_quadratic_convergence(self):
        # strong cubic term so several Newton steps are observable
        H0 = FourierTaylorSeries.from_absolute_polynomial(
            {(2,): 0.5, (3,): 0.25}, 1, [1.0], taylor_degree=3)
        target = 1.3 + 3 * 0.25 * 1.3 ** 2
        anchor, its = anchor_frequency(H0, [target], [0.3], trust_radius=5.0,
                                       tol=1e-14)
        errs = [abs(float(x[0]) - float(anchor[0])) for x in its]
        ratios = [errs[n + 1] / errs[n] ** 2 for n in range(len(errs) - 2)
                  if errs[n] > 1e-7]
        assert len(ratios) >= 3
        assert max(ratios) < 10.0
        from kamtori.series import action_gradient
        assert abs(action_gradient(H0, anchor)[0] - target) <= 1e-12

    def test_divergence_detected(self):
        H0 = quadratic_H0(center=1.0)
        with pytest.raises(AnchorLost):
            anchor_frequency(H0, [50.0], [1.0], trust_radius=0.1)


class TestMainStep:
    def _main_state(self):
        # three genuine pre-steps at fat radii need one extra Taylor degree
        # to keep the per-step composition identity at 1e-9
        state, sched = toy_state(degree=3)
        for _ in range(sched.m0):
            state, _ = pre_step(state, sched, CFG)
        state, _ = average_transform(state, sched, CFG)
        return state, sched

    def test_zero_perturbation_trivial(self):
        state, sched = toy_state(FourierTaylorSeries.zero(1, [I0]))
        for _ in range(sched.m0):
            state, _ = pre_step(state, sched, CFG)
        state, _ = average_transform(state, sched, CFG)
        anchor_before = state.anchor.copy()
        new_state, rep = main_step(state, sched, CFG)
        assert new_state.chain[-1].is_identity()
        np.testing.assert_array_equal(new_state.anchor, anchor_before)
        assert new_state.P_part.is_zero()

    def test_energy_consistency_and_decay(self):
        state, sched = self._main_state()
        norms = [state.P_part.coeff_norm()]
        for _ in range(3):
            state, rep = main_step(state, sched, CFG)
            assert rep.composition_defect <= 1e-9
            norms.append(state.P_part.coeff_norm())
        # strong contraction once every analytic piece is in
        assert norms[-1] < 1e-3 * norms[0]

    def test_anchor_never_leaves_trust(self):
        state, sched = self._main_state()
        for _ in range(3):
            state, rep = main_step(state, sched, CFG)
            assert rep.anchor_move <= CFG.anchor_trust


class TestRun:
    def test_integrable_case_exact(self):
        H0 = quadratic_H0()
        P = FourierTaylorSeries.zero(1, [I0])
        torus = run(H0, P, P_DIO, CFG, [I0])
        assert torus.invariance_residual == 0.0
        assert torus.transform_deviation == 0.0

    def test_toy_convergence(self):
        H0 = quadratic_H0()
        P = FourierTaylorSeries.cosine([1], -1, 1e-3, 1, [I0])
        torus = run(H0, P, P_DIO, CFG, [I0])
        assert torus.invariance_residual <= 1e-6
        norms = [rep["p_norm_after"] for rep in torus.decay_log
                 if rep["p_norm_after"] > 0]
        assert max(norms) / norms[-1] >= 1e3
        assert torus.transform_deviation <= torus.deviation_bound

    def test_perturbed_torus_residual_linear(self):
        H0 = quadratic_H0()
        P = FourierTaylorSeries.cosine([1], -1, 1e-3, 1, [I0])
        torus = run(H0, P, P_DIO, CFG, [I0])
        base = torus.invariance_residual
        responses = []
        for delta in (1e-4, 2e-4):
            shifted = replace(torus, action_embedding=torus.action_embedding + delta)
            responses.append(invariance_residual(
                shifted, quadratic_H0(), P.recenter([I0]), P_DIO) - base)
        # residual responds linearly at small amplitude: doubling the injected
        # defect roughly doubles the response
        assert responses[1] == pytest.approx(2 * responses[0], rel=0.05)

    def test_diophantine_gate(self):
        from kamtori.errors import SmallDivisorViolation
        H0 = quadratic_H0(center=1.0)
        P = FourierTaylorSeries.zero(1, [1.0])
        bad_I0 = (7.0 / 3.0) * EPS ** 2 + 1.0 - 1.0  # rational scaled frequency
        bad_I0 = (7.0 / 3.0) * EPS ** 2
        H0b = quadratic_H0(center=bad_I0)
        with pytest.raises(SmallDivisorViolation):
            run(H0b, FourierTaylorSeries.zero(1, [bad_I0]), P_DIO, CFG, [bad_I0])
