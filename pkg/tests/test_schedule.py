"""Iteration schedules: derived constants and ladder structure."""

import math
from dataclasses import replace

import pytest

from kamtori.diophantine import derive_params
from kamtori.errors import ScheduleError
from kamtori.schedule import make_schedule


P = derive_params(2.0, 1.0, 1, 1e-3, 1e-3)


class TestDerived:
    def test_mu3_value(self):
        sched = make_schedule(P, m0_override=4)
        assert sched.mu3 == (2.0 - 1.0) * 1e-3 / (10.0 * 13.0)
        assert sched.mu3 == pytest.approx(1e-4 / 13.0)

    def test_mu1_mu2(self):
        sched = make_schedule(P, m0_override=4)
        expected_mu1 = 1.0 * 1e-3 / (1000.0 * 4.0 * 4.0 * 13.0)
        assert sched.mu1 == pytest.approx(expected_mu1, rel=1e-15)
        assert sched.mu2 == 2.0 * sched.mu1

    def test_theoretical_m0_enormous(self):
        sched = make_schedule(P, m0_override=4)
        assert sched.m0 == 4
        assert sched.m0_theoretical == 10 + int(sched.E)
        # at these parameters the formula demands millions of steps
        assert sched.m0_theoretical > 1_000_000
        assert sched.constraint_report()["m0_overridden"]

    def test_invalid_regime_rejected(self):
        # forcing mu to zero collapses the exponent denominators
        bad = replace(P, mu=0.0, ell=2.0 * 2 * 13.0 / 1.0)
        with pytest.raises(ScheduleError):
            make_schedule(bad)
        with pytest.raises(ScheduleError):
            make_schedule(P, m0_override=0)


class TestLadders:
    def setup_method(self):
        self.sched = make_schedule(P, m0_override=4)

    def test_phase_boundary(self):
        # eps_{m0} = eps^B exactly, and the anchored ladder starts there
        assert self.sched.eps_seq(4) == P.eps ** P.B
        assert self.sched.eps_tilde(0) == P.eps ** P.B
        assert self.sched.eps_seq(5) == self.sched.eps_tilde(1)

    def test_geometric_continuation(self):
        e = self.sched.eps_seq(4)
        assert self.sched.eps_seq(5) == e ** (1.0 + self.sched.mu3)

    def test_monotone_positive(self):
        for j in range(10):
            assert 0 < self.sched.eps_seq(j + 1) < self.sched.eps_seq(j)
            assert 0 < self.sched.s_seq(j + 1) < self.sched.s_seq(j)
            assert 0 < self.sched.r_seq(j + 1) < self.sched.r_seq(j)
            assert self.sched.r_seq(j) < self.sched.s_seq(j)
            assert 0 < self.sched.r_tilde(j) < self.sched.s_tilde(j)

    def test_cutoff_formulas_exact(self):
        for j in (0, 3, 7):
            assert self.sched.K_seq(j) == \
                2.0 * P.B / self.sched.s_seq(j) * P.log_inv_eps
            assert self.sched.K_tilde(j) == \
                2.0 / self.sched.s_tilde(j) * math.log(1.0 / self.sched.eps_tilde(j))

    def test_s_from_eps(self):
        for j in range(6):
            assert self.sched.s_seq(j) == self.sched.eps_seq(j + 1) ** (1.0 / P.ell)

    def test_caps(self):
        assert self.sched.h_cap(0, 2.0) == 2.0
        assert self.sched.h_cap(3, 2.0) == 2.0 * (2 - 0.125)
        assert self.sched.M_cap(1, 1.5) == 1.5 * 1.5

    def test_echo_serializable(self):
        echo = self.sched.echo(6)
        assert len(echo["eps_j"]) == 6
        assert echo["constraints"]["phase_boundary_matches"]
