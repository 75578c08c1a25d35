"""Derived iteration constants and the full ladder of scheduled sequences.

Two ladders drive the normal form.  Phase one runs m0 steps with

    eps_j = eps^(j B / m0),  s_j = eps_{j+1}^(1/ell),
    r_j   = eps^((j+1)(tau1+1) B / (ell m0) + mu1 + B/ell),
    K_j   = (2 B / s_j) log(1/eps),

and continues geometrically with exponent 1 + mu3 beyond m0.  The anchored
phase uses the tilde ladder seeded at eps^B with the same geometric exponent,
together with the cap sequences h_j, M_j.

The theoretical m0 = 10 + floor(E) is astronomically large for any desk-scale
eps, so runs may override m0 (every formula stays self-consistent: the phase
boundary still lands on eps_{m0} = eps^B); the theoretical value is always
computed and reported.  Scheduled norm inequalities are therefore reported
per step rather than used as hard gates unless the run enforces them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .diophantine import DioParams
from .errors import ScheduleError


def _exponent_E(p: DioParams, mu1: float, mu2: float) -> float:
    a, b, B, ell = p.a, p.b, p.B, p.ell
    tau1, tau2 = p.tau1, p.tau2
    den1 = a - b - 2.0 * (tau1 + 2.0) * B / ell - 2.0 * mu1
    den2 = (B - 2.0 * a - 2.0 * (tau2 + 1.0) * b
            - 2.0 * (2.0 * tau1 + 5.0) * (tau2 + 1.0) * B / ell
            - 8.0 * mu1 * (tau2 + 1.0) - 2.0 * mu2)
    if den1 <= 0.0 or den2 <= 0.0:
        raise ScheduleError(
            "step-count exponent undefined: denominators "
            f"({den1:.3e}, {den2:.3e}) must be positive; parameter regime "
            "outside the iteration's validity"
        )
    E1 = 4.0 * B / den1
    E2 = 2.0 * (2.0 * tau1 + 3.0) * (tau2 + 1.0) * B / den2
    return max(E1, E2)


@dataclass
class ScheduleParams:
    """All scheduled sequences, lazily extended and memoized."""

    dio: DioParams
    mu1: float
    mu2: float
    mu3: float
    E: float
    m0_theoretical: int
    m0: int
    s_tilde0: float
    r_tilde0: float
    _eps: list = field(default_factory=list, repr=False)
    _r: list = field(default_factory=list, repr=False)
    _eps_t: list = field(default_factory=list, repr=False)
    _s_t: list = field(default_factory=list, repr=False)
    _r_t: list = field(default_factory=list, repr=False)

    # -- phase-one ladder ---------------------------------------------------

    def eps_seq(self, j: int) -> float:
        p = self.dio
        while len(self._eps) <= j:
            i = len(self._eps)
            if i <= self.m0:
                self._eps.append(p.eps ** (i * p.B / self.m0))
            else:
                self._eps.append(self._eps[-1] ** (1.0 + self.mu3))
        return self._eps[j]

    def s_seq(self, j: int) -> float:
        return self.eps_seq(j + 1) ** (1.0 / self.dio.ell)

    def r_seq(self, j: int) -> float:
        p = self.dio
        while len(self._r) <= j:
            i = len(self._r)
            if i <= self.m0:
                expo = ((i + 1) * (p.tau1 + 1.0) * p.B / (p.ell * self.m0)
                        + self.mu1 + p.B / p.ell)
                self._r.append(p.eps ** expo)
            else:
                self._r.append(self._r[-1] ** (1.0 + self.mu3))
        return self._r[j]

    def K_seq(self, j: int) -> float:
        p = self.dio
        return 2.0 * p.B / self.s_seq(j) * p.log_inv_eps

    # -- anchored-phase ladder ------------------------------------------------

    def eps_tilde(self, j: int) -> float:
        p = self.dio
        while len(self._eps_t) <= j:
            i = len(self._eps_t)
            if i == 0:
                self._eps_t.append(p.eps ** p.B)
            else:
                self._eps_t.append(self._eps_t[-1] ** (1.0 + self.mu3))
        return self._eps_t[j]

    def s_tilde(self, j: int) -> float:
        while len(self._s_t) <= j:
            i = len(self._s_t)
            self._s_t.append(self.s_tilde0 if i == 0
                             else self._s_t[-1] ** (1.0 + self.mu3))
        return self._s_t[j]

    def r_tilde(self, j: int) -> float:
        while len(self._r_t) <= j:
            i = len(self._r_t)
            self._r_t.append(self.r_tilde0 if i == 0
                             else self._r_t[-1] ** (1.0 + self.mu3))
        return self._r_t[j]

    def K_tilde(self, j: int) -> float:
        return 2.0 / self.s_tilde(j) * math.log(1.0 / self.eps_tilde(j))

    @staticmethod
    def h_cap(j: int, h0: float) -> float:
        return h0 * (2.0 - 0.5 ** j)

    @staticmethod
    def M_cap(j: int, M0: float) -> float:
        return M0 * (2.0 - 0.5 ** j)

    # -- diagnostics -----------------------------------------------------------

    def constraint_report(self, depth: int = 8) -> dict:
        """Which structural orderings hold on the leading part of the ladder."""
        pairs = range(depth)
        return {
            "m0_overridden": self.m0 != self.m0_theoretical,
            "s0_le_quarter": self.s_seq(0) <= 0.25,
            "eps_decreasing": all(self.eps_seq(j + 1) < self.eps_seq(j) for j in pairs),
            "s_decreasing": all(self.s_seq(j + 1) < self.s_seq(j) for j in pairs),
            "r_decreasing": all(self.r_seq(j + 1) < self.r_seq(j) for j in pairs),
            "r_lt_s": all(self.r_seq(j) < self.s_seq(j) for j in pairs),
            "tilde_r_lt_s": all(self.r_tilde(j) < self.s_tilde(j) for j in pairs),
            "phase_boundary_matches": self.eps_seq(self.m0) == self.eps_tilde(0),
        }

    def echo(self, depth: int = 8) -> dict:
        """Compact serializable view of the leading sequences."""
        idx = list(range(depth))
        return {
            "m0": self.m0,
            "m0_theoretical": self.m0_theoretical,
            "E": self.E,
            "mu1": self.mu1,
            "mu2": self.mu2,
            "mu3": self.mu3,
            "eps_j": [self.eps_seq(j) for j in idx],
            "s_j": [self.s_seq(j) for j in idx],
            "r_j": [self.r_seq(j) for j in idx],
            "K_j": [self.K_seq(j) for j in idx],
            "eps_tilde_j": [self.eps_tilde(j) for j in idx],
            "s_tilde_j": [self.s_tilde(j) for j in idx],
            "r_tilde_j": [self.r_tilde(j) for j in idx],
            "K_tilde_j": [self.K_tilde(j) for j in idx],
            "constraints": self.constraint_report(depth),
        }


def make_schedule(p: DioParams, m0_override: int | None = None) -> ScheduleParams:
    """Build the schedule; m0 follows the formula unless explicitly overridden."""
    B, ell = p.B, p.ell
    mu1 = (p.a - p.b) ** 2 * p.mu / (1000.0 * (p.a + p.b + 1.0) * (p.d + 3.0) * B)
    mu2 = 2.0 * mu1
    mu3 = (p.a - p.b) * p.mu / (10.0 * B)
    E = _exponent_E(p, mu1, mu2)
    m0_theory = 10 + int(math.floor(E))
    if m0_override is not None and m0_override < 1:
        raise ScheduleError("m0 override must be a positive integer")
    m0 = int(m0_override) if m0_override is not None else m0_theory
    s_t0 = p.eps ** (p.b + (m0 + 1) * (2.0 * p.tau1 + 3.0) * B / (ell * m0)
                     + 4.0 * mu1 + 2.0 * B / ell)
    r_t0 = p.eps ** (p.a + (p.tau2 + 1.0) * p.b
                     + (m0 + 1) * (2.0 * p.tau1 + 3.0) * (p.tau2 + 1.0) * B / (m0 * ell)
                     + 4.0 * mu1 * (p.tau2 + 1.0) + mu2
                     + 2.0 * B * (p.tau2 + 1.0) / ell)
    sched = ScheduleParams(dio=p, mu1=mu1, mu2=mu2, mu3=mu3, E=E,
                           m0_theoretical=m0_theory, m0=m0,
                           s_tilde0=s_t0, r_tilde0=r_t0)
    # structural sanity on the leading ladder
    rep = sched.constraint_report(4)
    for key in ("eps_decreasing", "s_decreasing", "r_decreasing", "r_lt_s"):
        if not rep[key]:
            raise ScheduleError(f"schedule ladder failed structural check {key!r}")
    return sched
