"""The normal-form machine: staged iteration toward an invariant torus.

Phase one runs m0 steps that eliminate angle dependence above the scheduled
cutoffs, pushing angle averages into a time-dependent part h(t, I).  A single
exact modal transform then removes the time dependence of h, merging its mean
into the integrable part.  The anchored phase iterates with space-time solves,
re-anchoring the action so the integrable frequency at the anchor stays fixed,
and absorbing one analytic piece of the original perturbation per step.

Every step assembles the transformed Hamiltonian explicitly: the homological
bracket cancels exactly in mode space, and everything else (quadratic
integrable remainder, action-variation of the frequency against the constant
divisor vector, derivative couplings, the high-mode tail, the next analytic
piece composed through the accumulated transform chain) is carried as series
arithmetic.  Transformed and original Hamiltonians therefore agree pointwise
up to composition and pruning tolerances, which a per-step random-grid check
verifies.

Scheduled norm inequalities are evaluated with a configurable slack and
reported per step; by default they warn rather than abort, because at
desk-scale eps the scheduled sizes are far outside the regime where the
constants mean anything.  Convergence is judged by residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .diophantine import DioParams, FrequencyMap, check_high, check_low
from .errors import (AnchorLost, DomainError, GridTooCoarse, NormBlowup,
                     ScheduleError, SmallDivisorViolation)
from .schedule import ScheduleParams, make_schedule
from .series import (Domain, FourierTaylorSeries, action_gradient,
                     action_hessian)
from .smoothing import DecompositionSchedule, SmoothingKernel, decompose
from .transforms import (AveragingTransform, GeneratingFunction,
                         SymplecticStep, compose_angle_action,
                         invert_generating, solve_homological)

_GAUSS5 = np.polynomial.legendre.leggauss(5)


@dataclass
class EngineConfig:
    """Tolerances and run controls; defaults suit the desk-scale test problems."""

    m0_override: int | None = None
    max_main_steps: int = 12
    min_main_steps: int = 3
    target_norm: float = 1e-13
    slack: float = 10.0
    enforce_norms: bool = False
    verify_steps: bool = True
    verify_points: int = 50
    composition_rtol: float = 1e-9
    divisor_safety: float = 1.0
    fixed_point_tol: float = 1e-14
    compose_tol: float = 1e-14
    prune_rel: float = 1e-14
    kernel_a1: float = 1.0
    kernel_plateau: float = 0.5
    max_pieces: int = 64
    torus_grid: tuple = (64, 64)
    anchor_tol: float = 1e-13
    anchor_trust: float = 0.5
    taylor_degree: int = 2
    dio_k_max: int | None = None
    seed: int = 0


@dataclass
class HamiltonianState:
    """Snapshot of the Hamiltonian at one step of the iteration.

    Total Hamiltonian represented:

        H = H0_part(I)/eps^a + h_part(t,I)/eps^b
            + p_scale * P_part(theta,t,I)/eps^b
            + sum_nu P_nu(chain(theta,t,I))/eps^b

    where `chain` maps current coordinates back to the original ones and the
    tail pieces P_nu are stored uncomposed.
    """

    phase: str                      # 'pre' | 'averaged' | 'main'
    p: DioParams
    H0_part: FourierTaylorSeries
    h_part: FourierTaylorSeries | None
    P_part: FourierTaylorSeries
    p_scale: float
    tails: dict
    dom: Domain
    step_index: int
    main_index: int
    anchor: np.ndarray | None
    omega_target: np.ndarray
    chain: tuple
    caps: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.H0_part.d

    def chain_map(self, theta, t, action):
        """Current coordinates -> original coordinates (pointwise)."""
        th = np.asarray(theta, dtype=complex).reshape(self.d, -1)
        n = th.shape[1]
        tv = np.broadcast_to(np.asarray(t, dtype=complex).reshape(-1), (n,))
        act = np.broadcast_to(np.asarray(action, dtype=complex).reshape(self.d, -1),
                              (self.d, n)).copy()
        th = th.copy()
        for T in reversed(self.chain):
            th, act = T.forward(th, tv, act)
        return th, act

    def eval_hamiltonian(self, theta, t, action) -> np.ndarray:
        p = self.p
        th = np.asarray(theta, dtype=complex).reshape(self.d, -1)
        n = th.shape[1]
        tv = np.broadcast_to(np.asarray(t, dtype=complex).reshape(-1), (n,))
        act = np.broadcast_to(np.asarray(action, dtype=complex).reshape(self.d, -1),
                              (self.d, n))
        val = self.H0_part.evaluate(th, tv, act) * p.eps ** (-p.a)
        inv_b = p.eps ** (-p.b)
        if self.h_part is not None and not self.h_part.is_zero():
            val = val + self.h_part.evaluate(th, tv, act) * inv_b
        if not self.P_part.is_zero():
            val = val + self.P_part.evaluate(th, tv, act) * (self.p_scale * inv_b)
        if self.tails:
            th0, act0 = self.chain_map(th, tv, act)
            for piece in self.tails.values():
                val = val + piece.evaluate(th0, tv, act0) * inv_b
        return val


@dataclass
class StepReport:
    phase: str
    index: int
    p_norm_before: float
    p_norm_after: float
    scheduled_eps: float
    h_norm: float
    deriv_bound: float
    min_divisor: float
    homological_residual: float
    composition_defect: float | None
    anchor: list | None
    anchor_move: float
    norm_checks: dict
    domain: tuple

    def as_dict(self) -> dict:
        return {
            "phase": self.phase,
            "index": self.index,
            "p_norm_before": self.p_norm_before,
            "p_norm_after": self.p_norm_after,
            "scheduled_eps": self.scheduled_eps,
            "h_norm": self.h_norm,
            "deriv_bound": self.deriv_bound,
            "min_divisor": self.min_divisor,
            "homological_residual": self.homological_residual,
            "composition_defect": self.composition_defect,
            "anchor": self.anchor,
            "anchor_move": self.anchor_move,
            "norm_checks": self.norm_checks,
            "domain": list(self.domain),
        }


@dataclass
class TorusResult:
    anchor_limit: np.ndarray
    omega_internal: np.ndarray
    phi_grid: np.ndarray
    t_grid: np.ndarray
    theta_embedding: np.ndarray      # shape (d, n_phi, n_t)
    action_embedding: np.ndarray     # shape (d, n_phi, n_t)
    invariance_residual: float
    transform_deviation: float
    deviation_bound: float
    decay_log: list
    diophantine: dict
    schedule_echo: dict
    warnings: list


# ---------------------------------------------------------------------------
# shared step machinery
# ---------------------------------------------------------------------------

def _gauss_integral_quadratic(hess_polys, w_list, dom, tol):
    """int_0^1 (1 - tau) <Hess(rho + tau W) W, W> dtau, exact for polynomials."""
    d = len(w_list)
    nodes, weights = _GAUSS5
    taus = 0.5 * (nodes + 1.0)
    wts = 0.5 * weights
    acc = None
    for tau, wt in zip(taus, wts):
        shift = [w * tau for w in w_list]
        for i in range(d):
            for j in range(d):
                hij = hess_polys[i][j]
                if hij.is_zero():
                    continue
                hshift = compose_angle_action(hij, v=None, u=shift, dom=dom, tol=tol)
                term = hshift.multiply(w_list[i], cutoff="sum") \
                    .multiply(w_list[j], cutoff="sum") * (wt * (1.0 - tau))
                acc = term if acc is None else acc + term
    return acc if acc is not None else w_list[0].zero_like()


def _gauss_integral_gradient(g: FourierTaylorSeries, w_list, dom, tol):
    """int_0^1 <g_I(theta, t, rho + tau W), W> dtau, exact for polynomials."""
    d = len(w_list)
    nodes, weights = _GAUSS5
    taus = 0.5 * (nodes + 1.0)
    wts = 0.5 * weights
    acc = None
    grads = [g.derive("action", j) if g.taylor_degree >= 1 else None for j in range(d)]
    for tau, wt in zip(taus, wts):
        shift = [w * tau for w in w_list]
        for j in range(d):
            if grads[j] is None or grads[j].is_zero():
                continue
            gshift = compose_angle_action(grads[j], v=None, u=shift, dom=dom, tol=tol)
            term = gshift.multiply(w_list[j], cutoff="sum") * wt
            acc = term if acc is None else acc + term
    return acc if acc is not None else w_list[0].zero_like()


def _frequency_variation(H0: FourierTaylorSeries, omega_used, w_list, dom):
    """<grad H0(rho) - omega_used, W> as a series (books the constant-divisor solve)."""
    acc = None
    for j in range(len(w_list)):
        grad_j = H0.derive("action", j) - FourierTaylorSeries.constant(
            omega_used[j], H0.d, H0.center, H0.taylor_degree)
        if grad_j.is_zero() or w_list[j].is_zero():
            continue
        term = grad_j.multiply(w_list[j], cutoff="sum")
        acc = term if acc is None else acc + term
    if acc is None:
        return w_list[0].zero_like()
    return acc


def _norm_check(checks: dict, check_id: str, observed: float, allowed: float,
                enforce: bool, where: str):
    checks[check_id] = {"observed": observed, "allowed": allowed,
                        "holds": bool(observed <= allowed)}
    if enforce and observed > allowed:
        raise NormBlowup(check_id, observed, allowed, where)


def _sample_real_points(dom: Domain, n: int, rng) -> tuple:
    d = dom.d
    phi = rng.uniform(0.0, 2.0 * math.pi, size=(d, n))
    t = rng.uniform(0.0, 2.0 * math.pi, size=n)
    r_eff = dom.r / math.sqrt(d)
    act = dom.center_array()[:, None] + rng.uniform(-r_eff, r_eff, size=(d, n))
    return phi, t, act


def composition_check(state_before: HamiltonianState, transform,
                      S_t: FourierTaylorSeries | None,
                      state_after: HamiltonianState,
                      n_points: int, rng) -> float:
    """Max relative defect of H_before(forward(z)) + S_t versus H_after(z)."""
    phi, t, act = _sample_real_points(state_after.dom, n_points, rng)
    theta_old, act_old = transform.forward(phi, t, act)
    before = state_before.eval_hamiltonian(theta_old, t, act_old)
    if S_t is not None and not S_t.is_zero():
        before = before + S_t.evaluate(theta_old, t, act)
    after = state_after.eval_hamiltonian(phi, t, act)
    return float(np.max(np.abs(after - before) / (1.0 + np.abs(before))))


def _absorb_tail(state: HamiltonianState, nu: int, chain: tuple, dom: Domain,
                 tol: float) -> FourierTaylorSeries | None:
    piece = state.tails.get(nu)
    if piece is None:
        return None
    g = piece
    for T in chain:
        g = T.compose_into(g, dom, tol=tol)
    return g.recenter(dom.center_array())


# ---------------------------------------------------------------------------
# phase-one step
# ---------------------------------------------------------------------------

def pre_step(state: HamiltonianState, sched: ScheduleParams,
             cfg: EngineConfig, rng=None) -> tuple:
    """One angle-averaging step of phase one; returns (new_state, report)."""
    if state.phase != "pre":
        raise DomainError(f"pre_step requires phase 'pre', got {state.phase!r}")
    p = state.p
    m = state.step_index
    eps_m, eps_next = sched.eps_seq(m), sched.eps_seq(m + 1)
    K_m = int(sched.K_seq(m))
    dom_next = Domain(sched.s_seq(m + 1), sched.r_seq(m + 1), state.dom.center)

    P = state.P_part
    p_norm_before = P.majorant_norm(state.dom) * state.p_scale
    low, high = P.split_by_cutoff(K_m)
    theta_avg = low.zero_mode("theta")
    P1c = low - theta_avg
    h_new = (state.h_part + theta_avg * eps_m) if state.h_part is not None \
        else theta_avg * eps_m

    scale_num = eps_m / p.eps ** p.b
    if P1c.is_zero():
        gf = None
        step = SymplecticStep.identity(state.d, dom_next, P.taylor_degree)
    else:
        gf = solve_homological(P1c, state.omega_target, p, scale_num,
                               mode="theta_only", safety=cfg.divisor_safety)
        step = invert_generating(gf, dom_next, tol=cfg.fixed_point_tol)

    # remainder, in units of eps^b * (H-contribution)
    eps_b = p.eps ** p.b
    eps_ab = p.eps ** (p.b - p.a)
    A = high * eps_m
    if gf is not None:
        W = [gf.S.derive("theta", j) for j in range(state.d)]
        hess = [[state.H0_part.derive("action", i).derive("action", j)
                 for j in range(state.d)] for i in range(state.d)]
        R_a = _gauss_integral_quadratic(hess, W, dom_next, cfg.compose_tol) * eps_ab
        R_w = _frequency_variation(state.H0_part, gf.omega, W, dom_next) * eps_ab
        A = A + R_a + R_w
        if state.h_part is not None and not state.h_part.is_zero():
            A = A + _gauss_integral_gradient(state.h_part, W, dom_next, cfg.compose_tol)
        if not P.is_zero():
            A = A + _gauss_integral_gradient(P, W, dom_next, cfg.compose_tol) * eps_m
        A = step.compose_angle_only(A, dom_next, tol=cfg.compose_tol)

    chain_new = state.chain + (step,)
    tails_new = dict(state.tails)
    absorbed = _absorb_tail(state, m + 1, chain_new, dom_next, cfg.compose_tol)
    if absorbed is not None:
        A = A + absorbed
        tails_new.pop(m + 1)

    P_new = (A * (1.0 / eps_next)).real_part_series()
    P_new = P_new.pruned(cfg.prune_rel * max(P_new.coeff_norm(dom_next.s), 1e-300),
                         s=dom_next.s)

    new_state = replace(state, h_part=h_new, P_part=P_new, p_scale=eps_next,
                        dom=dom_next, step_index=m + 1, tails=tails_new,
                        chain=chain_new)

    checks: dict = {}
    where = f"pre step {m}"
    _norm_check(checks, "h-part-bound", h_new.majorant_norm(dom_next),
                cfg.slack, cfg.enforce_norms, where)
    _norm_check(checks, "perturbation-bound", P_new.majorant_norm(dom_next),
                cfg.slack, cfg.enforce_norms, where)
    _norm_check(checks, "tail-cutoff-bound",
                high.majorant_norm(dom_next) * eps_m,
                cfg.slack * eps_next, cfg.enforce_norms, where)
    _norm_check(checks, "transform-derivative-bound", step.deriv_bound,
                0.5 ** (m + 2), cfg.enforce_norms, where)

    defect = None
    if cfg.verify_steps:
        rng = rng if rng is not None else np.random.Generator(np.random.Philox(cfg.seed))
        S_t = gf.S.derive("t") if gf is not None else None
        defect = composition_check(state, step, S_t, new_state,
                                   cfg.verify_points, rng)
        if defect > cfg.composition_rtol:
            raise NormBlowup("composition-exactness", defect,
                             cfg.composition_rtol, where)

    report = StepReport(
        phase="pre", index=m,
        p_norm_before=p_norm_before,
        p_norm_after=P_new.majorant_norm(dom_next) * eps_next,
        scheduled_eps=eps_next,
        h_norm=h_new.majorant_norm(dom_next),
        deriv_bound=step.deriv_bound,
        min_divisor=(gf.min_divisor if gf else math.inf),
        homological_residual=(gf.residual_majorant if gf else 0.0),
        composition_defect=defect,
        anchor=None, anchor_move=0.0, norm_checks=checks,
        domain=(dom_next.s, dom_next.r),
    )
    return new_state, report


# ---------------------------------------------------------------------------
# time-averaging transform and entry into the anchored phase
# ---------------------------------------------------------------------------

def average_transform(state: HamiltonianState, sched: ScheduleParams,
                      cfg: EngineConfig, rng=None) -> tuple:
    """Remove the time dependence of the averaged part; anchor and enter main phase."""
    if state.phase != "pre":
        raise DomainError("average_transform expects the end of phase one")
    if state.step_index != sched.m0:
        raise DomainError(
            f"average_transform requires step m0={sched.m0}, got {state.step_index}"
        )
    p = state.p
    d = state.d
    h = state.h_part if state.h_part is not None else state.P_part.zero_like()
    h_mean = h.zero_mode("theta_t")               # [h](I)
    osc = h - h_mean                              # zero t-mean
    eps_b = p.eps ** p.b
    if osc.is_zero():
        S_int = h.zero_like()
        shift = tuple(h.zero_like() for _ in range(d))
    else:
        S_int = osc.t_integral_from_zero() * (-1.0 / eps_b)
        shift = tuple(S_int.derive("action", j) if S_int.taylor_degree >= 1
                      else h.zero_like() for j in range(d))
    psi = AveragingTransform(S_int=S_int, shift=shift, domain=state.dom)

    # transformed averaged part must be t-independent: h + eps^b * dS/dt - [h] = 0
    resid = (h + S_int.derive("t") * eps_b - h_mean)
    t_mode_resid = resid.majorant_norm(s=0.0, r=state.dom.r)
    if t_mode_resid > 1e-12 * max(1.0, h.majorant_norm(state.dom)):
        raise NormBlowup("averaging-t-modes", t_mode_resid, 1e-12, "averaging")

    H0_new = state.H0_part + h_mean * (p.eps ** (p.a - p.b))
    P_breve = psi.compose_into(state.P_part, state.dom, tol=cfg.compose_tol)
    P_tilde = (P_breve * state.p_scale).real_part_series()

    # anchor the frequency of the merged integrable part
    anchor, iterates = anchor_frequency(H0_new, state.omega_target,
                                        np.asarray(state.dom.center),
                                        trust_radius=cfg.anchor_trust,
                                        tol=cfg.anchor_tol)
    dom_main = Domain(sched.s_tilde(0), sched.r_tilde(0), tuple(anchor))
    H0_main = H0_new.recenter(anchor)
    P_main = P_tilde.recenter(anchor)
    P_main = P_main.pruned(cfg.prune_rel * max(P_main.coeff_norm(dom_main.s), 1e-300),
                           s=dom_main.s)

    hess = action_hessian(H0_main, anchor)
    det = abs(float(np.linalg.det(np.atleast_2d(hess))))
    caps = {"M0": max(det, 1.0 / det), "h0": float(np.max(np.abs(hess)))}

    mid_state = replace(state, phase="main", H0_part=H0_main, h_part=None,
                        P_part=P_main, p_scale=1.0, dom=dom_main,
                        main_index=0, anchor=np.asarray(anchor, dtype=float),
                        chain=state.chain + (psi,), caps=caps)

    checks: dict = {}
    _norm_check(checks, "averaged-t-modes", t_mode_resid, 1e-12, True, "averaging")
    _norm_check(checks, "main-entry-perturbation",
                P_main.majorant_norm(dom_main), cfg.slack * sched.eps_tilde(0),
                cfg.enforce_norms, "averaging")

    defect = None
    if cfg.verify_steps:
        rng = rng if rng is not None else np.random.Generator(np.random.Philox(cfg.seed))
        S_t = S_int.derive("t")
        defect = composition_check(state, psi, S_t, mid_state,
                                   cfg.verify_points, rng)
        if defect > cfg.composition_rtol:
            raise NormBlowup("composition-exactness", defect,
                             cfg.composition_rtol, "averaging")

    report = StepReport(
        phase="averaged", index=state.step_index,
        p_norm_before=state.P_part.majorant_norm(state.dom) * state.p_scale,
        p_norm_after=P_main.majorant_norm(dom_main),
        scheduled_eps=sched.eps_tilde(0),
        h_norm=h_mean.majorant_norm(s=0.0, r=dom_main.r),
        deriv_bound=0.0, min_divisor=math.inf, homological_residual=0.0,
        composition_defect=defect,
        anchor=[float(x) for x in anchor],
        anchor_move=float(np.max(np.abs(anchor - state.dom.center_array()))),
        norm_checks=checks, domain=(dom_main.s, dom_main.r),
    )
    return mid_state, report


def anchor_frequency(H0_part: FourierTaylorSeries, omega_target, start,
                     trust_radius: float, tol: float = 1e-13,
                     max_iter: int = 60) -> tuple:
    """Newton-solve grad H0(I) = omega_target from ``start``.

    Returns (anchor, iterates).  Raises AnchorLost when the iteration leaves
    the trust ball or stalls.
    """
    omega_target = np.atleast_1d(np.asarray(omega_target, dtype=float))
    I = np.atleast_1d(np.asarray(start, dtype=float)).copy()
    start_arr = I.copy()
    iterates = [I.copy()]
    for _ in range(max_iter):
        g = np.atleast_1d(action_gradient(H0_part, I)).real - omega_target
        if float(np.max(np.abs(g))) <= tol:
            return I, iterates
        H = np.atleast_2d(action_hessian(H0_part, I)).real
        try:
            delta = np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise AnchorLost(f"singular Hessian during anchoring: {exc}") from exc
        I = I - delta
        if float(np.max(np.abs(I - start_arr))) > trust_radius:
            raise AnchorLost(
                f"anchor iterate left the trust ball of radius {trust_radius}"
            )
        iterates.append(I.copy())
    raise AnchorLost("frequency anchoring did not converge")


# ---------------------------------------------------------------------------
# anchored-phase step
# ---------------------------------------------------------------------------

def main_step(state: HamiltonianState, sched: ScheduleParams,
              cfg: EngineConfig, rng=None) -> tuple:
    """One anchored space-time step; returns (new_state, report)."""
    if state.phase != "main":
        raise DomainError(f"main_step requires phase 'main', got {state.phase!r}")
    p = state.p
    mt = state.main_index
    K_m = int(sched.K_tilde(mt))
    dom_next_pre = Domain(sched.s_tilde(mt + 1), sched.r_tilde(mt + 1),
                          state.dom.center)

    P = state.P_part
    p_norm_before = P.majorant_norm(state.dom)
    low, high = P.split_by_cutoff(K_m)
    c00 = low.zero_mode("theta_t")
    P1c = low - c00

    eps_b = p.eps ** p.b
    scale_num = 1.0 / eps_b
    if P1c.is_zero():
        gf = None
        step = SymplecticStep.identity(state.d, dom_next_pre, P.taylor_degree)
    else:
        gf = solve_homological(P1c, state.omega_target, p, scale_num,
                               mode="theta_and_t", safety=cfg.divisor_safety)
        step = invert_generating(gf, dom_next_pre, tol=cfg.fixed_point_tol)

    eps_ab = p.eps ** (p.b - p.a)
    A = high
    if gf is not None:
        W = [gf.S.derive("theta", j) for j in range(state.d)]
        hess = [[state.H0_part.derive("action", i).derive("action", j)
                 for j in range(state.d)] for i in range(state.d)]
        R_a = _gauss_integral_quadratic(hess, W, dom_next_pre, cfg.compose_tol) * eps_ab
        R_w = _frequency_variation(state.H0_part, gf.omega, W, dom_next_pre) * eps_ab
        A = A + R_a + R_w
        if not P.is_zero():
            A = A + _gauss_integral_gradient(P, W, dom_next_pre, cfg.compose_tol)
        A = step.compose_angle_only(A, dom_next_pre, tol=cfg.compose_tol)

    H0_new = state.H0_part + c00 * (p.eps ** (p.a - p.b))

    chain_new = state.chain + (step,)
    tails_new = dict(state.tails)
    nu = sched.m0 + mt + 1
    absorbed = _absorb_tail(state, nu, chain_new, dom_next_pre, cfg.compose_tol)
    if absorbed is not None:
        A = A + absorbed
        tails_new.pop(nu)

    # re-anchor on the updated integrable part, then recenter everything
    anchor_new, _ = anchor_frequency(H0_new, state.omega_target, state.anchor,
                                     trust_radius=cfg.anchor_trust,
                                     tol=cfg.anchor_tol)
    anchor_move = float(np.max(np.abs(anchor_new - state.anchor)))
    dom_next = Domain(dom_next_pre.s, dom_next_pre.r, tuple(anchor_new))
    H0_next = H0_new.recenter(anchor_new)
    P_new = A.recenter(anchor_new).real_part_series()
    P_new = P_new.pruned(cfg.prune_rel * max(P_new.coeff_norm(dom_next.s), 1e-300),
                         s=dom_next.s)

    new_state = replace(state, H0_part=H0_next, P_part=P_new, dom=dom_next,
                        main_index=mt + 1, anchor=anchor_new, tails=tails_new,
                        chain=chain_new)

    checks: dict = {}
    where = f"main step {mt}"
    _norm_check(checks, "perturbation-bound", P_new.majorant_norm(dom_next),
                cfg.slack * sched.eps_tilde(mt + 1), cfg.enforce_norms, where)
    _norm_check(checks, "anchor-move-bound", anchor_move,
                sched.r_tilde(mt), cfg.enforce_norms, where)
    _norm_check(checks, "transform-derivative-bound", step.deriv_bound,
                0.5 ** (mt + 2), cfg.enforce_norms, where)
    hess_a = np.atleast_2d(action_hessian(H0_next, anchor_new)).real
    det = abs(float(np.linalg.det(hess_a)))
    _norm_check(checks, "hessian-det-cap", max(det, 1.0 / det),
                sched.M_cap(mt + 1, state.caps.get("M0", max(det, 1.0 / det))),
                cfg.enforce_norms, where)
    _norm_check(checks, "hessian-norm-cap", float(np.max(np.abs(hess_a))),
                sched.h_cap(mt + 1, state.caps.get("h0", float(np.max(np.abs(hess_a))))),
                cfg.enforce_norms, where)

    defect = None
    if cfg.verify_steps:
        rng = rng if rng is not None else np.random.Generator(np.random.Philox(cfg.seed))
        S_t = gf.S.derive("t") if gf is not None else None
        defect = composition_check(state, step, S_t, new_state,
                                   cfg.verify_points, rng)
        if defect > cfg.composition_rtol:
            raise NormBlowup("composition-exactness", defect,
                             cfg.composition_rtol, where)

    report = StepReport(
        phase="main", index=mt,
        p_norm_before=p_norm_before,
        p_norm_after=P_new.majorant_norm(dom_next),
        scheduled_eps=sched.eps_tilde(mt + 1),
        h_norm=0.0,
        deriv_bound=step.deriv_bound,
        min_divisor=(gf.min_divisor if gf else math.inf),
        homological_residual=(gf.residual_majorant if gf else 0.0),
        composition_defect=defect,
        anchor=[float(x) for x in anchor_new], anchor_move=anchor_move,
        norm_checks=checks, domain=(dom_next.s, dom_next.r),
    )
    return new_state, report


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

def initial_state(H0: FourierTaylorSeries, P0: FourierTaylorSeries, tails: dict,
                  p: DioParams, sched: ScheduleParams, I0) -> HamiltonianState:
    I0 = np.atleast_1d(np.asarray(I0, dtype=float))
    dom0 = Domain(sched.s_seq(0), sched.r_seq(0), tuple(I0))
    omega_target = np.atleast_1d(action_gradient(H0, I0)).real
    return HamiltonianState(
        phase="pre", p=p, H0_part=H0, h_part=None, P_part=P0,
        p_scale=sched.eps_seq(0), tails=tails, dom=dom0, step_index=0,
        main_index=-1, anchor=None, omega_target=omega_target, chain=(),
    )


def run(H0: FourierTaylorSeries, P: FourierTaylorSeries, p: DioParams,
        cfg: EngineConfig, I0) -> TorusResult:
    """Full pipeline: decomposition, phase one, averaging, anchored iteration,
    then torus extraction and the invariance-residual diagnostic."""
    warnings: list = []
    sched = make_schedule(p, m0_override=cfg.m0_override)
    I0 = np.atleast_1d(np.asarray(I0, dtype=float))
    H0c = H0.recenter(I0)
    Pc = P.recenter(I0)
    fmap = FrequencyMap(H0c, box=[(lo, hi) for lo, hi in zip(I0 - 0.5, I0 + 0.5)])
    omega0 = fmap.omega(I0)
    k_max = cfg.dio_k_max or int(max(2 * math.ceil(p.cutoff), 100))
    dlow = check_low(omega0, p)
    dhigh = check_high(omega0, p, k_max=k_max)
    dio_report = {
        "omega0": [float(x) for x in omega0],
        "low": {"passed": dlow.passed, "worst_value": dlow.worst_value,
                "worst_bound": dlow.worst_bound, "k": list(dlow.worst_k),
                "l": dlow.worst_l},
        "high": {"passed": dhigh.passed, "worst_value": dhigh.worst_value,
                 "worst_bound": dhigh.worst_bound, "k": list(dhigh.worst_k),
                 "l": dhigh.worst_l, "k_max": k_max},
    }
    if not (dlow.passed and dhigh.passed):
        bad = dlow if not dlow.passed else dhigh
        raise SmallDivisorViolation(bad.worst_k, bad.worst_l, bad.worst_value,
                                    bad.worst_bound)

    # analytic decomposition of the perturbation along the scheduled widths
    kernel = SmoothingKernel(a1=cfg.kernel_a1, plateau=cfg.kernel_plateau)
    if Pc.is_zero():
        pieces = [Pc]
    else:
        max_xi = max(math.sqrt(sum(float(x) ** 2 for x in k) + float(l) ** 2)
                     for (k, l) in Pc.coeffs)
        depth = None
        for j in range(cfg.max_pieces):
            if 2.0 * sched.s_seq(j) * max_xi <= kernel.plateau:
                depth = j + 1
                break
        if depth is None:
            raise ScheduleError(
                "perturbation modes too high for the scheduled widths within "
                f"{cfg.max_pieces} pieces"
            )
        widths = tuple(sched.s_seq(j) for j in range(depth))
        dsched = DecompositionSchedule(widths, target_ell=p.ell, strict=False)
        if widths[0] > 0.25:
            warnings.append(
                f"leading smoothing width {widths[0]:.3f} exceeds 1/4 "
                "(desk-scale eps); decomposition remains exact"
            )
        pieces = decompose(Pc, dsched, kernel)
    tails = {nu: piece for nu, piece in enumerate(pieces)
             if nu >= 1 and not piece.is_zero()}
    P0 = pieces[0] * (1.0 / sched.eps_seq(0))
    state = initial_state(H0c, P0, tails, p, sched, I0)

    rng = np.random.Generator(np.random.Philox(cfg.seed))
    decay_log: list = []
    for _ in range(sched.m0):
        state, rep = pre_step(state, sched, cfg, rng)
        decay_log.append(rep.as_dict())
    state, rep = average_transform(state, sched, cfg, rng)
    decay_log.append(rep.as_dict())

    mt = 0
    while mt < cfg.max_main_steps:
        pending = any(nu >= sched.m0 + state.main_index + 1 for nu in state.tails)
        p_norm = state.P_part.coeff_norm(state.dom.s)
        if mt >= cfg.min_main_steps and not pending and p_norm <= cfg.target_norm:
            break
        state, rep = main_step(state, sched, cfg, rng)
        decay_log.append(rep.as_dict())
        mt += 1
    if state.tails:
        warnings.append(f"{len(state.tails)} analytic pieces not yet absorbed "
                        "when the step budget ran out")

    # torus embedding through the accumulated chain
    n_phi, n_t = cfg.torus_grid
    phi_grid = np.linspace(0.0, 2.0 * math.pi, n_phi, endpoint=False)
    t_grid = np.linspace(0.0, 2.0 * math.pi, n_t, endpoint=False)
    if state.d != 1:
        raise DomainError("torus extraction currently renders d = 1 grids")
    PH, TT = np.meshgrid(phi_grid, t_grid, indexing="ij")
    anchor = state.anchor
    th, act = state.chain_map(PH.reshape(1, -1), TT.reshape(-1),
                              np.broadcast_to(anchor[:, None], (1, PH.size)))
    theta_emb = th.reshape(1, n_phi, n_t).real
    act_emb = act.reshape(1, n_phi, n_t).real
    deviation = float(max(np.max(np.abs(theta_emb[0] - PH)),
                          np.max(np.abs(act_emb[0] - anchor[0]))))
    dev_bound = sched.eps_tilde(0) ** (1.0 / (2.0 * p.ell))

    omega_internal = np.atleast_1d(
        action_gradient(state.H0_part, anchor)).real * p.eps ** (-p.a)
    torus = TorusResult(
        anchor_limit=anchor, omega_internal=omega_internal,
        phi_grid=phi_grid, t_grid=t_grid,
        theta_embedding=theta_emb, action_embedding=act_emb,
        invariance_residual=math.nan, transform_deviation=deviation,
        deviation_bound=dev_bound, decay_log=decay_log,
        diophantine=dio_report, schedule_echo=sched.echo(), warnings=warnings,
    )
    torus.invariance_residual = invariance_residual(torus, H0c, Pc, p)
    return torus


def invariance_residual(torus: TorusResult, H0: FourierTaylorSeries,
                        P: FourierTaylorSeries, p: DioParams,
                        nyquist_tol: float = 1e-6) -> float:
    """Max-norm defect of the embedded torus against the original vector field.

    Evaluates (Omega d_phi + d_t) K - X_H(K) on the sampling grid using
    spectral differentiation of the embedding.
    """
    n_phi, n_t = torus.theta_embedding.shape[1:]
    PH, _TT = np.meshgrid(torus.phi_grid, torus.t_grid, indexing="ij")
    theta_p = torus.theta_embedding[0] - PH          # periodic part
    act = torus.action_embedding[0]
    omega_int = float(torus.omega_internal[0])

    def spectral_grad(F):
        kx = np.fft.fftfreq(n_phi) * n_phi
        kt = np.fft.fftfreq(n_t) * n_t
        Fh = np.fft.fft2(F)
        # Nyquist content check
        total = np.sum(np.abs(Fh))
        if total > 0:
            hi = (np.abs(kx[:, None]) >= n_phi // 2 - 1) | \
                 (np.abs(kt[None, :]) >= n_t // 2 - 1)
            if np.sum(np.abs(Fh[hi])) > nyquist_tol * total:
                raise GridTooCoarse(
                    "embedding grid too coarse for spectral differentiation"
                )
        dphi = np.real(np.fft.ifft2(1j * kx[:, None] * Fh))
        dt = np.real(np.fft.ifft2(1j * kt[None, :] * Fh))
        return dphi, dt

    th_phi, th_t = spectral_grad(theta_p)
    a_phi, a_t = spectral_grad(act - np.mean(act))

    theta_flat = torus.theta_embedding.reshape(1, -1)
    t_flat = np.broadcast_to(torus.t_grid[None, :], (n_phi, n_t)).reshape(-1)
    act_flat = act.reshape(1, -1)
    inv_a = p.eps ** (-p.a)
    inv_b = p.eps ** (-p.b)
    H_I = (H0.derive("action", 0).evaluate(theta_flat, t_flat, act_flat) * inv_a
           + (P.derive("action", 0).evaluate(theta_flat, t_flat, act_flat) * inv_b
              if P.taylor_degree >= 1 and not P.is_zero() else 0.0))
    H_th = (P.derive("theta", 0).evaluate(theta_flat, t_flat, act_flat) * inv_b
            if not P.is_zero() else np.zeros(theta_flat.shape[1]))

    defect_theta = omega_int * (1.0 + th_phi) + th_t - H_I.real.reshape(n_phi, n_t)
    defect_act = omega_int * a_phi + a_t + np.asarray(H_th).real.reshape(n_phi, n_t)
    return float(max(np.max(np.abs(defect_theta)), np.max(np.abs(defect_act))))
