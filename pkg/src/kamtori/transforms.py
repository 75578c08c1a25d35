"""Generating-function solves, series composition, and symplectic step objects.

The homological solve assigns, mode by mode,

    S_hat(k, l) = scale * i * P_hat(k, l) / (<k, omega>/eps^a + l)

for the modes the phase eliminates, with a runtime floor on every divisor.
Because omega is held at a single real vector the solved equation is satisfied
exactly in mode space; the action-dependence of the true frequency is booked
explicitly into the step remainder by the engine.

Inverting the implicit change of variables

    I = rho + S_theta(theta, t, rho),  phi = theta + S_rho(theta, t, rho)

is a fixed-point iteration in series space for the angle correction
v = theta - phi, contracting once the second derivatives of S are below 1/2.
Compositions f(phi + v, t, rho + u) are Taylor expansions in the increments:
the action part terminates at the ambient polynomial degree, the angle part
converges geometrically for near-identity steps.  The time-averaging
transform shifts angles by a function of (t, I) only, so it composes exactly
through per-mode exponentials (scaling-and-squaring keeps that stable even
for shifts that are not small).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diophantine import DioParams
from .errors import DomainError, SmallDivisorViolation, StepTooLarge
from .series import Domain, FourierTaylorSeries, mode_order

_FACT = [math.factorial(n) for n in range(40)]


# ---------------------------------------------------------------------------
# composition helpers
# ---------------------------------------------------------------------------

def exp_series(g: FourierTaylorSeries, dom: Domain, tol: float = 1e-15,
               max_terms: int = 60, max_majorant: float = 60.0) -> FourierTaylorSeries:
    """exp(g) as a series, via scaling-and-squaring plus a Taylor tail.

    Refuses exponents whose majorant exceeds ``max_majorant``: the result
    would need unbounded spectral bandwidth.
    """
    m = g.majorant_norm(dom)
    if m > max_majorant:
        raise StepTooLarge(
            f"exponent majorant {m:.3e} too large for a series exponential"
        )
    n_sq = max(0, int(math.ceil(math.log2(max(m, 1e-300) / 0.5)))) if m > 0.5 else 0
    h = g * (0.5 ** n_sq)
    acc = g.one_like()
    term = g.one_like()
    for n in range(1, max_terms + 1):
        term = term.multiply(h, cutoff="sum") * (1.0 / n)
        acc = acc + term
        if term.majorant_norm(dom) < tol:
            break
    else:
        raise StepTooLarge("series exponential did not converge")
    for _ in range(n_sq):
        acc = acc.multiply(acc, cutoff="sum")
        acc = acc.pruned(tol * 1e-3, s=dom.s)
    return acc


def compose_angle_action(f: FourierTaylorSeries,
                         v: list | None,
                         u: list | None,
                         dom: Domain,
                         tol: float = 1e-14,
                         max_order: int = 40) -> FourierTaylorSeries:
    """f(phi + v, t, rho + u) by double Taylor expansion about (phi, rho).

    The expansion in the action increment terminates at the polynomial degree;
    the angle expansion runs until its term majorant drops below tol.
    """
    d = f.d
    v = list(v) if v is not None else []
    u = list(u) if u is not None else []
    if v and all(comp.is_zero() for comp in v):
        v = []
    if u and all(comp.is_zero() for comp in u):
        u = []
    if not v and not u:
        return f

    def axis_orders(shifts, limit):
        # multi-indices over d axes with total order <= limit, graded
        out = [[tuple([0] * d)]]
        for n in range(1, limit + 1):
            level = []
            for prev in out[n - 1]:
                for j in range(d):
                    cand = tuple(x + (1 if i == j else 0) for i, x in enumerate(prev))
                    if cand not in level:
                        level.append(cand)
            out.append(level)
        return out

    deg = f.taylor_degree
    result = f.zero_like()
    # cache mixed derivatives of f
    deriv_cache: dict = {(tuple([0] * d), tuple([0] * d)): f}

    def deriv(alpha, beta):
        key = (alpha, beta)
        if key in deriv_cache:
            return deriv_cache[key]
        # peel one derivative
        for j in range(d):
            if alpha[j] > 0:
                prev = deriv(tuple(x - (1 if i == j else 0) for i, x in enumerate(alpha)), beta)
                out = prev.derive("theta", j)
                break
        else:
            for j in range(d):
                if beta[j] > 0:
                    prev = deriv(alpha, tuple(x - (1 if i == j else 0) for i, x in enumerate(beta)))
                    out = prev.derive("action", j)
                    break
        deriv_cache[key] = out
        return out

    def power(shifts, alpha):
        out = None
        for j, e in enumerate(alpha):
            for _ in range(e):
                out = shifts[j] if out is None else out.multiply(shifts[j], cutoff="sum")
        return out

    beta_limit = deg if u else 0
    alpha_levels = axis_orders(v, max_order) if v else [[tuple([0] * d)]]
    beta_levels = axis_orders(u, beta_limit) if u else [[tuple([0] * d)]]

    scale_ref = max(f.coeff_norm(dom.s), 1.0)
    for n_a in range(len(alpha_levels) if v else 1):
        level_major = 0.0
        for alpha in alpha_levels[n_a] if v else [tuple([0] * d)]:
            va = power(v, alpha) if sum(alpha) else None
            for n_b in range(len(beta_levels) if u else 1):
                for beta in beta_levels[n_b] if u else [tuple([0] * d)]:
                    if sum(alpha) == 0 and sum(beta) == 0:
                        term = f
                    else:
                        g = deriv(alpha, beta)
                        if g.is_zero():
                            continue
                        coef = 1.0
                        for e in alpha:
                            coef /= _FACT[e]
                        for e in beta:
                            coef /= _FACT[e]
                        term = g * coef
                        if va is not None:
                            term = term.multiply(va, cutoff="sum")
                        ub = power(u, beta) if sum(beta) else None
                        if ub is not None:
                            term = term.multiply(ub, cutoff="sum")
                    result = result + term
                    level_major = max(level_major, term.majorant_norm(dom))
        if v and n_a >= 1 and level_major < tol * scale_ref:
            break
    else:
        if v:
            raise StepTooLarge(
                "angle composition did not converge within the order budget"
            )
    return result.pruned(tol * scale_ref * 1e-3, s=dom.s)


def compose_angle_shift_exact(f: FourierTaylorSeries, shift: list,
                              dom: Domain, tol: float = 1e-15) -> FourierTaylorSeries:
    """f(theta + W(t, I), t, I) for shifts independent of the angles.

    Exact per mode: the factor exp(i <k, W>) is itself a series in (t, I).
    """
    for comp in shift:
        for (k, _l) in comp.coeffs:
            if any(k):
                raise DomainError("exact angle shift requires (t, I)-dependence only")
    if all(comp.is_zero() for comp in shift):
        return f
    out = f.zero_like()
    exp_cache: dict = {}
    for (k, l), poly in f.coeffs.items():
        if not any(k):
            mode_term = f.with_coeffs({(k, l): dict(poly)})
            out = out + mode_term
            continue
        if k not in exp_cache:
            expo = None
            for j, kj in enumerate(k):
                if kj == 0:
                    continue
                piece = shift[j] * (1j * kj)
                expo = piece if expo is None else expo + piece
            exp_cache[k] = exp_series(expo, dom, tol=tol)
        mode_term = f.with_coeffs({(k, l): dict(poly)})
        out = out + mode_term.multiply(exp_cache[k], cutoff="sum")
    return out


# ---------------------------------------------------------------------------
# homological solve
# ---------------------------------------------------------------------------

@dataclass
class GeneratingFunction:
    """Solved generating function plus solve metadata."""

    S: FourierTaylorSeries
    mode: str                 # 'theta_only' | 'theta_and_t'
    scale_num: float
    omega: np.ndarray
    inv_eps_a: float
    min_divisor: float
    min_divisor_mode: tuple
    residual_majorant: float = 0.0


def solve_homological(P_low: FourierTaylorSeries, omega, p: DioParams,
                      scale_num: float, mode: str,
                      safety: float = 1.0,
                      bound_kind: str | None = None) -> GeneratingFunction:
    """Solve the homological equation for the current phase, mode by mode.

    ``mode='theta_only'`` eliminates every k != 0 mode (angle average stays);
    ``'theta_and_t'`` eliminates everything but the space-time mean.  Every
    retained divisor must clear the phase's lower bound times ``safety``.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if mode not in ("theta_only", "theta_and_t"):
        raise ValueError(f"unknown homological mode {mode!r}")
    if bound_kind is None:
        bound_kind = "low" if mode == "theta_only" else "high"
    inv_eps_a = p.inv_eps_a
    zero_k = tuple([0] * P_low.d)
    out = {}
    min_div = math.inf
    min_mode = (zero_k, 0)
    for (k, l), poly in P_low.coeffs.items():
        if mode == "theta_only" and k == zero_k:
            raise DomainError("theta-only solve received an angle-average mode")
        if mode == "theta_and_t" and k == zero_k and l == 0:
            raise DomainError("solve received the space-time mean")
        knorm = sum(abs(x) for x in k)
        div = float(np.dot(k, omega)) * inv_eps_a + l
        if knorm > 0:
            bound = p.low_bound(knorm) if bound_kind == "low" else p.high_bound(knorm)
            bound = bound / 2.0  # action-ball variation allowance
            if abs(div) < bound * safety:
                raise SmallDivisorViolation(k, l, abs(div), bound * safety)
        else:
            # k = 0, l != 0: divisor is the integer l itself
            if abs(div) < 0.5:
                raise SmallDivisorViolation(k, l, abs(div), 0.5)
        if abs(div) < min_div:
            min_div, min_mode = abs(div), (k, l)
        out[(k, l)] = {a: scale_num * 1j * c / div for a, c in poly.items()}
    S = P_low.with_coeffs(out)
    gf = GeneratingFunction(S=S, mode=mode, scale_num=float(scale_num),
                            omega=omega, inv_eps_a=inv_eps_a,
                            min_divisor=min_div, min_divisor_mode=min_mode)
    gf.residual_majorant = homological_residual(gf, P_low).majorant_norm(s=0.0, r=1.0)
    return gf


def homological_residual(gf: GeneratingFunction,
                         P_low: FourierTaylorSeries) -> FourierTaylorSeries:
    """S_t + <omega/eps^a, S_theta> + scale * P_low, as a series (should vanish)."""
    res = gf.S.derive("t")
    for j in range(gf.S.d):
        res = res + gf.S.derive("theta", j) * (gf.omega[j] * gf.inv_eps_a)
    return res + P_low * gf.scale_num


# ---------------------------------------------------------------------------
# symplectic step objects
# ---------------------------------------------------------------------------

@dataclass
class SymplecticStep:
    """One change of variables I = rho + u(phi,t,rho), theta = phi + v(phi,t,rho)."""

    u: tuple
    v: tuple
    domain: Domain
    S: FourierTaylorSeries | None = None
    deriv_bound: float = 0.0
    back_substitution_residual: float = 0.0

    @property
    def d(self) -> int:
        return self.domain.d

    def is_identity(self) -> bool:
        return all(c.is_zero() for c in self.u) and all(c.is_zero() for c in self.v)

    def forward(self, phi, t, rho):
        """Map new coordinates to old: returns (theta, I) arrays."""
        phi = np.asarray(phi, dtype=complex).reshape(self.d, -1)
        n = phi.shape[1]
        t = np.broadcast_to(np.asarray(t, dtype=complex).reshape(-1), (n,))
        rho = np.broadcast_to(np.asarray(rho, dtype=complex).reshape(self.d, -1),
                              (self.d, n))
        theta = phi.astype(complex).copy()
        act = rho.astype(complex).copy()
        for j in range(self.d):
            if not self.v[j].is_zero():
                theta[j] = theta[j] + self.v[j].evaluate(phi, t, rho)
            if not self.u[j].is_zero():
                act[j] = act[j] + self.u[j].evaluate(phi, t, rho)
        return theta, act

    def compose_into(self, g: FourierTaylorSeries, dom: Domain,
                     tol: float = 1e-14) -> FourierTaylorSeries:
        """g(old coords) -> g(forward(new coords)) as a series."""
        if self.is_identity():
            return g
        g = g.recenter(self.domain.center_array())
        return compose_angle_action(g, v=list(self.v), u=list(self.u), dom=dom, tol=tol)

    def compose_angle_only(self, g: FourierTaylorSeries, dom: Domain,
                           tol: float = 1e-14) -> FourierTaylorSeries:
        """Substitute only theta = phi + v; for terms already in the new action."""
        if all(c.is_zero() for c in self.v):
            return g
        g = g.recenter(self.domain.center_array())
        return compose_angle_action(g, v=list(self.v), u=None, dom=dom, tol=tol)

    @classmethod
    def identity(cls, d: int, dom: Domain, degree: int = 2) -> "SymplecticStep":
        z = tuple(FourierTaylorSeries.zero(d, dom.center_array(), degree)
                  for _ in range(d))
        return cls(u=z, v=z, domain=dom, S=None, deriv_bound=0.0)


@dataclass
class AveragingTransform:
    """Angle shift by the action gradient of a time integral; not near identity.

    Old to new: phi = theta + shift(t, I), rho = I.  The inverse substitutes
    theta = phi - shift(t, rho) exactly.
    """

    S_int: FourierTaylorSeries   # the time integral, function of (t, I)
    shift: tuple                 # d components, functions of (t, I)
    domain: Domain

    @property
    def d(self) -> int:
        return self.domain.d

    def is_identity(self) -> bool:
        return all(c.is_zero() for c in self.shift)

    def forward(self, phi, t, rho):
        """New coordinates to old: theta = phi - shift(t, rho), I = rho."""
        phi = np.asarray(phi, dtype=complex).reshape(self.d, -1)
        n = phi.shape[1]
        t = np.broadcast_to(np.asarray(t, dtype=complex).reshape(-1), (n,))
        rho = np.broadcast_to(np.asarray(rho, dtype=complex).reshape(self.d, -1),
                              (self.d, n))
        theta = phi.astype(complex).copy()
        for j in range(self.d):
            if not self.shift[j].is_zero():
                theta[j] = theta[j] - self.shift[j].evaluate(phi, t, rho)
        return theta, rho.astype(complex).copy()

    def compose_into(self, g: FourierTaylorSeries, dom: Domain,
                     tol: float = 1e-14) -> FourierTaylorSeries:
        if self.is_identity():
            return g
        g = g.recenter(self.domain.center_array())
        return compose_angle_shift_exact(g, [c * (-1.0) for c in self.shift],
                                         dom, tol=tol)


def invert_generating(gf: GeneratingFunction, dom: Domain, tol: float = 1e-14,
                      max_iter: int = 60) -> SymplecticStep:
    """Invert the implicit relations of the generating function on ``dom``.

    Fixed-point iteration on the angle correction; requires the contraction
    margin ||d^2 S|| < 1/2.
    """
    S = gf.S.recenter(dom.center_array())
    d = S.d
    # contraction precheck: every mixed second derivative against theta
    second = 0.0
    for j in range(d):
        Srho = S.derive("action", j) if S.taylor_degree >= 1 else None
        for i in range(d):
            if Srho is not None:
                second = max(second, Srho.derive("theta", i).majorant_norm(dom))
    if second >= 0.5:
        raise StepTooLarge(
            f"contraction precheck failed: ||d2S|| = {second:.3e} >= 1/2"
        )
    zero = FourierTaylorSeries.zero(d, dom.center_array(), S.taylor_degree)
    S_rho = [S.derive("action", j) if S.taylor_degree >= 1 else zero
             for j in range(d)]
    S_theta = [S.derive("theta", j) for j in range(d)]
    v = [zero] * d
    for _ in range(max_iter):
        v_new = [compose_angle_action(S_rho[j], v=v, u=None, dom=dom, tol=tol) * (-1.0)
                 for j in range(d)]
        delta = max((v_new[j] - v[j]).majorant_norm(dom) for j in range(d))
        v = v_new
        if delta < tol:
            break
    else:
        raise StepTooLarge("fixed-point inversion did not converge")
    u = [compose_angle_action(S_theta[j], v=v, u=None, dom=dom, tol=tol)
         for j in range(d)]
    # back-substitution check of the defining relations
    resid = 0.0
    for j in range(d):
        back = v[j] + compose_angle_action(S_rho[j], v=v, u=None, dom=dom, tol=tol)
        resid = max(resid, back.majorant_norm(dom))
    if resid > 10.0 * tol * max(1.0, S.majorant_norm(dom)):
        raise StepTooLarge(f"back-substitution residual {resid:.3e} too large")
    db = 0.0
    for comp in list(u) + list(v):
        for j in range(d):
            db = max(db, comp.derive("theta", j).majorant_norm(dom))
            if comp.taylor_degree >= 1:
                db = max(db, comp.derive("action", j).majorant_norm(dom))
        db = max(db, comp.derive("t").majorant_norm(dom))
    return SymplecticStep(u=tuple(u), v=tuple(v), domain=dom, S=S,
                          deriv_bound=db, back_substitution_residual=resid)


# ---------------------------------------------------------------------------
# finite-difference symplecticity oracle
# ---------------------------------------------------------------------------

def fd_jacobian(transform, phi, t, rho, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of (phi, rho) -> (theta, I) at fixed t."""
    d = transform.d
    z0 = np.concatenate([np.asarray(phi, float).reshape(-1),
                         np.asarray(rho, float).reshape(-1)])
    J = np.zeros((2 * d, 2 * d))
    for j in range(2 * d):
        zp, zm = z0.copy(), z0.copy()
        zp[j] += h
        zm[j] -= h
        thp, ip = transform.forward(zp[:d], t, zp[d:])
        thm, im = transform.forward(zm[:d], t, zm[d:])
        col = np.concatenate([(thp - thm).reshape(-1), (ip - im).reshape(-1)]).real
        J[:, j] = col / (2.0 * h)
    return J


def symplectic_defect(J: np.ndarray) -> float:
    d = J.shape[0] // 2
    Om = np.zeros((2 * d, 2 * d))
    Om[:d, d:] = np.eye(d)
    Om[d:, :d] = -np.eye(d)
    return float(np.max(np.abs(J.T @ Om @ J - Om)))
