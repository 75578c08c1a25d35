"""Coupled oscillator networks with odd power-law restoring forces.

Each node obeys

    x_i'' + x_i^(2n+1) + dF/dx_i(x, t) = 0

with a polynomial coupling/forcing potential F(x, t) = sum_alpha p_alpha(t)
x^alpha whose coefficients are 2 pi periodic trigonometric polynomials.  The
per-oscillator action

    I_i = (n+1) x_i'^2 + x_i^(2n+2)

is conserved by the uncoupled flow and parameterizes the sampling shells.
Integration is velocity-Verlet (symplectic, time-reversible); a classical
Runge-Kutta reference integrator is kept for cross-validation.  Rotation
frequencies come from weighted Birkhoff averages of the phase-plane winding
rate, whose rapid convergence doubles as the quasi-periodicity score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import beta as beta_fn

from .errors import DomainError, KamtoriError


@dataclass(frozen=True)
class TrigTable:
    """Real 2*pi-periodic trigonometric polynomial p(t)."""

    cos_terms: tuple = ()   # ((l, amp), ...)
    sin_terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "cos_terms",
                           tuple((int(l), float(a)) for l, a in self.cos_terms))
        object.__setattr__(self, "sin_terms",
                           tuple((int(l), float(a)) for l, a in self.sin_terms))
        if any(l < 0 for l, _ in self.cos_terms + self.sin_terms):
            raise DomainError("trig table uses nonnegative harmonics only")

    def value(self, t):
        out = 0.0
        for l, a in self.cos_terms:
            out = out + a * np.cos(l * t)
        for l, a in self.sin_terms:
            out = out + a * np.sin(l * t)
        return out

    def value_scalar(self, t: float) -> float:
        out = 0.0
        for l, a in self.cos_terms:
            out += a * math.cos(l * t)
        for l, a in self.sin_terms:
            out += a * math.sin(l * t)
        return out

    def is_constant(self) -> bool:
        return all(l == 0 for l, _ in self.cos_terms) and not self.sin_terms

    def max_abs(self) -> float:
        return sum(abs(a) for _, a in self.cos_terms) + \
            sum(abs(a) for _, a in self.sin_terms)


@dataclass(frozen=True)
class DuffingNetwork:
    """m oscillators with exponent n and potential terms |alpha| <= 2n+1."""

    m: int
    n: int
    F_terms: dict = field(default_factory=dict)   # alpha tuple -> TrigTable

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise DomainError("need m >= 1 oscillators and exponent n >= 1")
        terms = {}
        for alpha, table in self.F_terms.items():
            alpha = tuple(int(x) for x in alpha)
            if len(alpha) != self.m or min(alpha) < 0:
                raise DomainError(f"bad multi-index {alpha}")
            if sum(alpha) > 2 * self.n + 1:
                raise DomainError(
                    f"|alpha| = {sum(alpha)} exceeds 2n+1 = {2 * self.n + 1}"
                )
            if not isinstance(table, TrigTable):
                raise DomainError("potential coefficients must be TrigTable")
            terms[alpha] = table
        object.__setattr__(self, "F_terms", terms)

    def is_free(self) -> bool:
        return not self.F_terms

    def grad_F(self, x: np.ndarray, t: float) -> np.ndarray:
        out = np.zeros(self.m)
        for alpha, table in self.F_terms.items():
            pa = table.value(t)
            if pa == 0.0:
                continue
            for i in range(self.m):
                if alpha[i] == 0:
                    continue
                term = pa * alpha[i]
                for j in range(self.m):
                    e = alpha[j] - (1 if j == i else 0)
                    if e:
                        term = term * x[j] ** e
                out[i] += term
        return out

    def accel(self, x: np.ndarray, t: float) -> np.ndarray:
        return -x ** (2 * self.n + 1) - self.grad_F(x, t)

    def potential(self, x: np.ndarray, t: float) -> float:
        out = float(np.sum(x ** (2 * self.n + 2)) / (2 * self.n + 2))
        for alpha, table in self.F_terms.items():
            term = table.value(t)
            for j in range(self.m):
                if alpha[j]:
                    term = term * x[j] ** alpha[j]
            out += term
        return out

    def energy(self, x: np.ndarray, v: np.ndarray, t: float) -> float:
        return float(0.5 * np.sum(v ** 2) + self.potential(x, t))


def action_of(x, xdot, n: int):
    """Per-oscillator action (n+1) xdot^2 + x^(2n+2); zero only at the origin."""
    x = np.asarray(x, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    return (n + 1) * xdot ** 2 + x ** (2 * n + 2)


def exact_period(n: int, amplitude: float) -> float:
    """Period of x'' + x^(2n+1) = 0 started at (amplitude, 0), in closed form.

    T = 4 sqrt(n+1) A^{-n} * (1/(2n+2)) B(1/(2n+2), 1/2).
    """
    if amplitude <= 0:
        raise DomainError("amplitude must be positive")
    mexp = 2 * n + 2
    return 4.0 * math.sqrt(n + 1.0) * amplitude ** (-n) \
        * beta_fn(1.0 / mexp, 0.5) / mexp


def exact_frequency(n: int, amplitude: float) -> float:
    return 2.0 * math.pi / exact_period(n, amplitude)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    x: np.ndarray        # (N, m)
    v: np.ndarray        # (N, m)
    actions: np.ndarray  # (N, m)
    energy: np.ndarray   # (N,)
    n: int
    dt: float
    escaped: bool = False
    escape_time: float | None = None


def _frequency_guess(net: DuffingNetwork, x0, v0) -> float:
    amp = float(np.max(action_of(x0, v0, net.n))) ** (1.0 / (2 * net.n + 2))
    base = exact_frequency(net.n, max(amp, 1e-6))
    forcing = sum(t.max_abs() for t in net.F_terms.values())
    return base + math.sqrt(forcing + 1.0)


def simulate(net: DuffingNetwork, x0, v0, T: float, dt: float,
             method: str = "verlet", escape_bound: float | None = None,
             store_stride: int = 1) -> TrajectoryRecord:
    """Integrate the network; symplectic leapfrog by default, RK4 as reference.

    Blow-ups beyond ``escape_bound`` are recorded as escapes, not errors.
    """
    x = np.array(x0, dtype=float).reshape(net.m)
    v = np.array(v0, dtype=float).reshape(net.m)
    wmax = _frequency_guess(net, x, v)
    if dt * wmax > 0.1:
        raise DomainError(
            f"dt = {dt:.3e} too coarse for estimated frequency {wmax:.3f} "
            "(need dt * freq <= 0.1)"
        )
    if escape_bound is None:
        amp = float(np.max(action_of(x, v, net.n))) ** (1.0 / (2 * net.n + 2))
        escape_bound = 100.0 * max(amp, 1.0)
    n_steps = int(round(T / dt))
    idx = range(0, n_steps + 1, store_stride)
    n_keep = len(idx)
    xs = np.empty((n_keep, net.m))
    vs = np.empty((n_keep, net.m))
    ts = np.empty(n_keep)
    keep_i = 0
    escaped = False
    escape_time = None
    t = 0.0
    if method == "verlet" and net.m == 1:
        # scalar fast path: the acceptance checks integrate millions of steps
        expo = 2 * net.n + 1
        terms = [(int(alpha[0]), table) for alpha, table in net.F_terms.items()]
        x1, v1 = float(x[0]), float(v[0])

        def acc1(xx: float, tt: float) -> float:
            a1 = -xx ** expo
            for e1, table in terms:
                if e1 == 0:
                    continue
                a1 -= table.value_scalar(tt) * e1 * xx ** (e1 - 1)
            return a1

        a1 = acc1(x1, t)
        for step in range(n_steps + 1):
            if step % store_stride == 0:
                xs[keep_i, 0], vs[keep_i, 0], ts[keep_i] = x1, v1, t
                keep_i += 1
            if step == n_steps:
                break
            vh = v1 + 0.5 * dt * a1
            x1 = x1 + dt * vh
            t = (step + 1) * dt
            a1 = acc1(x1, t)
            v1 = vh + 0.5 * dt * a1
            if abs(x1) > escape_bound:
                escaped = True
                escape_time = t
                break
    elif method == "verlet":
        a = net.accel(x, t)
        for step in range(n_steps + 1):
            if step % store_stride == 0:
                xs[keep_i], vs[keep_i], ts[keep_i] = x, v, t
                keep_i += 1
            if step == n_steps:
                break
            vh = v + 0.5 * dt * a
            x = x + dt * vh
            t = (step + 1) * dt
            a = net.accel(x, t)
            v = vh + 0.5 * dt * a
            if np.max(np.abs(x)) > escape_bound:
                escaped = True
                escape_time = t
                break
    elif method == "rk4-reference" and net.m == 1:
        expo = 2 * net.n + 1
        terms = [(int(alpha[0]), table) for alpha, table in net.F_terms.items()]
        x1, v1 = float(x[0]), float(v[0])

        def acc1(xx: float, tt: float) -> float:
            a1 = -xx ** expo
            for e1, table in terms:
                if e1 == 0:
                    continue
                a1 -= table.value_scalar(tt) * e1 * xx ** (e1 - 1)
            return a1

        for step in range(n_steps + 1):
            if step % store_stride == 0:
                xs[keep_i, 0], vs[keep_i, 0], ts[keep_i] = x1, v1, t
                keep_i += 1
            if step == n_steps:
                break
            k1x, k1v = v1, acc1(x1, t)
            th = t + 0.5 * dt
            k2x, k2v = v1 + 0.5 * dt * k1v, acc1(x1 + 0.5 * dt * k1x, th)
            k3x, k3v = v1 + 0.5 * dt * k2v, acc1(x1 + 0.5 * dt * k2x, th)
            t = (step + 1) * dt
            k4x, k4v = v1 + dt * k3v, acc1(x1 + dt * k3x, t)
            x1 = x1 + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
            v1 = v1 + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
            if abs(x1) > escape_bound:
                escaped = True
                escape_time = t
                break
    elif method == "rk4-reference":
        def rhs(state, tt):
            xx, vv = state[:net.m], state[net.m:]
            return np.concatenate([vv, net.accel(xx, tt)])
        y = np.concatenate([x, v])
        for step in range(n_steps + 1):
            if step % store_stride == 0:
                xs[keep_i], vs[keep_i], ts[keep_i] = y[:net.m], y[net.m:], t
                keep_i += 1
            if step == n_steps:
                break
            k1 = rhs(y, t)
            k2 = rhs(y + 0.5 * dt * k1, t + 0.5 * dt)
            k3 = rhs(y + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = rhs(y + dt * k3, t + dt)
            y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            t = (step + 1) * dt
            if np.max(np.abs(y[:net.m])) > escape_bound:
                escaped = True
                escape_time = t
                break
    else:
        raise DomainError(f"unknown integrator {method!r}")
    xs, vs, ts = xs[:keep_i], vs[:keep_i], ts[:keep_i]
    acts = action_of(xs, vs, net.n)
    en = np.array([net.energy(xs[i], vs[i], ts[i]) for i in range(len(ts))])
    if not np.all(np.isfinite(xs)) or not np.all(np.isfinite(vs)):
        escaped = True
    return TrajectoryRecord(times=ts, x=xs, v=vs, actions=acts, energy=en,
                            n=net.n, dt=dt * store_stride, escaped=escaped,
                            escape_time=escape_time)


def boundedness_sup(traj: TrajectoryRecord) -> float:
    """sup over the samples of sum_i |x_i| + |v_i|."""
    return float(np.max(np.sum(np.abs(traj.x), axis=1)
                        + np.sum(np.abs(traj.v), axis=1)))


def weighted_birkhoff(values: np.ndarray) -> float:
    """Bump-weighted time average; converges super-polynomially on
    quasi-periodic signals."""
    N = len(values)
    if N < 8:
        raise DomainError("window too short for a weighted average")
    u = (np.arange(N) + 0.5) / N
    w = np.exp(-1.0 / (u * (1.0 - u)))
    return float(np.sum(w * values) / np.sum(w))


def frequency_extract(traj: TrajectoryRecord, oscillator: int,
                      min_windings: float = 20.0) -> float:
    """Rotation frequency of one oscillator from the phase-plane winding rate."""
    x = traj.x[:, oscillator]
    v = traj.v[:, oscillator]
    radius = np.hypot(x, v)
    if np.min(radius) < 1e-10 * np.max(radius):
        raise KamtoriError("trajectory passes too near the origin for a winding angle")
    phi = np.unwrap(np.arctan2(v, x))
    total = abs(phi[-1] - phi[0]) / (2.0 * math.pi)
    if total < min_windings:
        raise KamtoriError(
            f"insufficient winding: {total:.1f} revolutions "
            f"(need >= {min_windings})"
        )
    rate = np.diff(phi) / traj.dt
    return abs(weighted_birkhoff(rate))


def quasiperiodicity_score(traj: TrajectoryRecord, oscillator: int) -> float:
    """Halving-window discrepancy of the weighted frequency average."""
    x = traj.x[:, oscillator]
    v = traj.v[:, oscillator]
    phi = np.unwrap(np.arctan2(v, x))
    rate = np.diff(phi) / traj.dt
    full = weighted_birkhoff(rate)
    half = weighted_birkhoff(rate[: len(rate) // 2])
    return abs(full - half)


# ---------------------------------------------------------------------------
# shell sampling and the stability fraction
# ---------------------------------------------------------------------------

class _ReferenceOrbit:
    """Dense unperturbed single-oscillator orbit at amplitude 1 over one period."""

    def __init__(self, n: int, samples: int = 16384):
        self.n = n
        self.period = exact_period(n, 1.0)
        net = DuffingNetwork(m=1, n=n)
        dt = self.period / samples
        traj = simulate(net, [1.0], [0.0], self.period, dt, method="rk4-reference")
        self.ts = traj.times
        self.xs = traj.x[:, 0]
        self.vs = traj.v[:, 0]

    def state_at_phase(self, phase: float, amplitude: float) -> tuple:
        """Point on the level set of action amplitude^(2n+2), at orbit phase."""
        tau = (phase / (2.0 * math.pi)) % 1.0 * self.period
        x = np.interp(tau, self.ts, self.xs)
        v = np.interp(tau, self.ts, self.vs)
        return amplitude * x, amplitude ** (self.n + 1) * v


def sample_shell(net: DuffingNetwork, A: float, c4: float, rng,
                 ref: _ReferenceOrbit) -> tuple:
    """Draw (x, v) with total action uniform in [A, c4 A] in the product
    action-angle measure: radial inverse-CDF for the total, Dirichlet split,
    independent uniform phases."""
    m = net.m
    u = rng.random()
    total = (A ** m + u * ((c4 * A) ** m - A ** m)) ** (1.0 / m)
    weights = rng.dirichlet(np.ones(m))
    actions = total * weights
    x = np.empty(m)
    v = np.empty(m)
    for i in range(m):
        amp = actions[i] ** (1.0 / (2 * net.n + 2))
        phase = rng.uniform(0.0, 2.0 * math.pi)
        x[i], v[i] = ref.state_at_phase(phase, amp)
    return x, v


@dataclass
class StabilityResult:
    fraction: float
    n_stable: int
    n_samples: int
    A: float
    c4: float
    seed: int
    records: list
    ci_low: float
    ci_high: float


def stability_fraction(net: DuffingNetwork, A: float, n_samples: int, T: float,
                       seed: int, c4: float = 2.0, dt: float | None = None,
                       bound_mult: float = 3.0, qp_tol: float = 1e-6,
                       store_stride: int = 1) -> StabilityResult:
    """Fraction of shell-sampled initial data that stays bounded and scores
    quasi-periodic over the horizon; deterministic under the seed."""
    if n_samples < 50:
        raise DomainError("stability fraction needs at least 50 samples")
    if c4 <= 1.0:
        raise DomainError("shell factor c4 must exceed 1")
    from .diophantine import wilson_interval

    rng = np.random.Generator(np.random.Philox(seed))
    ref = _ReferenceOrbit(net.n)
    amp_hi = (c4 * A) ** (1.0 / (2 * net.n + 2))
    sup_scale = amp_hi + math.sqrt(c4 * A / (net.n + 1))
    if dt is None:
        dt = 0.09 / (exact_frequency(net.n, amp_hi)
                     + math.sqrt(sum(t.max_abs() for t in net.F_terms.values()) + 1.0))
    records = []
    n_stable = 0
    for _ in range(n_samples):
        x0, v0 = sample_shell(net, A, c4, rng, ref)
        traj = simulate(net, x0, v0, T, dt, escape_bound=100.0 * amp_hi,
                        store_stride=store_stride)
        sup = boundedness_sup(traj)
        if traj.escaped or sup > bound_mult * sup_scale:
            stable, qp = False, math.inf
        else:
            try:
                qp = max(quasiperiodicity_score(traj, i) for i in range(net.m))
                stable = qp < qp_tol
            except KamtoriError:
                stable, qp = False, math.inf
        n_stable += stable
        records.append({"action_total": float(np.sum(action_of(x0, v0, net.n))),
                        "sup": float(sup), "qp_score": float(qp),
                        "escaped": bool(traj.escaped), "stable": bool(stable)})
    ci = wilson_interval(n_stable, n_samples)
    return StabilityResult(fraction=n_stable / n_samples, n_stable=n_stable,
                           n_samples=n_samples, A=float(A), c4=float(c4),
                           seed=int(seed), records=records,
                           ci_low=ci[0], ci_high=ci[1])
