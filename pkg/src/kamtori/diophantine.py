"""Frequency arithmetic: divisor lower bounds and good-set measure estimation.

Candidate frequencies omega(I_0) must keep every divisor

    <k, omega(I_0)> / eps^a + l

away from zero: a strong bound gamma * eps^{-a + B/ell} / |k|^tau1 on the
low-order block |k| + |l| <= cutoff, and gamma / |k|^tau2 beyond it.  For a
fixed k the divisor is minimized over integers l at the nearest integer to
-<k, omega>/eps^a, so three candidate l per k (clipped to the admissible
range) decide the whole block; a spot brute-force property test keeps that
reduction honest.

The measure estimator Monte-Carlo samples on the action box, maps through the
frequency map, and reports a Wilson interval for the passing fraction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, ScheduleError
from .series import FourierTaylorSeries, action_gradient, action_hessian

_WILSON_Z = 1.959963984540054  # two-sided 95%


@dataclass(frozen=True)
class DioParams:
    """Problem constants and everything derived from (a, b, d, mu, eps)."""

    a: float
    b: float
    d: int
    mu: float
    eps: float
    # derived
    B: float
    ell: float
    gamma: float
    tau1: float
    tau2: float
    cutoff: float

    @property
    def log_inv_eps(self) -> float:
        return math.log(1.0 / self.eps)

    @property
    def inv_eps_a(self) -> float:
        return self.eps ** (-self.a)

    def low_bound(self, k_norm: float) -> float:
        """Divisor floor on the low block for |k|_1 = k_norm > 0."""
        return self.eps ** (-self.a + self.B / self.ell) * self.gamma / k_norm ** self.tau1

    def high_bound(self, k_norm: float) -> float:
        """Divisor floor beyond the low block."""
        return self.gamma / k_norm ** self.tau2


def derive_params(a: float, b: float, d: int, mu: float, eps: float) -> DioParams:
    """Compute every derived constant from the base parameters."""
    if not (a > b > 0):
        raise DomainError(f"constraint a > b > 0 violated: a={a}, b={b}")
    if not (0 < mu < 1):
        raise DomainError(f"mu must lie in (0, 1), got {mu}")
    if not (0 < eps < 1):
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    if d < 1:
        raise DomainError(f"d must be a positive integer, got {d}")
    B = 5.0 * a - b + 2.0 * a * d
    ell = 2.0 * (d + 1) * B / (a - b) + mu
    mu_term = (a - b) ** 2 * mu / (1000.0 * (a + b + 1.0) * (d + 3.0) * B)
    tau1 = (d - 1.0) + mu_term
    tau2 = tau1 + 1.0  # definitionally one larger; computed so the identity is exact
    L = math.log(1.0 / eps)
    gamma = L ** (-4.0)
    cutoff = eps ** (-B / ell) * L ** 2
    return DioParams(a=float(a), b=float(b), d=int(d), mu=float(mu), eps=float(eps),
                     B=B, ell=ell, gamma=gamma, tau1=tau1, tau2=tau2, cutoff=cutoff)


class FrequencyMap:
    """omega(I) = grad H0(I) for a pure action polynomial, with a Hessian floor."""

    def __init__(self, H0: FourierTaylorSeries, box=None, grid_n: int = 9):
        for (k, l) in H0.coeffs:
            if any(k) or l:
                raise DomainError("frequency map needs a pure action polynomial")
        self.H0 = H0
        self.d = H0.d
        self.box = tuple((1.0, 2.0) for _ in range(self.d)) if box is None else \
            tuple((float(lo), float(hi)) for lo, hi in box)
        dets = []
        axes = [np.linspace(lo, hi, grid_n) for lo, hi in self.box]
        for point in itertools.product(*axes):
            H = action_hessian(H0, np.asarray(point))
            dets.append(abs(np.linalg.det(np.atleast_2d(H))))
        self.hessian_floor = float(min(dets))
        if self.hessian_floor <= 0.0:
            raise DomainError("Hessian determinant vanishes on the action box")

    def omega(self, I) -> np.ndarray:
        return np.atleast_1d(action_gradient(self.H0, I)).astype(float)

    def omega_many(self, points: np.ndarray) -> np.ndarray:
        """points shape (n, d) -> frequencies shape (n, d)."""
        return np.stack([self.omega(p) for p in points])


@dataclass(frozen=True)
class DivisorCheck:
    passed: bool
    worst_k: tuple
    worst_l: int
    worst_value: float
    worst_bound: float
    n_checked: int
    truncated: bool = False

    @property
    def worst_margin(self) -> float:
        if self.worst_bound == 0.0:
            return math.inf
        return self.worst_value / self.worst_bound


def _k_vectors(d: int, k_max: int, hard_cap: int):
    """Canonical half of Z^d \\ {0} with |k|_1 <= k_max (first nonzero positive)."""
    if d == 1:
        for k1 in range(1, k_max + 1):
            yield (k1,)
        return
    count = 0
    rng = range(-k_max, k_max + 1)
    for k in itertools.product(rng, repeat=d):
        if sum(abs(x) for x in k) == 0 or sum(abs(x) for x in k) > k_max:
            continue
        first = next(x for x in k if x != 0)
        if first < 0:
            continue
        count += 1
        if count > hard_cap:
            raise DomainError(
                f"mode enumeration exceeds hard cap {hard_cap}; raise the cap "
                "or lower the cutoff"
            )
        yield k


def _min_divisor_candidates(x: float, lo: float, hi: float):
    """Integers l in [lo, hi] adjacent to the unconstrained minimizer of |x + l|."""
    if lo > hi:
        return
    base = -round(x)
    for l in (base - 1, base, base + 1):
        lc = min(max(l, lo), hi)
        yield int(lc)


def _check_low_1d(omega0: float, p: DioParams, K: int) -> DivisorCheck:
    k = np.arange(1, K + 1, dtype=float)
    x = k * omega0 * p.inv_eps_a
    span = K - k
    base = -np.round(x)
    vals = np.full_like(x, np.inf)
    for off in (-1.0, 0.0, 1.0):
        l = np.clip(base + off, -span, span)
        vals = np.minimum(vals, np.abs(x + l))
    bounds = p.eps ** (-p.a + p.B / p.ell) * p.gamma / k ** p.tau1
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(bounds > 0, vals / bounds, np.inf)
    i = int(np.argmin(ratios))
    lbest = float(np.clip(base[i], -span[i], span[i]))
    for off in (-1.0, 1.0):
        lc = float(np.clip(base[i] + off, -span[i], span[i]))
        if abs(x[i] + lc) < abs(x[i] + lbest):
            lbest = lc
    return DivisorCheck(bool(vals[i] >= bounds[i]), (int(k[i]),), int(lbest),
                        float(vals[i]), float(bounds[i]), 3 * K)


def check_low(omega0, p: DioParams, hard_cap: int = 5_000_000) -> DivisorCheck:
    """Verify the strong divisor bound on the block |k| + |l| <= cutoff."""
    omega0 = np.atleast_1d(np.asarray(omega0, dtype=float))
    K = int(math.floor(p.cutoff))
    if K < 1:
        return DivisorCheck(True, tuple([0] * p.d), 0, math.inf, 0.0, 0)
    if p.d == 1 and K <= hard_cap:
        return _check_low_1d(float(omega0[0]), p, K)
    worst = (None, 0, math.inf, 0.0)
    n = 0
    truncated = False
    inv_eps_a = p.inv_eps_a
    try:
        kvecs = list(_k_vectors(p.d, K, hard_cap))
    except DomainError:
        kvecs = list(itertools.islice(_k_vectors(p.d, K, hard_cap * 10), hard_cap))
        truncated = True
    for k in kvecs:
        knorm = sum(abs(x) for x in k)
        x = float(np.dot(k, omega0)) * inv_eps_a
        bound = p.low_bound(knorm)
        lo, hi = -(K - knorm), K - knorm
        for l in set(_min_divisor_candidates(x, lo, hi)):
            n += 1
            val = abs(x + l)
            if bound > 0 and val / bound < (worst[2] / worst[3] if worst[3] else math.inf):
                worst = (k, l, val, bound)
    if worst[0] is None:
        return DivisorCheck(True, tuple([0] * p.d), 0, math.inf, 0.0, n, truncated)
    k, l, val, bound = worst
    return DivisorCheck(val >= bound, tuple(k), l, val, bound, n, truncated)


def _check_high_1d(omega0: float, p: DioParams, k_max: int) -> DivisorCheck:
    k = np.arange(1, k_max + 1, dtype=float)
    x = k * omega0 * p.inv_eps_a
    bounds = p.gamma / k ** p.tau2
    best_val = np.full_like(x, np.inf)
    best_l = np.zeros_like(x)
    base = -np.round(x)
    for off in (-1.0, 0.0, 1.0):
        l = base + off
        in_low = (k + np.abs(l)) <= p.cutoff
        val = np.where(in_low, np.inf, np.abs(x + l))
        take = val < best_val
        best_val = np.where(take, val, best_val)
        best_l = np.where(take, l, best_l)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(bounds > 0, best_val / bounds, np.inf)
    i = int(np.argmin(ratios))
    if not np.isfinite(best_val[i]):
        return DivisorCheck(True, (0,), 0, math.inf, 0.0, 3 * k_max)
    return DivisorCheck(bool(best_val[i] >= bounds[i]), (int(k[i]),), int(best_l[i]),
                        float(best_val[i]), float(bounds[i]), 3 * k_max)


def check_high(omega0, p: DioParams, k_max: int, hard_cap: int = 5_000_000) -> DivisorCheck:
    """Verify the weak divisor bound beyond the block, up to |k|_1 <= k_max.

    Only the nearest-integer l (and neighbors) can violate: any other integer
    keeps the divisor >= 1/2 > gamma / |k|^tau2.  Pairs that fall inside the
    low block are that check's responsibility and are skipped here.
    """
    omega0 = np.atleast_1d(np.asarray(omega0, dtype=float))
    if k_max < p.cutoff:
        raise DomainError(f"k_max={k_max} must reach the cutoff {p.cutoff:.1f}")
    if p.gamma >= 0.5:
        raise DomainError("gamma >= 1/2 invalidates the three-candidate reduction")
    if p.d == 1 and k_max <= hard_cap:
        return _check_high_1d(float(omega0[0]), p, int(k_max))
    worst = (None, 0, math.inf, 0.0)
    n = 0
    truncated = False
    inv_eps_a = p.inv_eps_a
    try:
        kvecs = list(_k_vectors(p.d, int(k_max), hard_cap))
    except DomainError:
        kvecs = list(itertools.islice(_k_vectors(p.d, int(k_max), hard_cap * 10), hard_cap))
        truncated = True
    for k in kvecs:
        knorm = sum(abs(x) for x in k)
        x = float(np.dot(k, omega0)) * inv_eps_a
        bound = p.high_bound(knorm)
        base = -round(x)
        for l in (base - 1, base, base + 1):
            if knorm + abs(l) <= p.cutoff:
                continue  # low block
            n += 1
            val = abs(x + l)
            if bound > 0 and val / bound < (worst[2] / worst[3] if worst[3] else math.inf):
                worst = (k, int(l), val, bound)
    if worst[0] is None:
        return DivisorCheck(True, tuple([0] * p.d), 0, math.inf, 0.0, n, truncated)
    k, l, val, bound = worst
    return DivisorCheck(val >= bound, tuple(k), l, val, bound, n, truncated)


def brute_force_low_ratio(omega0, p: DioParams) -> float:
    """Oracle: min of value/bound over ALL (k, l) in the low block, every l.

    Exists to cross-check the three-candidate-per-k reduction used by
    check_low; only feasible for small cutoffs.
    """
    omega0 = np.atleast_1d(np.asarray(omega0, dtype=float))
    K = int(math.floor(p.cutoff))
    best = math.inf
    for k in _k_vectors(p.d, K, 10_000_000):
        knorm = sum(abs(x) for x in k)
        x = float(np.dot(k, omega0)) * p.inv_eps_a
        bound = p.low_bound(knorm)
        for l in range(-(K - knorm), K - knorm + 1):
            best = min(best, abs(x + l) / bound)
    return best


def brute_force_high_ratio(omega0, p: DioParams, k_max: int) -> float:
    """Oracle: min of value/bound over the weak block, scanning every l near
    the minimizer (divisors from farther l exceed 1/2 and cannot be minimal)."""
    omega0 = np.atleast_1d(np.asarray(omega0, dtype=float))
    best = math.inf
    for k in _k_vectors(p.d, int(k_max), 10_000_000):
        knorm = sum(abs(x) for x in k)
        x = float(np.dot(k, omega0)) * p.inv_eps_a
        bound = p.high_bound(knorm)
        base = -round(x)
        for l in range(base - 6, base + 7):
            if knorm + abs(l) <= p.cutoff:
                continue
            best = min(best, abs(x + l) / bound)
    return best


def wilson_interval(successes: int, total: int, z: float = _WILSON_Z) -> tuple:
    if total <= 0:
        raise DomainError("Wilson interval needs a positive sample count")
    phat = successes / total
    denom = 1.0 + z * z / total
    center = (phat + z * z / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass(frozen=True)
class MeasureEstimate:
    fraction: float
    ci_low: float
    ci_high: float
    n_pass: int
    n_samples: int
    seed: int
    k_max: int
    c5: float
    worst_witness: dict


def measure_estimate(fmap: FrequencyMap, p: DioParams, n_samples: int, seed: int,
                     k_max: int | None = None) -> MeasureEstimate:
    """Monte-Carlo fraction of the action box whose frequency passes both checks.

    Deterministic under the seed (counter-based generator); the k-range of the
    weak check is truncated at k_max, recorded in the output.
    """
    if n_samples < 100:
        raise DomainError("measure estimate needs at least 100 samples")
    if k_max is None:
        k_max = int(max(2 * math.ceil(p.cutoff), 100))
    rng = np.random.Generator(np.random.Philox(seed))
    lo = np.array([b[0] for b in fmap.box])
    hi = np.array([b[1] for b in fmap.box])
    pts = lo + rng.random((n_samples, fmap.d)) * (hi - lo)
    omegas = fmap.omega_many(pts)
    c5 = float(np.max(np.sum(np.abs(omegas), axis=1)))
    n_pass = 0
    worst = {"ratio": math.inf, "k": None, "l": None, "value": None, "bound": None}
    for om in omegas:
        cl = check_low(om, p)
        ch = check_high(om, p, k_max=k_max)
        ok = cl.passed and ch.passed
        n_pass += ok
        for res in (cl, ch):
            if res.worst_bound > 0 and res.worst_margin < worst["ratio"]:
                worst = {"ratio": res.worst_margin, "k": list(res.worst_k),
                         "l": res.worst_l, "value": res.worst_value,
                         "bound": res.worst_bound}
    ci = wilson_interval(n_pass, n_samples)
    return MeasureEstimate(fraction=n_pass / n_samples, ci_low=ci[0], ci_high=ci[1],
                           n_pass=n_pass, n_samples=n_samples, seed=int(seed),
                           k_max=int(k_max), c5=c5, worst_witness=worst)


def with_gamma(p: DioParams, gamma: float) -> DioParams:
    """Copy of the parameters with gamma forced (degenerate-limit testing)."""
    return replace(p, gamma=float(gamma))
