"""Sparse Fourier series in the angles with polynomial action dependence.

The basic value type represents

    f(theta, t, I) = sum_{(k,l)} p_{k,l}(I - center) * exp(i (<k, theta> + l t))

on the thickened torus T^{d+1}_s times the complex ball B(center, r).  The
coefficients p_{k,l} are polynomials of bounded total degree, stored sparsely.
Every operation the normal-form iteration needs (arithmetic, derivatives,
mode truncation, coefficient-majorant norms, exact re-centering) lives here.

The norm is a coefficient majorant,

    ||f||_(s,r) = sum_{k,l} ||p_{k,l}||_r * exp((|k|_1 + |l|) s),
    ||p||_r     = sum_alpha |c_alpha| r^{|alpha|},

which upper-bounds the sup norm on the complexified domain and is exactly
computable.  Mode keys are plain tuples ``(k, l)`` with ``k`` a length-d
integer tuple.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import CenterMismatch, DomainError, SerializationError

Alpha = tuple  # multi-index over action variables
Mode = tuple   # (k_tuple, l)

_COEFF_FLOOR = 0.0  # keep exact zeros out of the maps


class ModeIndex(NamedTuple):
    """Angle/time Fourier mode label."""

    k: tuple
    l: int

    @property
    def order(self) -> int:
        """1-norm order |k|_1 + |l| used by every truncation set."""
        return sum(abs(int(x)) for x in self.k) + abs(int(self.l))


def mode_order(mode: Mode) -> int:
    k, l = mode
    return sum(abs(int(x)) for x in k) + abs(int(l))


@dataclass(frozen=True)
class Domain:
    """Complexified domain T^{d+1}_s x B(center, r)."""

    s: float
    r: float
    center: tuple

    def __post_init__(self):
        if not (self.s >= 0.0 and self.r >= 0.0):
            raise DomainError(f"domain widths must be nonnegative: s={self.s}, r={self.r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def d(self) -> int:
        return len(self.center)

    def center_array(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    def shrunk(self, s: float, r: float, center=None) -> "Domain":
        return Domain(s, r, self.center if center is None else tuple(center))


# ---------------------------------------------------------------------------
# polynomial helpers (dict alpha -> complex)
# ---------------------------------------------------------------------------

def _poly_add(p: dict, q: dict) -> dict:
    out = dict(p)
    for a, c in q.items():
        v = out.get(a, 0.0) + c
        if v == 0:
            out.pop(a, None)
        else:
            out[a] = v
    return out


def _poly_scale(p: dict, c) -> dict:
    if c == 0:
        return {}
    return {a: v * c for a, v in p.items()}


def _poly_mul(p: dict, q: dict, max_deg: int) -> dict:
    out: dict = {}
    for a, ca in p.items():
        for b, cb in q.items():
            deg = sum(a) + sum(b)
            if deg > max_deg:
                continue
            key = tuple(x + y for x, y in zip(a, b))
            v = out.get(key, 0.0) + ca * cb
            if v == 0:
                out.pop(key, None)
            else:
                out[key] = v
    return out


def _poly_diff(p: dict, j: int) -> dict:
    out = {}
    for a, c in p.items():
        e = a[j]
        if e == 0:
            continue
        key = tuple(x - (1 if i == j else 0) for i, x in enumerate(a))
        out[key] = out.get(key, 0.0) + c * e
    return out


def _poly_majorant(p: dict, r: float) -> float:
    return sum(abs(c) * r ** sum(a) for a, c in p.items())


def _poly_eval(p: dict, y: np.ndarray) -> np.ndarray:
    """Evaluate at y = I - center; y has shape (d,) or (d, N)."""
    y = np.asarray(y)
    single = y.ndim == 1
    ym = y[:, None] if single else y
    n = ym.shape[1]
    deg = max((sum(a) for a in p), default=0)
    powers = [None] * ym.shape[0]
    for j in range(ym.shape[0]):
        col = [np.ones(n, dtype=complex)]
        for _ in range(deg):
            col.append(col[-1] * ym[j])
        powers[j] = col
    acc = np.zeros(n, dtype=complex)
    for a, c in p.items():
        term = np.full(n, c, dtype=complex)
        for j, e in enumerate(a):
            if e:
                term = term * powers[j][e]
        acc += term
    return acc[0] if single else acc


def _poly_shift(p: dict, delta: np.ndarray, max_deg: int) -> dict:
    """Return q with q(y) = p(y + delta), expanded exactly."""
    d = len(delta)
    out: dict = {}
    for a, c in p.items():
        # expand prod_j (y_j + delta_j)^{a_j} by iterated binomials
        terms = {tuple([0] * d): c}
        for j, e in enumerate(a):
            if e == 0:
                continue
            new_terms: dict = {}
            for m in range(e + 1):
                w = math.comb(e, m) * delta[j] ** (e - m)
                if w == 0:
                    continue
                for key, val in terms.items():
                    nk = tuple(x + (m if i == j else 0) for i, x in enumerate(key))
                    new_terms[nk] = new_terms.get(nk, 0.0) + val * w
            terms = new_terms
        for key, val in terms.items():
            if sum(key) > max_deg or val == 0:
                continue
            v = out.get(key, 0.0) + val
            if v == 0:
                out.pop(key, None)
            else:
                out[key] = v
    return out


def poly_eval_at_series(p: dict, args: list["FourierTaylorSeries"],
                        cutoff="sum") -> "FourierTaylorSeries":
    """Evaluate a polynomial with series arguments: p(g_1, ..., g_d).

    Used for integrands like Hess(rho + tau * S_theta) where the shifted
    argument is itself a series.  Exact up to the ambient Taylor degree.
    """
    if not args:
        raise ValueError("need at least one argument series")
    proto = args[0]
    out = proto.zero_like()
    deg = max((sum(a) for a in p), default=0)
    # power cache per variable
    pows: list[list[FourierTaylorSeries]] = []
    for g in args:
        col = [proto.one_like()]
        for _ in range(deg):
            col.append(col[-1].multiply(g, cutoff=cutoff))
        pows.append(col)
    for a, c in p.items():
        term = proto.one_like() * c
        for j, e in enumerate(a):
            if e:
                term = term.multiply(pows[j][e], cutoff=cutoff)
        out = out + term
    return out


# ---------------------------------------------------------------------------
# the series type
# ---------------------------------------------------------------------------

class FourierTaylorSeries:
    """Truncated Fourier series with Taylor-polynomial action dependence."""

    __slots__ = ("d", "center", "taylor_degree", "angle_cutoff", "coeffs")

    def __init__(self, d: int, center, taylor_degree: int,
                 coeffs: dict | None = None, angle_cutoff: int | None = None):
        self.d = int(d)
        c = np.asarray(center, dtype=float).reshape(-1).copy()
        if c.size != self.d:
            raise ValueError(f"center has length {c.size}, expected d={self.d}")
        c.setflags(write=False)
        self.center = c
        self.taylor_degree = int(taylor_degree)
        if self.taylor_degree < 0:
            raise ValueError("taylor_degree must be nonnegative")
        coeffs = {} if coeffs is None else coeffs
        clean: dict = {}
        max_order = 0
        for mode, poly in coeffs.items():
            k, l = mode
            k = tuple(int(x) for x in k)
            if len(k) != self.d:
                raise ValueError(f"mode {mode} has wrong angle dimension")
            poly = {tuple(int(x) for x in a): complex(v) for a, v in poly.items() if v != 0}
            for a in poly:
                if len(a) != self.d or sum(a) > self.taylor_degree or min(a) < 0:
                    raise ValueError(f"bad monomial {a} for degree {self.taylor_degree}")
            if not poly:
                continue
            m = (k, int(l))
            clean[m] = poly
            max_order = max(max_order, mode_order(m))
        if angle_cutoff is None:
            angle_cutoff = max_order
        self.angle_cutoff = int(angle_cutoff)
        if max_order > self.angle_cutoff:
            raise ValueError(
                f"stored mode order {max_order} exceeds angle_cutoff {self.angle_cutoff}"
            )
        self.coeffs = clean

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, d: int, center, taylor_degree: int = 2) -> "FourierTaylorSeries":
        return cls(d, center, taylor_degree, {})

    @classmethod
    def constant(cls, value, d: int, center, taylor_degree: int = 2) -> "FourierTaylorSeries":
        zero_a = tuple([0] * d)
        return cls(d, center, taylor_degree,
                   {(zero_a, 0): {zero_a: complex(value)}} if value != 0 else {})

    @classmethod
    def harmonic(cls, k, l: int, coeff, d: int, center, taylor_degree: int = 2,
                 conjugate_pair: bool = False) -> "FourierTaylorSeries":
        """exp(i(<k,theta> + l t)) scaled by coeff; optionally plus the conjugate mode."""
        k = tuple(int(x) for x in k)
        zero_a = tuple([0] * d)
        coeffs = {(k, int(l)): {zero_a: complex(coeff)}}
        if conjugate_pair:
            mk = tuple(-x for x in k)
            coeffs[(mk, -int(l))] = {zero_a: complex(coeff).conjugate()}
        return cls(d, center, taylor_degree, coeffs)

    @classmethod
    def cosine(cls, k, l: int, amplitude: float, d: int, center,
               taylor_degree: int = 2) -> "FourierTaylorSeries":
        """amplitude * cos(<k,theta> + l t)."""
        return cls.harmonic(k, l, amplitude / 2.0, d, center, taylor_degree,
                            conjugate_pair=True)

    @classmethod
    def action_polynomial(cls, poly: dict, d: int, center,
                          taylor_degree: int = 2) -> "FourierTaylorSeries":
        """Pure action polynomial in powers of (I - center); no angle/time modes."""
        zero_k = tuple([0] * d)
        return cls(d, center, taylor_degree, {(zero_k, 0): dict(poly)})

    @classmethod
    def from_absolute_polynomial(cls, poly: dict, d: int, center,
                                 taylor_degree: int = 2) -> "FourierTaylorSeries":
        """Pure action polynomial given in powers of I itself; rebased exactly."""
        c = np.asarray(center, dtype=float).reshape(-1)
        deg = max((sum(a) for a in poly), default=0)
        if deg > taylor_degree:
            raise ValueError(
                f"polynomial degree {deg} exceeds taylor_degree {taylor_degree}"
            )
        centered = _poly_shift({tuple(a): complex(v) for a, v in poly.items()},
                               c, taylor_degree)
        return cls.action_polynomial(centered, d, c, taylor_degree)

    # -- small helpers -------------------------------------------------------

    def zero_like(self) -> "FourierTaylorSeries":
        return FourierTaylorSeries(self.d, self.center, self.taylor_degree, {},
                                   self.angle_cutoff)

    def one_like(self) -> "FourierTaylorSeries":
        return FourierTaylorSeries.constant(1.0, self.d, self.center, self.taylor_degree)

    def with_coeffs(self, coeffs: dict, angle_cutoff: int | None = None) -> "FourierTaylorSeries":
        return FourierTaylorSeries(self.d, self.center, self.taylor_degree, coeffs,
                                   self.angle_cutoff if angle_cutoff is None else angle_cutoff)

    def modes(self) -> Iterator[Mode]:
        return iter(self.coeffs)

    @property
    def n_modes(self) -> int:
        return len(self.coeffs)

    def is_zero(self) -> bool:
        return not self.coeffs

    def _check_center(self, other) -> None:
        if isinstance(other, FourierTaylorSeries):
            if other.d != self.d or not np.array_equal(other.center, self.center):
                raise CenterMismatch(
                    f"centers differ: {self.center.tolist()} vs {other.center.tolist()}"
                )
        elif isinstance(other, Domain):
            if other.d != self.d or not np.array_equal(other.center_array(), self.center):
                raise CenterMismatch(
                    f"domain center {list(other.center)} does not match series center "
                    f"{self.center.tolist()}"
                )

    # -- linear algebra -------------------------------------------------------

    def __add__(self, other: "FourierTaylorSeries") -> "FourierTaylorSeries":
        self._check_center(other)
        if other.taylor_degree != self.taylor_degree:
            raise ValueError("taylor degrees differ")
        out = {m: dict(p) for m, p in self.coeffs.items()}
        for m, p in other.coeffs.items():
            out[m] = _poly_add(out.get(m, {}), p)
            if not out[m]:
                del out[m]
        return self.with_coeffs(out, max(self.angle_cutoff, other.angle_cutoff))

    def __sub__(self, other: "FourierTaylorSeries") -> "FourierTaylorSeries":
        return self + (other * (-1.0))

    def __mul__(self, scalar) -> "FourierTaylorSeries":
        scalar = complex(scalar)
        if scalar == 0:
            return self.zero_like()
        return self.with_coeffs({m: _poly_scale(p, scalar) for m, p in self.coeffs.items()})

    __rmul__ = __mul__

    def multiply(self, other: "FourierTaylorSeries", cutoff="max",
                 degree: int | None = None) -> "FourierTaylorSeries":
        """Product of two series.

        ``cutoff='max'`` truncates product modes at max(cutoffs) (the default
        contract); ``'sum'`` keeps every product mode; an int sets the cutoff
        explicitly.  The Taylor degree truncates at the ambient degree unless
        ``degree`` lowers it.
        """
        self._check_center(other)
        if other.taylor_degree != self.taylor_degree:
            raise ValueError("taylor degrees differ")
        if cutoff == "max":
            kcut = max(self.angle_cutoff, other.angle_cutoff)
        elif cutoff == "sum":
            kcut = self.angle_cutoff + other.angle_cutoff
        else:
            kcut = int(cutoff)
        deg = self.taylor_degree if degree is None else min(degree, self.taylor_degree)
        out: dict = {}
        for (k1, l1), p1 in self.coeffs.items():
            for (k2, l2), p2 in other.coeffs.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                l = l1 + l2
                if mode_order((k, l)) > kcut:
                    continue
                prod = _poly_mul(p1, p2, deg)
                if not prod:
                    continue
                key = (k, l)
                out[key] = _poly_add(out.get(key, {}), prod)
                if not out[key]:
                    del out[key]
        return FourierTaylorSeries(self.d, self.center, self.taylor_degree, out, kcut)

    # -- calculus -------------------------------------------------------------

    def derive(self, kind: str, j: int = 0) -> "FourierTaylorSeries":
        """Partial derivative: kind in {'theta', 't', 'action'}."""
        out: dict = {}
        if kind == "theta":
            for (k, l), p in self.coeffs.items():
                if k[j] == 0:
                    continue
                out[(k, l)] = _poly_scale(p, 1j * k[j])
        elif kind == "t":
            for (k, l), p in self.coeffs.items():
                if l == 0:
                    continue
                out[(k, l)] = _poly_scale(p, 1j * l)
        elif kind == "action":
            if self.taylor_degree < 1:
                raise DomainError("cannot differentiate a degree-0 action polynomial")
            for m, p in self.coeffs.items():
                dp = _poly_diff(p, j)
                if dp:
                    out[m] = dp
        else:
            raise ValueError(f"unknown derivative kind {kind!r}")
        return self.with_coeffs(out)

    def t_integral_from_zero(self) -> "FourierTaylorSeries":
        """Exact integral int_0^t f(.., xi, ..) dxi; requires zero t-mean per k."""
        out: dict = {}
        const_acc: dict = {}
        for (k, l), p in self.coeffs.items():
            if l == 0:
                if _poly_majorant(p, 1.0) > 0:
                    raise DomainError("t-integral needs zero t-mean in every angle mode")
                continue
            scaled = _poly_scale(p, 1.0 / (1j * l))
            out[(k, l)] = _poly_add(out.get((k, l), {}), scaled)
            key0 = (k, 0)
            const_acc[key0] = _poly_add(const_acc.get(key0, {}), _poly_scale(scaled, -1.0))
        for key0, p in const_acc.items():
            if p:
                out[key0] = _poly_add(out.get(key0, {}), p)
                if not out[key0]:
                    del out[key0]
        return self.with_coeffs(out)

    def zero_mode(self, over: str = "theta") -> "FourierTaylorSeries":
        """Average over selected angle variables.

        ``over='theta'`` keeps k = 0 modes (retaining t-dependence);
        ``over='theta_t'`` keeps only the (0, 0) space-time mean.
        """
        zero_k = tuple([0] * self.d)
        out = {}
        for (k, l), p in self.coeffs.items():
            if k != zero_k:
                continue
            if over == "theta" or (over == "theta_t" and l == 0):
                out[(k, l)] = dict(p)
        if over not in ("theta", "theta_t"):
            raise ValueError(f"unknown averaging selector {over!r}")
        return self.with_coeffs(out)

    def split_by_cutoff(self, K: int) -> tuple["FourierTaylorSeries", "FourierTaylorSeries"]:
        """Exact partition into modes of order <= K and > K."""
        if K < 0:
            raise ValueError("cutoff must be nonnegative")
        low, high = {}, {}
        for m, p in self.coeffs.items():
            (low if mode_order(m) <= K else high)[m] = dict(p)
        return (FourierTaylorSeries(self.d, self.center, self.taylor_degree, low,
                                    min(self.angle_cutoff, int(K))),
                self.with_coeffs(high))

    # -- norms and checks ------------------------------------------------------

    def majorant_norm(self, dom: Domain | None = None, *, s: float | None = None,
                      r: float | None = None) -> float:
        if dom is not None:
            self._check_center(dom)
            s, r = dom.s, dom.r
        if s is None or r is None:
            raise ValueError("need a Domain or explicit s and r")
        if s < 0 or r < 0:
            raise DomainError("majorant norm needs nonnegative widths")
        total = 0.0
        for m, p in self.coeffs.items():
            total += _poly_majorant(p, r) * math.exp(mode_order(m) * s)
        return total

    def is_real_symmetric(self, tol: float = 1e-12) -> bool:
        """True when f is real for real arguments (conjugate-mode symmetry)."""
        scale = max((max(abs(c) for c in p.values()) for p in self.coeffs.values()),
                    default=0.0)
        thr = tol * max(1.0, scale)
        for (k, l), p in self.coeffs.items():
            mk = tuple(-x for x in k)
            q = self.coeffs.get((mk, -l), {})
            keys = set(p) | set(q)
            for a in keys:
                if abs(p.get(a, 0.0) - complex(q.get(a, 0.0)).conjugate()) > thr:
                    return False
        return True

    def real_part_series(self) -> "FourierTaylorSeries":
        """(f + conj(f))/2 where conj flips modes; symmetrizes reality."""
        out: dict = {}
        for (k, l), p in self.coeffs.items():
            out[(k, l)] = _poly_add(out.get((k, l), {}), _poly_scale(p, 0.5))
            mk = tuple(-x for x in k)
            conj_p = {a: complex(c).conjugate() * 0.5 for a, c in p.items()}
            out[(mk, -l)] = _poly_add(out.get((mk, -l), {}), conj_p)
        out = {m: p for m, p in out.items() if p}
        return self.with_coeffs(out)

    # -- structural ops ----------------------------------------------------------

    def recenter(self, new_center) -> "FourierTaylorSeries":
        """Exact polynomial rebase of the action expansion point."""
        new_center = np.asarray(new_center, dtype=float).reshape(-1)
        if new_center.size != self.d:
            raise ValueError("new center has wrong dimension")
        delta = new_center - self.center
        if not delta.any():
            return FourierTaylorSeries(self.d, new_center, self.taylor_degree,
                                       self.coeffs, self.angle_cutoff)
        out = {m: _poly_shift(p, delta, self.taylor_degree)
               for m, p in self.coeffs.items()}
        out = {m: p for m, p in out.items() if p}
        return FourierTaylorSeries(self.d, new_center, self.taylor_degree, out,
                                   self.angle_cutoff)

    def pruned(self, abs_tol: float, s: float = 0.0, r: float = 1.0) -> "FourierTaylorSeries":
        """Drop monomials with |c| r^|alpha| exp(order s) <= abs_tol.

        Callers gauging numerical noise should keep r at 1: scaling by a tiny
        domain radius would discard action-derivative coefficients whose
        dynamical effect is radius-independent.
        """
        if abs_tol <= 0:
            return self
        out: dict = {}
        for m, p in self.coeffs.items():
            w = math.exp(mode_order(m) * s)
            kept = {a: c for a, c in p.items() if abs(c) * (r ** sum(a)) * w > abs_tol}
            if kept:
                out[m] = kept
        return self.with_coeffs(out)

    def coeff_norm(self, s: float = 0.0) -> float:
        """Majorant with unit action gauge: sum |c_alpha| exp(order s)."""
        return self.majorant_norm(s=s, r=1.0)

    def restrict_cutoff(self, K: int) -> "FourierTaylorSeries":
        low, _ = self.split_by_cutoff(K)
        return low

    # -- evaluation -----------------------------------------------------------

    def evaluate(self, theta, t, action) -> complex | np.ndarray:
        """Evaluate at points; theta (d,) or (d,N), t scalar or (N,), action likewise."""
        th = np.asarray(theta, dtype=complex)
        single = th.ndim <= 1 and np.asarray(t).ndim == 0
        th = th.reshape(self.d, -1)
        n = th.shape[1]
        tv = np.broadcast_to(np.asarray(t, dtype=complex).reshape(-1), (n,))
        act = np.asarray(action, dtype=complex).reshape(self.d, -1)
        act = np.broadcast_to(act, (self.d, n))
        y = act - self.center[:, None]
        acc = np.zeros(n, dtype=complex)
        for (k, l), p in self.coeffs.items():
            phase = np.exp(1j * (np.asarray(k, dtype=float) @ th + l * tv))
            acc = acc + _poly_eval(p, y) * phase
        return acc[0] if single else acc

    # -- serialization ----------------------------------------------------------

    def to_record(self) -> dict:
        modes = []
        for (k, l), p in sorted(self.coeffs.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            poly = [
                {"alpha": list(a), "re": complex(c).real, "im": complex(c).imag}
                for a, c in sorted(p.items())
            ]
            modes.append({"k": list(k), "l": int(l), "poly": poly})
        return {
            "d": self.d,
            "center": [float(c) for c in self.center],
            "taylor_degree": self.taylor_degree,
            "angle_cutoff": self.angle_cutoff,
            "modes": modes,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "FourierTaylorSeries":
        try:
            coeffs = {}
            for entry in rec["modes"]:
                poly = {tuple(term["alpha"]): complex(term["re"], term["im"])
                        for term in entry["poly"]}
                coeffs[(tuple(entry["k"]), int(entry["l"]))] = poly
            return cls(rec["d"], rec["center"], rec["taylor_degree"], coeffs,
                       rec["angle_cutoff"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SerializationError(f"bad series record: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_record())

    @classmethod
    def from_json(cls, text: str) -> "FourierTaylorSeries":
        return cls.from_record(json.loads(text))

    def __repr__(self) -> str:
        return (f"FourierTaylorSeries(d={self.d}, modes={self.n_modes}, "
                f"degree={self.taylor_degree}, cutoff={self.angle_cutoff})")


# ---------------------------------------------------------------------------
# action-polynomial calculus used by frequency maps and Newton anchoring
# ---------------------------------------------------------------------------

def action_gradient(h: FourierTaylorSeries, point) -> np.ndarray:
    """Gradient in the action variables of a (t-independent) series at a point."""
    point = np.asarray(point, dtype=float)
    zeros = np.zeros(h.d)
    out = np.empty(h.d, dtype=complex)
    for j in range(h.d):
        out[j] = h.derive("action", j).evaluate(zeros, 0.0, point)
    if np.max(np.abs(out.imag)) < 1e-13 * max(1.0, np.max(np.abs(out.real))):
        return out.real
    return out


def action_hessian(h: FourierTaylorSeries, point) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    zeros = np.zeros(h.d)
    out = np.empty((h.d, h.d), dtype=complex)
    for i in range(h.d):
        di = h.derive("action", i)
        for j in range(h.d):
            out[i, j] = di.derive("action", j).evaluate(zeros, 0.0, point)
    if np.max(np.abs(out.imag)) < 1e-13 * max(1.0, np.max(np.abs(out.real))):
        return out.real
    return out
