"""Analytic smoothing operators and dyadic decomposition of rough perturbations.

A radial C-infinity cutoff profile K_hat (identically 1 inside a plateau,
identically 0 outside a support ball) defines a family of convolution
smoothers S_s.  On our spectral representation S_s acts as the exact Fourier
multiplier K_hat(s * |xi|), which turns a series with finite mode support into
an entire function of the periodic variables; the action variable is already
analytic and is left untouched.

The decomposition writes an input as a telescoping sum of analytic pieces

    F_0 = S_{2 s_0} f,   F_{nu+1} = S_{2 s_{nu+1}} f - S_{2 s_nu} f,

each carrying a certified analyticity width.  Once the plateau covers every
stored mode the partial sums reconstruct the input exactly.

A one-dimensional quadrature path (`kernel_transform_1d`,
`validate_kernel_decay`) exists purely to validate the kernel profile against
its decay envelope; production smoothing never leaves mode space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError, QuadratureError, ScheduleError
from .series import FourierTaylorSeries, mode_order


@lru_cache(maxsize=32)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _bump(x: float) -> float:
    return math.exp(-1.0 / x) if x > 0.0 else 0.0


@dataclass(frozen=True)
class SmoothingKernel:
    """Radial spectral cutoff: 1 on |xi| <= plateau, 0 on |xi| >= a1, smooth between."""

    a1: float = 1.0
    plateau: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.plateau < self.a1):
            raise DomainError(
                f"need 0 < plateau < a1, got plateau={self.plateau}, a1={self.a1}"
            )

    def multiplier(self, xi_norm: float) -> float:
        """K_hat as a function of |xi| (Euclidean)."""
        if xi_norm <= self.plateau:
            return 1.0
        if xi_norm >= self.a1:
            return 0.0
        u = (xi_norm - self.plateau) / (self.a1 - self.plateau)
        up, dn = _bump(1.0 - u), _bump(u)
        return up / (up + dn)

    def multiplier_array(self, xi_norms: np.ndarray) -> np.ndarray:
        x = np.abs(np.ravel(np.asarray(xi_norms, dtype=float)))
        out = np.zeros_like(x)
        out[x <= self.plateau] = 1.0
        mid = (x > self.plateau) & (x < self.a1)
        if np.any(mid):
            u = (x[mid] - self.plateau) / (self.a1 - self.plateau)
            up = np.exp(-1.0 / (1.0 - u))
            dn = np.exp(-1.0 / u)
            out[mid] = up / (up + dn)
        return out


def _mode_euclid(mode) -> float:
    k, l = mode
    return math.sqrt(sum(float(x) ** 2 for x in k) + float(l) ** 2)


def smooth(f: FourierTaylorSeries, s: float, kernel: SmoothingKernel) -> FourierTaylorSeries:
    """Apply the analytic smoother at width s (spectral multiplier form)."""
    if not (0.0 < s <= 1.0):
        raise DomainError(f"smoothing width must lie in (0, 1], got {s}")
    out = {}
    for mode, poly in f.coeffs.items():
        w = kernel.multiplier(s * _mode_euclid(mode))
        if w == 0.0:
            continue
        out[mode] = poly if w == 1.0 else {a: c * w for a, c in poly.items()}
    return f.with_coeffs(out)


@dataclass(frozen=True)
class DecompositionSchedule:
    """Decreasing analyticity widths s_nu driving the dyadic decomposition."""

    s_list: tuple
    target_ell: float
    strict: bool = True

    def __post_init__(self):
        s = tuple(float(x) for x in self.s_list)
        object.__setattr__(self, "s_list", s)
        if len(s) < 1:
            raise ScheduleError("schedule needs at least one width")
        if any(x <= 0 for x in s):
            raise ScheduleError("widths must be positive")
        if any(b >= a for a, b in zip(s, s[1:])):
            raise ScheduleError("widths must be strictly decreasing")
        if self.strict and s[0] > 0.25:
            raise ScheduleError(f"leading width {s[0]} exceeds 1/4")

    @classmethod
    def geometric(cls, s0: float, ratio: float, depth: int, target_ell: float,
                  strict: bool = True) -> "DecompositionSchedule":
        if not (0.0 < ratio < 1.0):
            raise ScheduleError("ratio must lie in (0,1)")
        return cls(tuple(s0 * ratio ** j for j in range(depth)), target_ell, strict)


def decompose(f: FourierTaylorSeries, sched: DecompositionSchedule,
              kernel: SmoothingKernel) -> list[FourierTaylorSeries]:
    """Split f into analytic pieces F_nu with widths 2 s_nu, reconstructing exactly.

    Requires the final width to put every stored mode inside the kernel
    plateau, so the telescoping sum terminates at finite depth.
    """
    if f.coeffs:
        max_xi = max(_mode_euclid(m) for m in f.coeffs)
        if 2.0 * sched.s_list[-1] * max_xi > kernel.plateau:
            raise ScheduleError(
                "schedule too short for exact reconstruction: final width "
                f"{sched.s_list[-1]:.3e} leaves mode norm {max_xi:.3f} outside the plateau"
            )
    pieces = []
    prev_mult = {m: 0.0 for m in f.coeffs}
    for s in sched.s_list:
        out = {}
        for mode, poly in f.coeffs.items():
            w = kernel.multiplier(2.0 * s * _mode_euclid(mode))
            dw = w - prev_mult[mode]
            prev_mult[mode] = w
            if dw != 0.0:
                out[mode] = {a: c * dw for a, c in poly.items()}
        pieces.append(f.with_coeffs(out))
    return pieces


# ---------------------------------------------------------------------------
# kernel validation in one dimension (quadrature oracle)
# ---------------------------------------------------------------------------

def kernel_transform_1d(kernel: SmoothingKernel, x: float, y: float = 0.0,
                        beta: int = 0, nodes: int | None = None) -> complex:
    """K^{(beta)}(x + i y) by Gauss-Legendre quadrature of the spectral profile.

    K(z) = (1/2 pi) int K_hat(xi) exp(i z xi) d xi over the compact support.
    """
    if nodes is None:
        nodes = max(256, int(8 * kernel.a1 * (abs(x) + abs(y)) + 200))
    nodes = min(64 * ((nodes + 63) // 64), 4000)
    xs, ws = _leggauss(nodes)
    xi = xs * kernel.a1
    w = ws * kernel.a1
    khat = kernel.multiplier_array(np.abs(xi))
    z = complex(x, y)
    vals = khat * (1j * xi) ** beta * np.exp(1j * z * xi)
    out = np.sum(w * vals) / (2.0 * math.pi)
    # convergence check: double the nodes
    xs2, ws2 = _leggauss(2 * nodes)
    xi2 = xs2 * kernel.a1
    khat2 = kernel.multiplier_array(np.abs(xi2))
    out2 = np.sum(ws2 * kernel.a1 * khat2 * (1j * xi2) ** beta
                  * np.exp(1j * z * xi2)) / (2.0 * math.pi)
    if abs(out - out2) > 1e-9 * max(1.0, abs(out2)):
        raise QuadratureError(
            f"kernel transform did not converge at z={z}, beta={beta}"
        )
    return complex(out2)


@dataclass
class KernelDecayReport:
    kernel: SmoothingKernel
    j: int
    p: int
    c_fit: float
    passes: bool
    normalization: float
    rows: list = field(default_factory=list)  # (x, y, beta, |K^(beta)|, envelope/c)

    def envelope(self, x: float, y: float) -> float:
        return self.c_fit * (1.0 + abs(x)) ** (-self.p) * math.exp(self.kernel.a1 * abs(y))


def validate_kernel_decay(kernel: SmoothingKernel, j: int, p: int,
                          xs=None, ys=None) -> KernelDecayReport:
    """Check |K^{(beta)}(x+iy)| <= c (1+|x|)^{-p} e^{a1 |y|} on a grid, fitting c.

    Reports the smallest admissible constant for all |beta| <= j on the tested
    grid together with the kernel normalization int K = K_hat(0) = 1.
    """
    if j > 4 or p > 4:
        raise DomainError("decay validation supports j, p <= 4")
    if xs is None:
        xs = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
    if ys is None:
        ys = [0.0, 0.25, 0.5, 1.0, 2.0]
    rows = []
    c_fit = 0.0
    for beta in range(j + 1):
        for x in xs:
            for y in ys:
                val = abs(kernel_transform_1d(kernel, x, y, beta))
                shape = (1.0 + abs(x)) ** (-p) * math.exp(kernel.a1 * abs(y))
                c_fit = max(c_fit, val / shape)
                rows.append((float(x), float(y), int(beta), val, shape))
    norm = kernel_mass(kernel)
    passes = all(val <= c_fit * shape * (1.0 + 1e-12) for _, _, _, val, shape in rows) \
        and abs(norm - 1.0) < 1e-6
    return KernelDecayReport(kernel=kernel, j=j, p=p, c_fit=float(c_fit),
                             passes=bool(passes), normalization=norm, rows=rows)


def kernel_mass(kernel: SmoothingKernel, window: float = 400.0,
                nodes: int = 4000) -> float:
    """int_{-X}^{X} K(x) dx via the closed form (1/pi) int K_hat(xi) sin(X xi)/xi dxi.

    Converges to K_hat(0) = 1 as the window grows; the truncation tail decays
    superpolynomially for the smooth compactly supported profile.
    """
    xs, ws = _leggauss(nodes)
    xi = 0.5 * kernel.a1 * (xs + 1.0)  # map to (0, a1)
    w = 0.5 * kernel.a1 * ws
    khat = kernel.multiplier_array(xi)
    integrand = khat * np.sin(window * xi) / xi
    return float(2.0 / math.pi * np.sum(w * integrand))
