"""Continuation of the free cusp resolvent across the threshold and resonances.

Everything is parametrized by the momentum ``z`` with ``lam = n^2/4 + z^2``.
``Im z > 0`` is the physical sheet; the continued kernels are entire in
``z``, so the second sheet is simply ``Im z <= 0`` and no square root of
``lam`` is ever taken.
"""

from __future__ import annotations

import cmath
import math
import time
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import linalg

from .decay import DecayProfile
from .operators import DiscreteOperator


class CompatibilityError(ValueError):
    pass


@dataclass(frozen=True)
class SheetCoordinate:
    z: complex
    n: int = 1

    @property
    def lam(self) -> complex:
        return self.n**2 / 4 + self.z**2

    @property
    def physical(self) -> bool:
        return self.z.imag > 0

    @classmethod
    def from_lambda(cls, lam: complex, n: int = 1, physical: bool = True) -> "SheetCoordinate":
        z = cmath.sqrt(complex(lam) - n**2 / 4)
        if (z.imag > 0) != physical or (z.imag == 0 and not physical):
            z = -z
        return cls(z, n)


# --------------------------------------------------------------------------
# model kernels in the u picture


def model_kernel(n: int, u: float, up: float, z: complex, variant: str = "dirichlet") -> complex:
    """Kernel of ``(L_0 - lam)^{-1}`` w.r.t. ``u'^{-(n+1)} du'`` with ``nu = -i z``.

    ``product`` is the decaying-solution product
    ``(u u')^{n/2} / nu * (u_< / u_>)^nu``; ``dirichlet`` is
    ``f1(u_<) f2(u_>) / (2 nu)`` with ``f1 = u^{n/2}(u^nu - u^{-nu})`` and
    ``f2 = u^{n/2 - nu}``, which vanishes at ``u = 1``.
    """
    if u < 1 or up < 1:
        raise ValueError("kernel is defined for u, u' >= 1")
    nu = -1j * complex(z)
    lo, hi = min(u, up), max(u, up)
    if variant == "product":
        return (u * up) ** (n / 2) / nu * (lo / hi) ** nu
    if variant == "dirichlet":
        if abs(nu) < 1e-12:
            return (u * up) ** (n / 2) * math.log(lo)
        f1 = lo ** (n / 2) * (lo**nu - lo ** (-nu))
        f2 = hi ** (n / 2 - nu)
        return f1 * f2 / (2 * nu)
    raise ValueError(f"unknown variant {variant!r}")


# --------------------------------------------------------------------------
# log-coordinate kernels


def continuum_kernel(x: np.ndarray, xp: np.ndarray, z: complex) -> np.ndarray:
    """``sin(z x_<) e^{i z x_>} / z`` (series limit ``x_<`` at ``z = 0``)."""
    lo = np.minimum.outer(x, xp)
    hi = np.maximum.outer(x, xp)
    if abs(z) < 1e-8:
        return lo.astype(complex)
    return np.sin(z * lo) * np.exp(1j * z * hi) / z


def discrete_kernel(idx: np.ndarray, jdx: np.ndarray, z: complex, h: float) -> np.ndarray:
    """Entries of ``(A_0 - lam)^{-1}`` for the uniform half-line grid ``x_j = j h``.

    ``theta = 2 arcsin(z h / 2)`` solves the discrete dispersion relation and
    the entries are ``h^2 sin(theta j_<) e^{i theta j_>} / sin(theta)``.
    """
    lo = np.minimum.outer(idx, jdx)
    hi = np.maximum.outer(idx, jdx)
    if abs(z) < 1e-8:
        return (h * h * lo).astype(complex)
    theta = 2 * np.arcsin(complex(z) * h / 2)
    return h * h * np.sin(theta * lo) * np.exp(1j * theta * hi) / np.sin(theta)


def _uniform_index(op: DiscreteOperator):
    x = op.interior
    h = float(op.nodes[1] - op.nodes[0])
    if op.formulation != "log_x" or not np.allclose(np.diff(op.nodes), h, rtol=1e-9):
        raise ValueError("continuation needs a uniform log-coordinate operator")
    return np.rint((x - op.nodes[0]) / h).astype(int), h


def continued_free_resolvent(op0: DiscreteOperator, z: complex, f: np.ndarray,
                             kind: str = "discrete") -> np.ndarray:
    """Apply the continued free resolvent at momentum ``z`` to ``f``.

    ``discrete`` reproduces the half-line matrix inverse exactly;
    ``continuum`` integrates the analytic kernel by the trapezoid rule.
    """
    idx, h = _uniform_index(op0)
    f = np.asarray(f, dtype=complex)
    if not np.any(f):
        return np.zeros_like(f)
    if kind == "discrete":
        return discrete_kernel(idx, idx, z, h) @ f
    if kind == "continuum":
        x = op0.interior - op0.nodes[0]
        return h * (continuum_kernel(x, x, z) @ f)
    raise ValueError(f"unknown kernel kind {kind!r}")


# --------------------------------------------------------------------------
# Birman-Schwinger


@dataclass
class BirmanSchwinger:
    support: np.ndarray
    D: np.ndarray
    h: float

    def block(self, z: complex) -> np.ndarray:
        """``K_S(z) = G_SS(z) D_SS``; ``det(I + K) = det(I_S + K_S)``."""
        return discrete_kernel(self.support, self.support, z, self.h) @ self.D

    def blocks(self, zs: np.ndarray) -> np.ndarray:
        lo = np.minimum.outer(self.support, self.support)
        hi = np.maximum.outer(self.support, self.support)
        theta = 2 * np.arcsin(np.asarray(zs, dtype=complex) * self.h / 2)[:, None, None]
        G = self.h**2 * np.sin(theta * lo) * np.exp(1j * theta * hi) / np.sin(theta)
        return G @ self.D

    def fredholm(self, z: complex) -> np.ndarray:
        return np.eye(self.support.size) + self.block(z)


def _difference_matrix(op_h: DiscreteOperator, op0: DiscreteOperator):
    A_h = np.zeros((op_h.size, 3))
    A_0 = np.zeros_like(A_h)
    for A, op in ((A_h, op_h), (A_0, op0)):
        A[:, 1] = op.diag / op.mass
        A[1:, 0] = op.off / op.mass[1:]
        A[:-1, 2] = op.off / op.mass[:-1]
    diff = A_h - A_0
    scale = np.abs(A_0).max()
    rows = np.nonzero(np.any(np.abs(diff) > 1e-14 * scale, axis=1))[0]
    if rows.size == 0:
        return np.zeros(0, dtype=int), np.zeros((0, 0))
    S = np.unique(np.clip(np.concatenate([rows - 1, rows, rows + 1]), 0, op_h.size - 1))
    pos = {s: k for k, s in enumerate(S)}
    D = np.zeros((S.size, S.size))
    for i in rows:
        for off, col in ((-1, 0), (0, 1), (1, 2)):
            j = i + off
            if 0 <= j < op_h.size and j in pos:
                D[pos[i], pos[j]] = diff[i, col]
    return S, D


def birman_schwinger(op0: DiscreteOperator, op_h: DiscreteOperator, compatibility=None) -> BirmanSchwinger:
    """Support block of ``K(z) = R_0(z) (A_h - A_0)``.

    ``compatibility`` is an optional ``WeightCheck``; a failed one refuses.
    """
    if compatibility is not None and not compatibility.passed:
        raise CompatibilityError(f"weight compatibility fails: beta^2 <= C i^(4n) rho delta zeta "
                                 f"has divergent tail (slope {compatibility.tail_slope:.3g})")
    if op_h.nodes.shape != op0.nodes.shape:
        raise ValueError("operators live on different grids")
    idx, h = _uniform_index(op0)
    S, D = _difference_matrix(op_h, op0)
    return BirmanSchwinger(idx[S], D, h)


def perturbed_resolvent_via_bs(bs: BirmanSchwinger, op0: DiscreteOperator, z: complex,
                               f: np.ndarray) -> np.ndarray:
    """``(I + K(z))^{-1} R_0(z) f`` by a Woodbury-type solve on the support block."""
    idx, h = _uniform_index(op0)
    r0f = continued_free_resolvent(op0, z, f)
    if bs.support.size == 0:
        return r0f
    pos = np.searchsorted(idx, bs.support)
    uS = linalg.solve(bs.fredholm(z), r0f[pos])
    G_colS = discrete_kernel(idx, bs.support, z, h)
    return r0f - G_colS @ (bs.D @ uS)


# --------------------------------------------------------------------------
# resonances


@dataclass
class ResonanceReport:
    poles: list
    candidates: list
    window: tuple
    grid: tuple
    min_sv: np.ndarray = field(repr=False, default=None)
    re: np.ndarray = field(repr=False, default=None)
    im: np.ndarray = field(repr=False, default=None)
    seconds: float = 0.0


def _min_sv(bs: BirmanSchwinger, zs: np.ndarray, batch: int = 512) -> np.ndarray:
    out = np.empty(zs.size)
    eye = np.eye(bs.support.size)
    for k in range(0, zs.size, batch):
        blk = eye + bs.blocks(zs[k:k + batch])
        out[k:k + batch] = np.linalg.svd(blk, compute_uv=False)[:, -1]
    return out


def _newton(bs: BirmanSchwinger, z0: complex, tol: float = 1e-13, maxit: int = 60):
    """Secant iteration on ``1 / det``-free quantity: the smallest eigenvalue of ``I + K``."""

    def f(z):
        ev = np.linalg.eigvals(bs.fredholm(z))
        return ev[np.argmin(np.abs(ev))]

    z1 = z0 + 1e-4 * (1 + abs(z0))
    f0, f1 = f(z0), f(z1)
    for _ in range(maxit):
        if f1 == f0:
            break
        z2 = z1 - f1 * (z1 - z0) / (f1 - f0)
        z0, f0, z1 = z1, f1, z2
        f1 = f(z1)
        if abs(z1 - z0) < tol * (1 + abs(z1)):
            return z1, True
    return z1, abs(f1) < 1e-10


def winding_number(bs: BirmanSchwinger, center: complex, radius: float, samples: int = 256) -> int:
    """Zeros of ``det(I + K)`` inside a circle by the argument principle."""
    ts = np.linspace(0, 2 * math.pi, samples + 1)
    phases = []
    for t in ts:
        sign, _ = np.linalg.slogdet(bs.fredholm(center + radius * np.exp(1j * t)))
        phases.append(np.angle(sign))
    total = np.sum(np.angle(np.exp(1j * np.diff(phases))))
    return int(round(total / (2 * math.pi)))


def resonance_scan(bs: BirmanSchwinger, window=(0.2, 6.0, -3.0, -0.05), grid=(100, 100),
                   threshold: float = 0.2, drop: float = 1e-6) -> ResonanceReport:
    """Scan ``sigma_min(I + K(z))`` on a grid in the lower half-plane and refine minima.

    ``window`` is ``(re_min, re_max, im_min, im_max)``.  Confirmed poles have
    ``sigma_min < drop`` after refinement and winding number at least one.
    """
    start = time.perf_counter()
    re_min, re_max, im_min, im_max = window
    if re_min <= 0 <= re_max and im_min <= 0 <= im_max:
        raise ValueError("scan window must exclude z = 0")
    re = np.linspace(re_min, re_max, grid[0])
    im = np.linspace(im_min, im_max, grid[1])
    Z = re[None, :] + 1j * im[:, None]
    if bs.support.size == 0:
        return ResonanceReport([], [], tuple(window), tuple(grid), np.ones(Z.shape), re, im,
                               time.perf_counter() - start)
    sv = _min_sv(bs, Z.ravel()).reshape(Z.shape)
    padded = np.pad(sv, 1, constant_values=np.inf)
    is_min = np.ones(sv.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                is_min &= sv <= padded[1 + di:1 + di + sv.shape[0], 1 + dj:1 + dj + sv.shape[1]]
    spacing = max(re[1] - re[0], im[1] - im[0])
    poles, candidates, seen = [], [], []
    for i, j in zip(*np.nonzero(is_min & (sv < threshold))):
        z, ok = _newton(bs, complex(Z[i, j]))
        inside = re_min - spacing <= z.real <= re_max + spacing and im_min - spacing <= z.imag <= im_max + spacing
        if any(abs(z - s) < 1e-8 * (1 + abs(z)) for s in seen):
            continue
        svals = np.linalg.svd(bs.fredholm(z), compute_uv=False)
        entry = {"z": z, "lam": 0.25 + z**2, "min_sv": float(svals[-1]),
                 "rank": int(np.sum(svals < drop)), "seed": complex(Z[i, j])}
        if ok and inside and svals[-1] < drop:
            entry["winding"] = winding_number(bs, z, 0.5 * spacing)
            if entry["winding"] >= 1:
                seen.append(z)
                poles.append(entry)
                continue
        candidates.append(entry)
    poles.sort(key=lambda p: (p["z"].real, p["z"].imag))
    return ResonanceReport(poles, candidates, tuple(window), tuple(grid), sv, re, im,
                           time.perf_counter() - start)


def refine_pole(bs: BirmanSchwinger, z0: complex) -> complex:
    z, ok = _newton(bs, z0)
    if not ok:
        raise ValueError(f"pole refinement from {z0} did not converge")
    return z


def square_well_resonances(depth: float, width: float, seeds) -> list[complex]:
    """Roots of ``k cot(k w) = i z`` with ``k = sqrt(z^2 + depth)``, from the given seeds.

    The equation is even in ``k``, so the branch of the square root is irrelevant.
    """
    roots = []
    with mpmath.workdps(30):
        for s in seeds:
            def F(z):
                k = mpmath.sqrt(z * z + depth)
                return k * mpmath.cos(k * width) - 1j * z * mpmath.sin(k * width)
            try:
                r = complex(mpmath.findroot(F, mpmath.mpc(s)))
            except (ValueError, ZeroDivisionError):
                continue
            if not any(abs(r - q) < 1e-9 for q in roots):
                roots.append(r)
    return roots


# --------------------------------------------------------------------------
# weight compatibility


@dataclass(frozen=True)
class WeightTriple:
    delta: DecayProfile
    rho: DecayProfile
    zeta: DecayProfile


@dataclass
class WeightCheck:
    C: float
    passed: bool
    tail_slope: float


def weight_compatibility_check(beta: DecayProfile, triple: WeightTriple, log_inj, dim: int,
                               d_max: float = 400.0, points: int = 4001) -> WeightCheck:
    """``C = sup beta^2 / (i^{4 dim} rho delta zeta)`` over distances ``[0, d_max]``.

    ``log_inj(d)`` returns the log of the modified injectivity radius.  The
    check passes when the log-ratio has non-positive slope on the upper half
    of the grid.
    """
    d = np.linspace(0.0, d_max, points)
    x = 1 + d
    log_ratio = (2 * beta.log(x) - 4 * dim * log_inj(d)
                 - triple.rho.log(x) - triple.delta.log(x) - triple.zeta.log(x))
    tail = d >= d_max / 2
    slope = float(np.polyfit(d[tail], log_ratio[tail], 1)[0])
    C = float(np.exp(min(log_ratio.max(), 700)))
    return WeightCheck(C, bool(slope <= 1e-9 and log_ratio.max() < 700), slope)


def extrapolated_poles(build, h0: float, seeds, levels: int = 3) -> list[complex]:
    """Refine poles on grids ``h0, h0/2, ...`` and Richardson-extrapolate in ``h^2``.

    ``build(h)`` returns a ``BirmanSchwinger`` for spacing ``h``.  Each level
    is seeded from the previous one.
    """
    table = []
    current = [complex(s) for s in seeds]
    for lvl in range(levels):
        bs = build(h0 / 2**lvl)
        current = [refine_pole(bs, z) for z in current]
        table.append(current)
    out = []
    for k in range(len(seeds)):
        col = [row[k] for row in table]
        for order in range(1, levels):
            f = 4**order
            col = [(f * col[i + 1] - col[i]) / (f - 1) for i in range(len(col) - 1)]
        out.append(col[0])
    return out
