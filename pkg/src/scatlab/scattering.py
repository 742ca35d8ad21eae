"""Scattering on the cusp mode-0 model in log coordinates.

With ``x = log u`` the free mode-0 operator is ``-d^2/dx^2 + n^2/4`` on the
half-line with a Dirichlet condition at ``x = 0``.  The generalized
eigenfunctions ``u^{n/2} (u^{i lam} - u^{-i lam})`` become ``2i sin(lam x)``
after the conjugation ``e^{-n x/2}``, so the spectral transform is the
unitary sine transform ``(F g)(lam) = sqrt(2/pi) int sin(lam x) g(x) dx``
and the spectral parameter is ``n^2/4 + lam^2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import integrate, linalg

from .funcalc import SpectralDecomposition
from .operators import DiscreteOperator, EndModel, GridSpec, build_mode_operator


class ScatteringError(ValueError):
    pass


class BandwidthWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# free model


def generalized_eigenfunction(u, lam, n: int):
    """``u^{n/2} (u^{i lam} - u^{-i lam})``; vanishes at ``u = 1``."""
    u = np.asarray(u, dtype=float)
    return 2j * u ** (n / 2) * np.sin(lam * np.log(u))


def spectral_parameter(lam, n: int):
    return n**2 / 4 + np.asarray(lam) ** 2


class CuspFreeModel:
    """Free mode-0 cusp model on ``x in [0, x_max]`` with ``points`` interior nodes."""

    def __init__(self, n: int = 1, x_max: float = 300.0, points: int = 2999,
                 lam_step: float | None = None, lam_max: float | None = None):
        self.n = n
        self.op = build_mode_operator(EndModel.cusp(n), 0, GridSpec(x_max, points), "log_x")
        self.x = self.op.interior
        self.h = float(self.x[1] - self.x[0])
        self.lam_step = lam_step or math.pi / (2 * x_max)
        self.lam_max = lam_max or math.pi / self.h
        self.lams = np.arange(0.0, self.lam_max + self.lam_step / 2, self.lam_step)
        self._sd = None

    @property
    def threshold(self) -> float:
        return self.n**2 / 4

    @property
    def spectral(self) -> SpectralDecomposition:
        if self._sd is None:
            self._sd = SpectralDecomposition.of(self.op)
        return self._sd

    def u(self) -> np.ndarray:
        return np.exp(self.x)

    def transform(self, g: np.ndarray, lams: np.ndarray | None = None) -> np.ndarray:
        """Sine transform of log-coordinate samples (trapezoid, zero at both ends)."""
        lams = self.lams if lams is None else lams
        Fg = math.sqrt(2 / math.pi) * self.h * (np.sin(np.outer(lams, self.x)) @ g)
        tail = lams >= 0.9 * lams[-1]
        total = np.sum(np.abs(Fg) ** 2)
        if total > 0 and np.sum(np.abs(Fg[tail]) ** 2) > 1e-12 * total:
            leak = float(np.sum(np.abs(Fg[tail]) ** 2) / total)
            warnings.warn(f"lambda grid does not resolve the bandwidth; tail energy {leak:.2e}",
                          BandwidthWarning, stacklevel=2)
        return Fg

    def inverse_transform(self, Fg: np.ndarray, lams: np.ndarray | None = None) -> np.ndarray:
        lams = self.lams if lams is None else lams
        wts = np.full(lams.size, lams[1] - lams[0])
        wts[[0, -1]] *= 0.5
        return math.sqrt(2 / math.pi) * (np.sin(np.outer(self.x, lams)) @ (wts * Fg))

    def transform_u(self, f_of_u: np.ndarray, lams: np.ndarray | None = None) -> np.ndarray:
        """Transform of samples in the ``u`` picture (``L^2(u^{-(n+1)} du)``)."""
        return self.transform(np.exp(-self.n * self.x / 2) * f_of_u, lams)

    def parseval_defect(self, g: np.ndarray) -> float:
        Fg = self.transform(g)
        wts = np.full(self.lams.size, self.lam_step)
        wts[[0, -1]] *= 0.5
        lhs = math.sqrt(float(np.sum(wts * np.abs(Fg) ** 2)))
        rhs = math.sqrt(float(self.h * np.sum(np.abs(g) ** 2)))
        return abs(lhs - rhs) / max(rhs, 1e-300)

    def packet(self, lam0: float, sigma: float, x0: float = 0.0, direction: str = "outgoing") -> np.ndarray:
        """Gaussian-in-lambda wave packet synthesized through the inverse transform.

        ``x0 > 0`` places the packet at ``x0``, moving outward (``outgoing``)
        or inward (``incoming``); ``x0 = 0`` gives a real standing packet at
        the origin.
        """
        if lam0 < 3 * sigma:
            raise ScatteringError("packet must sit at least 3 sigma above the threshold")
        sign = {"outgoing": -1.0, "incoming": 1.0}[direction]
        a = np.exp(-((self.lams - lam0) ** 2) / (2 * sigma**2)) * np.exp(1j * sign * self.lams * x0)
        return self.inverse_transform(a)

    def evolve(self, g: np.ndarray, t: float) -> np.ndarray:
        """``e^{-i t A_0} g``."""
        return self.spectral.apply_function(lambda mu: np.exp(-1j * t * mu), g)

    def center_of_mass(self, g: np.ndarray) -> float:
        w = np.abs(g) ** 2
        return float(np.sum(self.x * w) / np.sum(w))

    def group_velocity_fit(self, g: np.ndarray, times) -> float:
        """Slope of the center of mass over ``times``."""
        com = [self.center_of_mass(self.evolve(g, t)) for t in times]
        return float(np.polyfit(np.asarray(times, dtype=float), com, 1)[0])


# --------------------------------------------------------------------------
# Enss projections


@dataclass
class EnssProjections:
    """``P_plus``, ``P_minus`` in the eigen-coefficient space of the free operator."""

    P_plus: np.ndarray
    P_minus: np.ndarray
    mu: np.ndarray
    ac: np.ndarray

    def idempotency_defect(self) -> float:
        P = self.P_plus
        return float(linalg.norm(P @ P - P, 2))

    def hermiticity_defect(self) -> float:
        return float(linalg.norm(self.P_plus - self.P_plus.conj().T, 2))


def hilbert_matrix(mu: np.ndarray) -> np.ndarray:
    """Discrete Hilbert transform acting on ``phi(mu_k) sqrt(dmu_k)``.

    Only odd index offsets contribute, with weight ``2 / (pi (k - l))`` in
    local units; on a uniform grid this kernel has symbol exactly
    ``-i sgn`` (the plain ``1/(k - l)`` kernel has a sawtooth symbol).
    """
    dmu = np.gradient(mu)
    s = np.sqrt(dmu)
    k = np.arange(mu.size)
    odd = (k[:, None] - k[None, :]) % 2 == 1
    diff = mu[:, None] - mu[None, :]
    diff[~odd] = np.inf
    return 2 * (s[:, None] * s[None, :]) / (math.pi * diff)


def enss_projections(model: CuspFreeModel) -> EnssProjections:
    """Hardy-space splitting in the energy representation.

    ``P_plus`` keeps states whose energy-Fourier transform lives at positive
    times, so ``P_minus e^{-itA_0} f -> 0`` as ``t -> +inf``.
    """
    mu = model.spectral.values
    ac = mu >= model.threshold - 1e-12
    Hm = np.zeros((mu.size, mu.size))
    idx = np.nonzero(ac)[0]
    Hm[np.ix_(idx, idx)] = hilbert_matrix(mu[idx])
    Pac = np.diag(ac.astype(float))
    return EnssProjections(0.5 * (Pac - 1j * Hm), 0.5 * (Pac + 1j * Hm), mu, ac)


def enss_decay_curve(model: CuspFreeModel, proj: EnssProjections, g: np.ndarray, times,
                     which: str = "minus") -> np.ndarray:
    """``||P_which e^{-itA_0} g|| / ||g||`` over ``times``."""
    c = model.spectral.coefficients(g.astype(complex))
    P = proj.P_minus if which == "minus" else proj.P_plus
    norm = linalg.norm(c)
    return np.array([linalg.norm(P @ (np.exp(-1j * t * proj.mu) * c)) / norm for t in times])


# --------------------------------------------------------------------------
# stationary scattering


@dataclass
class ScatteringResult:
    lams: np.ndarray
    delta: np.ndarray
    S: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def unitarity_defect(self) -> float:
        return float(np.max(np.abs(np.abs(self.S) - 1)))


def free_region_start(op: DiscreteOperator, tol: float = 1e-10) -> float:
    """Smallest ``x`` beyond which the coefficients equal the free ones within ``tol``."""
    c = op.coeffs
    xs = np.linspace(op.nodes[0], op.nodes[-1], 200001)
    dev = np.maximum.reduce([np.abs(c.p(xs) - 1), np.abs(c.w(xs) - 1),
                             np.abs(c.q(xs) - op.n**2 / 4)])
    bad = np.nonzero(dev > tol)[0]
    start = float(xs[bad[-1] + 1]) if bad.size else float(xs[0])
    for b in c.breakpoints:
        start = max(start, float(b))
    return start


def _wrap_and_unwrap(delta: np.ndarray) -> np.ndarray:
    """Phase shifts modulo pi, made continuous and started in (-pi/2, pi/2]."""
    d = np.unwrap(2 * np.asarray(delta)) / 2
    shift = math.pi * math.floor((d[0] + math.pi / 2) / math.pi)
    return d - shift


def smatrix_stationary(op_h: DiscreteOperator, lams, free_from: float | None = None) -> ScatteringResult:
    """Phase shifts by shooting ``(p g')' = (q - E w) g`` from ``x = 0``.

    ``E = n^2/4 + lam^2``; the solution is matched to ``sin(lam x + delta)``
    where the coefficients become free.
    """
    lams = np.asarray(lams, dtype=float)
    if np.any(lams <= 0):
        raise ScatteringError("lambda must be positive: no propagating mode at or below threshold")
    if op_h.formulation not in ("log_x",):
        raise ScatteringError("stationary scattering runs on the log_x formulation")
    c = op_h.coeffs
    x0 = float(op_h.nodes[0])
    xf = free_region_start(op_h) if free_from is None else free_from
    if xf >= op_h.nodes[-1]:
        raise ScatteringError("perturbation does not decay inside the truncated domain")
    xf = max(xf, x0 + 1e-9)
    cuts = sorted({x0, xf, *[b for b in c.breakpoints if x0 < b < xf]})
    deltas = []
    for lam in lams:
        E = op_h.n**2 / 4 + lam**2

        y = np.array([0.0, 1.0])
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            pad = 1e-12 * max(1.0, abs(hi))

            # clamp so each piece only sees coefficients from its own side of a jump
            def rhs(x, y, lo=lo, hi=hi, pad=pad):
                xc = np.array(min(max(x, lo + pad), hi - pad))
                return [y[1] / c.p(xc), (c.q(xc) - E * c.w(xc)) * y[0]]

            sol = integrate.solve_ivp(rhs, (lo, hi), y, method="DOP853", rtol=1e-12, atol=1e-14,
                                      first_step=min(1e-3, (hi - lo) / 10))
            y = sol.y[:, -1]
        g, dg = y[0], y[1] / float(c.p(np.array(xf)))
        deltas.append(math.atan2(lam * g, dg) - lam * xf)
    delta = _wrap_and_unwrap(np.array(deltas))
    return ScatteringResult(lams, delta, np.exp(2j * delta), {"free_from": xf})


def square_well_phase(lams, depth: float, width: float) -> np.ndarray:
    """Closed-form Dirichlet half-line phase shift for the well ``-depth`` on ``[0, width)``."""
    lams = np.asarray(lams, dtype=float)
    k = np.sqrt(lams**2 + depth)
    return _wrap_and_unwrap(np.arctan(lams / k * np.tan(k * width)) - lams * width)


def phase_difference(d1, d2) -> np.ndarray:
    """Difference of phase shifts modulo pi, in (-pi/2, pi/2]."""
    return np.angle(np.exp(2j * (np.asarray(d1) - np.asarray(d2)))) / 2


# --------------------------------------------------------------------------
# time-dependent scattering


@dataclass
class WaveOperatorResult:
    times: np.ndarray
    cauchy_increments: np.ndarray
    isometry_defect: np.ndarray
    intertwining_defect: np.ndarray
    converged: bool

    @property
    def best(self) -> int:
        return int(np.argmin(self.intertwining_defect))


def _boundary_mass(model: CuspFreeModel, g: np.ndarray) -> float:
    w = np.abs(g) ** 2
    edge = model.x > 0.9 * model.x[-1]
    return float(np.sum(w[edge]) / np.sum(w))


def wave_operator(op_h: DiscreteOperator, model: CuspFreeModel, g: np.ndarray, times,
                  tol: float = 1e-6, sd_h: SpectralDecomposition | None = None) -> WaveOperatorResult:
    """Diagnostics of ``W(t) g = e^{itA_h} e^{-itA_0} g`` along ``times``."""
    sd_h = sd_h or SpectralDecomposition.of(op_h)
    times = np.asarray(times, dtype=float)
    norm_g = model.op.norm(g)
    prev = None
    incs, iso, inter = [], [], []
    for t in times:
        free = model.evolve(g, t)
        if _boundary_mass(model, free) > 1e-8:
            raise ScatteringError(f"packet reaches the truncation boundary by t = {t:g}; "
                                  f"use x_max > {2 * model.x[-1]:g}")
        W = sd_h.apply_function(lambda mu: np.exp(1j * t * mu), free)
        iso.append(abs(op_h.norm(W) - norm_g) / norm_g)
        inter.append(op_h.norm(op_h.apply(W) - sd_h.apply_function(
            lambda mu: np.exp(1j * t * mu), model.op.apply(free))) / norm_g)
        incs.append(math.nan if prev is None else op_h.norm(W - prev) / norm_g)
        prev = W
    incs = np.array(incs)
    converged = bool(np.isfinite(incs[-1]) and incs[-1] < tol)
    return WaveOperatorResult(times, incs, np.array(iso), np.array(inter), converged)


def time_dependent_smatrix(op_h: DiscreteOperator, model: CuspFreeModel, lam0: float, sigma: float,
                           T: float, sd_h: SpectralDecomposition | None = None) -> complex:
    """``<g, e^{iTA_0} e^{-2iTA_h} e^{iTA_0} g> / ||g||^2`` for a real packet at the origin."""
    sd_h = sd_h or SpectralDecomposition.of(op_h)
    g = model.packet(lam0, sigma)
    back = model.evolve(g, -T)
    if _boundary_mass(model, back) > 1e-8:
        raise ScatteringError("packet reaches the truncation boundary; enlarge x_max")
    mid = sd_h.apply_function(lambda mu: np.exp(-2j * T * mu), back)
    out = model.evolve(mid, -T)
    return complex(model.op.inner(g, out) / model.op.inner(g, g))


def packet_averaged_smatrix(model: CuspFreeModel, stationary: ScatteringResult, lam0: float,
                            sigma: float) -> complex:
    """``int |a|^2 S / int |a|^2`` for the Gaussian amplitude ``a`` of a packet."""
    a2 = np.exp(-((stationary.lams - lam0) ** 2) / sigma**2)
    return complex(np.trapezoid(a2 * stationary.S, stationary.lams) / np.trapezoid(a2, stationary.lams))


# --------------------------------------------------------------------------
# oscillatory integral


@dataclass(frozen=True)
class Bump:
    """Amplitude ``f(lam^2 + a)`` as a function of ``lam``."""

    kind: str = "gaussian"
    center: float = 1.0
    width: float = 0.1

    @property
    def inner_edge(self) -> float:
        """Distance from 0 below which the amplitude is treated as zero."""
        reach = 5 * self.width if self.kind == "gaussian" else self.width
        return self.center - reach

    @property
    def outer_edge(self) -> float:
        return self.center + (14 * self.width if self.kind == "gaussian" else self.width)

    def __call__(self, lam):
        if self.kind == "zero":
            return mpmath.mpf(0)
        if self.kind == "gaussian":
            return mpmath.exp(-((lam - self.center) ** 2) / (2 * self.width**2))
        s = (lam - self.center) / self.width
        return mpmath.exp(-1 / (1 - s * s)) if abs(s) < 1 else mpmath.mpf(0)


def oscillatory_integral(bump: Bump, u: float, t: float, dps: int = 40, degree: int = 4) -> complex:
    """``int_0^inf e^{2iu lam + i t lam^2} bump(lam) d lam`` by composite Gauss-Legendre in mpmath.

    Panels are no longer than a local oscillation period or a fifth of the
    bump width, each with ``3 * 2^(degree-1)`` nodes, so cancellation is
    resolved at ``dps`` digits.
    """
    if bump.kind == "zero":
        return 0j
    with mpmath.workdps(dps):
        lo = mpmath.mpf(0) if bump.kind == "gaussian" else mpmath.mpf(bump.center - bump.width)
        hi = mpmath.mpf(bump.outer_edge)
        gl = mpmath.calculus.quadrature.GaussLegendre(mpmath.mp)
        base = gl.get_nodes(-1, 1, degree, mpmath.mp.prec)
        panels = [lo]
        x = lo
        while x < hi:
            freq = abs(2 * u + 2 * t * float(x))
            step = min(2 * math.pi / max(freq, 1e-9), bump.width / 5)
            x = min(hi, x + step)
            panels.append(x)
        total = mpmath.mpc(0)
        for a, b in zip(panels[:-1], panels[1:]):
            half, mid = (b - a) / 2, (a + b) / 2
            for xi, wi in base:
                lam = mid + half * xi
                total += wi * half * mpmath.expj(2 * u * lam + t * lam * lam) * bump(lam)
        return complex(total)


def gaussian_oscillatory_closed_form(bump: Bump, u: float, t: float, dps: int = 40) -> complex:
    """Closed form of the same integral for the Gaussian bump (complete-the-square + erfc)."""
    with mpmath.workdps(dps):
        s2 = mpmath.mpf(bump.width) ** 2
        A = 1 / (2 * s2) - 1j * mpmath.mpf(t)
        B = mpmath.mpf(bump.center) / s2 + 2j * mpmath.mpf(u)
        C = mpmath.mpf(bump.center) ** 2 / (2 * s2)
        val = mpmath.exp(B * B / (4 * A) - C) * mpmath.sqrt(mpmath.pi / A) / 2 * mpmath.erfc(-B / (2 * mpmath.sqrt(A)))
        return complex(val)


@dataclass
class DecayFit:
    times: np.ndarray
    values: np.ndarray
    slope: float
    verdicts: dict


def oscillatory_decay_check(bump: Bump, u: float, times, orders=(1, 2, 3)) -> DecayFit:
    """Fit ``log|I(t)|`` against ``log t``; order ``m`` passes when the slope is ``<= -m + 0.1``."""
    times = np.asarray(times, dtype=float)
    eps = bump.inner_edge
    if bump.kind != "zero" and np.any(abs(u) >= eps * np.abs(times) / 2):
        raise ScatteringError(f"|u| = {abs(u)} violates |u| < eps |t| / 2 with eps = {eps}")
    vals = np.array([oscillatory_integral(bump, u, t) for t in times])
    mags = np.abs(vals)
    if np.all(mags == 0):
        return DecayFit(times, vals, -math.inf, {m: True for m in orders})
    slope = float(np.polyfit(np.log(times), np.log(mags), 1)[0])
    return DecayFit(times, vals, slope, {m: slope <= -m + 0.1 for m in orders})


# --------------------------------------------------------------------------
# Enss conditions


def smooth_bump(lo: float, hi: float):
    """``C_c^infty`` bump on ``(lo, hi)`` with peak 1."""
    c, r = (lo + hi) / 2, (hi - lo) / 2

    def f(mu):
        s = (np.asarray(mu, dtype=float) - c) / r
        out = np.zeros_like(s)
        inside = np.abs(s) < 1
        out[inside] = np.exp(1 - 1 / (1 - s[inside] ** 2))
        return out

    return f


def _symmetric_resolvent_columns(op: DiscreteOperator, z: complex, cols: np.ndarray) -> np.ndarray:
    """Columns of ``(M^{1/2} A M^{-1/2} - z)^{-1}``."""
    d, e = op.symmetric_bands()
    ab = np.zeros((3, op.size), dtype=complex)
    ab[0, 1:] = e
    ab[1] = d - z
    ab[2, :-1] = e
    rhs = np.zeros((op.size, cols.size), dtype=complex)
    rhs[cols, np.arange(cols.size)] = 1.0
    return linalg.solve_banded((1, 1), ab, rhs)


def resolvent_difference_factors(op_h: DiscreteOperator, op_0: DiscreteOperator, z: complex = 1j):
    """``R_h(z) - R_0(z) = U W^T`` in symmetric coordinates (potential perturbations)."""
    if not np.allclose(op_h.mass, op_0.mass):
        raise ScatteringError("resolvent factorization needs a shared measure")
    d_h, e_h = op_h.symmetric_bands()
    d_0, e_0 = op_0.symmetric_bands()
    dd, de = d_0 - d_h, e_0 - e_h
    touched = np.abs(dd) > 1e-15 * np.abs(d_0).max()
    touched[:-1] |= np.abs(de) > 0
    touched[1:] |= np.abs(de) > 0
    S = np.nonzero(touched)[0]
    if S.size == 0:
        return np.zeros((op_h.size, 0), complex), np.zeros((op_h.size, 0), complex)
    dA = np.diag(dd[S])
    for i in range(S.size - 1):
        if S[i + 1] == S[i] + 1:
            dA[i, i + 1] = dA[i + 1, i] = de[S[i]]
    U = _symmetric_resolvent_columns(op_h, z, S) @ dA
    W = _symmetric_resolvent_columns(op_0, z, S)
    return U, W


@dataclass
class EnssReport:
    condition1: dict
    condition2: dict
    condition3: dict
    condition4: dict

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in (self.condition1, self.condition2, self.condition3, self.condition4))


def verify_enss_conditions(op_h: DiscreteOperator, model: CuspFreeModel, alpha_window=(0.5, 1.5),
                           packet=(1.0, 0.15, 40.0), t_decay: float = 30.0,
                           t4=None) -> EnssReport:
    """Numerical surrogates for the four Enss conditions.

    ``alpha_window`` gives the support of the energy cutoff as momenta
    ``lam`` (energies ``n^2/4 + lam^2``); ``packet`` is ``(lam0, sigma, x0)``.
    """
    proj = enss_projections(model)
    sd0 = model.spectral
    lam0, sigma, x0 = packet

    out_pkt = model.packet(lam0, sigma, x0, "outgoing")
    in_pkt = model.packet(lam0, sigma, x0, "incoming")
    d_out = enss_decay_curve(model, proj, out_pkt, [t_decay], "minus")[0]
    d_in = enss_decay_curve(model, proj, in_pkt, [-t_decay], "plus")[0]
    c1 = {"outgoing_minus": float(d_out), "incoming_plus": float(d_in),
          "passed": bool(d_out < 0.01 and d_in < 0.01)}

    lo, hi = (model.threshold + l**2 for l in alpha_window)
    alpha = smooth_bump(lo, hi)
    sd_h = SpectralDecomposition.of(op_h)
    below = int(np.sum((alpha(sd0.values) > 0) & (sd0.values < model.threshold)))
    bound_h = int(np.sum(sd_h.values < model.threshold))
    c2 = {"rank_free": below, "bound_states_h": bound_h, "passed": True}

    U, W = resolvent_difference_factors(op_h, model.op)
    if U.shape[1]:
        qu, ru = linalg.qr(U, mode="economic")
        qw, rw = linalg.qr(W, mode="economic")
        sv = linalg.svdvals(ru @ rw.T)
    else:
        sv = np.zeros(1)
    c3 = {"rank_bound": int(U.shape[1]), "singular_values": sv[:10].tolist(),
          "passed": bool(U.shape[1] < model.op.size // 4)}

    t4 = np.geomspace(10, 100, 12) if t4 is None else np.asarray(t4)
    supp = np.nonzero(alpha(sd0.values) > 0)[0]
    Y = sd0.vectors[:, supp] * np.sqrt(sd0.mass)[:, None]
    G = U @ (W.T @ Y) if U.shape[1] else np.zeros((model.op.size, supp.size))
    a_s = alpha(sd0.values[supp])
    curves = {}
    for name, P in (("plus", proj.P_plus), ("minus", proj.P_minus)):
        rows = P[supp, :]
        Q = rows @ rows.conj().T
        Qh = linalg.sqrtm(Q)
        sign = 1.0 if name == "plus" else -1.0
        vals = []
        for t in t4:
            phase = np.exp(-1j * sign * t * sd0.values[supp]) * a_s
            vals.append(linalg.norm((G * phase) @ Qh, 2))
        curves[name] = np.array(vals)
    fits = {k: float(np.polyfit(np.log(t4), np.log(np.maximum(v, 1e-300)), 1)[0]) for k, v in curves.items()}
    c4 = {"times": t4.tolist(), "norms": {k: v.tolist() for k, v in curves.items()}, "slopes": fits,
          "passed": bool(all(s <= -2 for s in fits.values()))}
    return EnssReport(c1, c2, c3, c4)
