"""Heat-semigroup differences, Schatten norms and the trace-class hypotheses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg

from .decay import DecayProfile
from .funcalc import SpectralDecomposition
from .geometry import WarpedMetric, bounded_ratio, injectivity_envelope
from .operators import (DiscreteOperator, EndModel, GridSpec, Perturbation, build_mode_operator,
                        perturb_operator)

DEFAULT_CAP = 4000


class SchattenCapError(ValueError):
    pass


@dataclass
class SchattenReport:
    singular_values: np.ndarray
    trace_norm: float
    hs_norm: float
    effective_rank: int


def schatten(A: np.ndarray, mass: np.ndarray | None = None, cap: int = DEFAULT_CAP) -> SchattenReport:
    """Singular values of ``A`` as an operator on ``L^2(mass)``."""
    A = np.asarray(A)
    if max(A.shape) > cap:
        raise SchattenCapError(f"matrix size {A.shape} exceeds cap {cap}; truncate the domain to "
                               f"at most {cap} nodes")
    if mass is not None:
        s = np.sqrt(np.asarray(mass, dtype=float))
        A = s[:, None] * A / s[None, :]
    sv = linalg.svdvals(A) if A.size else np.zeros(0)
    top = sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > 1e-12 * top)) if top > 0 else 0
    return SchattenReport(sv, float(sv.sum()), float(np.sqrt(np.sum(sv**2))), rank)


def _same_grid(op_g: DiscreteOperator, op_h: DiscreteOperator):
    if op_g.nodes.shape != op_h.nodes.shape or not np.allclose(op_g.nodes, op_h.nodes, rtol=0, atol=1e-14):
        raise ValueError("operators live on different grids")


def heat_difference(op_g: DiscreteOperator, op_h: DiscreteOperator, t: float,
                    sd_g: SpectralDecomposition | None = None,
                    sd_h: SpectralDecomposition | None = None) -> np.ndarray:
    """Dense ``e^{-t A_g} - e^{-t A_h}`` computed spectrally."""
    _same_grid(op_g, op_h)
    sd_g = sd_g or SpectralDecomposition.of(op_g)
    sd_h = sd_h or SpectralDecomposition.of(op_h)
    return sd_g.matrix_function(lambda l: np.exp(-t * l)) - sd_h.matrix_function(lambda l: np.exp(-t * l))


def duhamel_difference(op_g: DiscreteOperator, op_h: DiscreteOperator, t: float, m: int = 32,
                       sd_g: SpectralDecomposition | None = None,
                       sd_h: SpectralDecomposition | None = None) -> np.ndarray:
    """``int_0^t e^{-s A_g} (A_h - A_g) e^{-(t-s) A_h} ds`` by m-point Gauss-Legendre."""
    _same_grid(op_g, op_h)
    if m < 8:
        raise ValueError("need at least 8 quadrature nodes")
    sd_g = sd_g or SpectralDecomposition.of(op_g)
    sd_h = sd_h or SpectralDecomposition.of(op_h)
    diff = op_h.matrix() - op_g.matrix()
    nodes, weights = np.polynomial.legendre.leggauss(m)
    s_nodes = 0.5 * t * (nodes + 1)
    out = np.zeros_like(diff)
    for s, wt in zip(s_nodes, 0.5 * t * weights):
        Eg = sd_g.matrix_function(lambda l: np.exp(-s * l))
        Eh = sd_h.matrix_function(lambda l: np.exp(-(t - s) * l))
        out += wt * (Eg @ diff @ Eh)
    return out


def spectral_trace_difference(sd_g: SpectralDecomposition, sd_h: SpectralDecomposition, t: float) -> float:
    return float(np.sum(np.exp(-t * sd_g.values)) - np.sum(np.exp(-t * sd_h.values)))


# --------------------------------------------------------------------------
# trace-class hypotheses


@dataclass
class HypothesisReport:
    a: float
    b: float
    dim: int
    check_i: bool
    check_ii: bool
    integral: float
    tail_slope: float
    check_iii: bool
    sup_iii: float
    exponent_iii: float
    check_iii_alt: bool
    exponent_iii_alt: float

    @property
    def passed(self) -> bool:
        return self.check_i and self.check_ii and self.check_iii


def _log_volume_density(metric: WarpedMetric, xs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return metric.n * np.log(metric.evaluate(xs))


def check_trace_class_hypotheses(beta: DecayProfile, a: float, b: float, metric: WarpedMetric,
                               dim: int | None = None, x_max: float = 1e4,
                               sup_x_max: float = 60.0) -> HypothesisReport:
    """Evaluate conditions i) to iii) on a warped end.

    ii) integrates ``beta(1+x)^{b/3} phi(x)^n`` and calls it finite when the
    log-log slope of the integrand over the last decade is below ``-1``.
    iii) uses the exponent ``dim (dim+2)/2`` and, for comparison, also
    reports ``dim (dim+1)/2``.  ``dim`` defaults to the manifold dimension.
    """
    dim = metric.dim if dim is None else dim
    check_i = b >= 1 and math.isclose(a + b, 2.0, abs_tol=1e-12)

    def log_integrand(x):
        return b / 3 * beta.log(1 + x) + _log_volume_density(metric, x)

    tail = np.geomspace(x_max / 10, x_max, 200)
    lt = log_integrand(tail)
    if np.all(lt < -700):
        slope = -math.inf
    else:
        slope = float(np.polyfit(np.log(tail), lt, 1)[0])
    finite = slope < -(1 + 1e-3)
    integral = math.inf
    if finite:
        edges = np.concatenate([[0.0], np.geomspace(1.0, x_max, 41)])
        integral = sum(integrate.quad(lambda x: math.exp(float(log_integrand(np.array(x)))), lo, hi,
                                      limit=200)[0] for lo, hi in zip(edges[:-1], edges[1:]))
        if np.isfinite(slope) and lt[-1] > -700:
            integral += math.exp(lt[-1]) * x_max / (-slope - 1)

    xs = np.linspace(0.0, sup_x_max, 2001)
    inj = injectivity_envelope(metric, 0.0, xs)
    log_inj = np.log(inj(xs))

    def verdict(exponent):
        logq = a / 3 * beta.log(1 + xs) - exponent * log_inj
        v = bounded_ratio(xs, np.exp(np.clip(logq, -700, 700)))
        grow = float(np.polyfit(xs[xs >= xs[-1] / 2], logq[xs >= xs[-1] / 2], 1)[0])
        return v.passed and grow <= 1e-9 and np.all(logq < 700), float(np.exp(min(logq.max(), 700)))

    e_main = dim * (dim + 2) / 2
    e_alt = dim * (dim + 1) / 2
    ok, sup = verdict(e_main)
    ok_alt, _ = verdict(e_alt)
    return HypothesisReport(a, b, dim, check_i, finite, integral, slope, ok, sup, e_main, ok_alt, e_alt)


# --------------------------------------------------------------------------
# truncation stability and heat-kernel diagnostics


@dataclass
class TruncationRow:
    L: float
    points: int
    t: float
    trace_norm: float
    hs_norm: float
    increment: float


def truncation_stability(end: EndModel, mode: int, perturbation: Perturbation, t: float,
                         L_list, density: float = 4.0, x_min: float = 0.0) -> list[TruncationRow]:
    """Trace norm of ``e^{-tA_g} - e^{-tA_h}`` on ``[x_min, L]`` at fixed node density."""
    rows: list[TruncationRow] = []
    prev = None
    for L in L_list:
        pts = int(round(density * (L - x_min))) - 1
        op_g = build_mode_operator(end, mode, GridSpec(L, pts, start=x_min))
        op_h, _ = perturb_operator(op_g, perturbation)
        rep = schatten(heat_difference(op_g, op_h, t), op_g.mass)
        inc = math.nan if prev is None else (
            0.0 if prev == rep.trace_norm else abs(rep.trace_norm - prev) / max(prev, 1e-300))
        rows.append(TruncationRow(float(L), pts, t, rep.trace_norm, rep.hs_norm, inc))
        prev = rep.trace_norm
    return rows


@dataclass
class KernelEnvelope:
    c1: float
    C1: float
    expected: float


def heat_kernel_envelope(op: DiscreteOperator, t: float, min_distance: float = 1.0,
                         sd: SpectralDecomposition | None = None) -> KernelEnvelope:
    """Fit ``|k_t(x, y)| <= C1 exp(-c1 d^2)`` with ``d`` the arclength separation.

    ``k_t`` is the kernel with respect to the weighted measure; the
    envelope uses, per distance bin, the largest kernel value.
    """
    sd = sd or SpectralDecomposition.of(op)
    E = sd.matrix_function(lambda l: np.exp(-t * l))
    kernel = E / op.mass[None, :]
    s = op.distance
    D = np.abs(s[:, None] - s[None, :])
    bins = np.linspace(min_distance, D.max() * 0.5, 40)
    idx = np.digitize(D.ravel(), bins)
    vals = np.abs(kernel).ravel()
    d2, logk = [], []
    for i in range(1, len(bins)):
        sel = idx == i
        if np.any(sel) and vals[sel].max() > 1e-250:
            d2.append(bins[i - 1] ** 2)
            logk.append(math.log(vals[sel].max()))
    slope, icpt = np.polyfit(d2, logk, 1)
    C1 = float(np.max(np.exp(np.array(logk) - slope * np.array(d2))))
    return KernelEnvelope(float(-slope), C1, 1.0 / (4 * t))


def schatten_monotonicity(op: DiscreteOperator, beta: np.ndarray, power: int, times,
                          sd: SpectralDecomposition | None = None):
    """Trace norms of ``M_beta A^power e^{-tA}`` over ``times`` and whether they never increase."""
    sd = sd or SpectralDecomposition.of(op)
    norms = []
    for t in times:
        F = sd.matrix_function(lambda l: l**power * np.exp(-t * l))
        norms.append(schatten(np.asarray(beta)[:, None] * F, op.mass).trace_norm)
    norms = np.array(norms)
    return norms, bool(np.all(np.diff(norms) <= 1e-12 * norms[:-1]))
