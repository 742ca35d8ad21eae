"""Functions of the square root of a discrete mode operator.

Ground truth is the eigendecomposition.  The cosine representation
``f(sqrt A) = (1/2 pi) int fhat(lam) cos(lam sqrt A) d lam`` is evaluated by
trapezoid quadrature over propagator snapshots and compared against it.
Only even ``f`` are in scope.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .operators import DiscreteOperator


class FunctionalCalculusError(ValueError):
    pass


class ConditioningWarning(UserWarning):
    pass


@dataclass
class SpectralDecomposition:
    """Eigenpairs of ``A = M^{-1} K`` with ``V^T M V = I``."""

    values: np.ndarray
    vectors: np.ndarray
    mass: np.ndarray

    @classmethod
    def of(cls, op: DiscreteOperator) -> "SpectralDecomposition":
        d, e = op.symmetric_bands()
        lam, Y = linalg.eigh_tridiagonal(d, e)
        # fix signs: first non-negligible entry of each eigenvector is positive
        lead = np.argmax(np.abs(Y) > 1e-8 * np.abs(Y).max(axis=0), axis=0)
        Y = Y * np.sign(Y[lead, np.arange(Y.shape[1])])
        return cls(lam, Y / np.sqrt(op.mass)[:, None], op.mass)

    def coefficients(self, f: np.ndarray) -> np.ndarray:
        return self.vectors.T @ (self.mass * f)

    def apply_function(self, func: Callable, f: np.ndarray) -> np.ndarray:
        return self.vectors @ (func(self.values) * self.coefficients(f))

    def matrix_function(self, func: Callable) -> np.ndarray:
        """Dense ``func(A)`` acting on interior values."""
        return (self.vectors * func(self.values)) @ (self.vectors.T * self.mass)

    def orthonormality_defect(self) -> float:
        G = self.vectors.T @ (self.vectors * self.mass[:, None])
        return float(np.max(np.abs(G - np.eye(G.shape[0]))))

    def residual(self, op: DiscreteOperator) -> float:
        """``max_j ||A v_j - lam_j v_j||_w / ||A||``."""
        R = np.column_stack([op.apply(v) for v in self.vectors.T]) - self.vectors * self.values
        norms = np.sqrt(np.sum(R**2 * self.mass[:, None], axis=0))
        return float(norms.max() / max(abs(self.values).max(), 1e-300))


# --------------------------------------------------------------------------
# wave propagator


@dataclass
class PropagatorResult:
    values: np.ndarray
    method: str
    leakage: float
    energy_drift: float = 0.0
    dt: float | None = None


def _support_distance(op: DiscreteOperator, f0: np.ndarray, rel_tol: float = 1e-14) -> np.ndarray:
    """Arclength distance from each node to the support of ``f0``."""
    s = op.distance
    peak = np.max(np.abs(f0))
    supp = s[np.abs(f0) > rel_tol * peak] if peak > 0 else s[:0]
    if supp.size == 0:
        return np.full_like(s, np.inf)
    idx = np.searchsorted(supp, s)
    left = np.abs(s - supp[np.clip(idx - 1, 0, supp.size - 1)])
    right = np.abs(supp[np.clip(idx, 0, supp.size - 1)] - s)
    return np.minimum(left, right)


def leakage(op: DiscreteOperator, f0: np.ndarray, fs: np.ndarray, radius: float) -> float:
    """Fraction of ``||fs||_w^2`` lying farther than ``radius`` from the support of ``f0``."""
    outside = _support_distance(op, f0) > radius
    weights = np.abs(fs) ** 2 * op.mass
    total = weights.sum()
    return float(weights[outside].sum() / total) if total > 0 else 0.0


def cfl_limit(op: DiscreteOperator) -> float:
    """Largest stable leapfrog step ``2 / sqrt(lambda_max(A))``."""
    d, e = op.symmetric_bands()
    top = linalg.eigh_tridiagonal(d, e, eigvals_only=True, select="i",
                                  select_range=(op.size - 1, op.size - 1))[0]
    return 2.0 / math.sqrt(top)


def leapfrog(op: DiscreteOperator, f0: np.ndarray, s: float, dt: float | None = None,
             safety: float = 0.5):
    """Three-level stepping for ``u_tt = -A u``, ``u(0) = f0``, ``u_t(0) = 0``.

    Returns ``(u(s), relative drift of the conserved discrete energy, dt)``.
    """
    limit = cfl_limit(op)
    if dt is None:
        steps = max(1, math.ceil(abs(s) / (safety * limit)))
        dt = abs(s) / steps if s else safety * limit
    elif dt >= limit:
        raise FunctionalCalculusError(f"time step {dt:.3g} violates CFL; need dt < {limit:.6g}")
    steps = round(abs(s) / dt)
    if steps == 0:
        return np.array(f0, dtype=float), 0.0, dt
    if not math.isclose(steps * dt, abs(s), rel_tol=1e-9):
        raise FunctionalCalculusError("s must be an integer multiple of dt")
    u_prev = np.array(f0, dtype=float)
    u = u_prev - 0.5 * dt**2 * op.apply(u_prev)

    def energy(a, b):
        v = (b - a) / dt
        return float(np.sum(v * v * op.mass) + np.sum(op.apply(a) * b * op.mass))

    e0 = energy(u_prev, u)
    for _ in range(steps - 1):
        u_prev, u = u, 2 * u - u_prev - dt**2 * op.apply(u)
    e1 = energy(u_prev, u)
    return u, abs(e1 - e0) / max(abs(e0), 1e-300), dt


def cosine_propagator(op: DiscreteOperator, f0: np.ndarray, s: float, method: str = "spectral",
                      spectral: SpectralDecomposition | None = None, dt: float | None = None,
                      margin_cells: float = 5.0) -> PropagatorResult:
    """``cos(s sqrt A) f0`` plus the mass fraction outside ``B_{|s| + margin}(supp f0)``."""
    h = float(np.max(np.diff(op.coeffs.distance(op.nodes))))
    radius = abs(s) + margin_cells * h
    if method == "spectral":
        spectral = spectral or SpectralDecomposition.of(op)
        out = spectral.apply_function(lambda lam: np.cos(s * np.sqrt(np.maximum(lam, 0.0))), f0)
        return PropagatorResult(out, method, leakage(op, f0, out, radius))
    if method == "leapfrog":
        out, drift, used = leapfrog(op, f0, s, dt)
        return PropagatorResult(out, method, leakage(op, f0, out, radius), drift, used)
    raise FunctionalCalculusError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# cosine-transform functional calculus


@dataclass(frozen=True)
class TransformPair:
    """An even function ``f`` and its cosine transform ``fhat``."""

    name: str
    f: Callable
    fhat: Callable


def gaussian_pair(t: float) -> TransformPair:
    """``e^{-t x^2}`` and ``sqrt(pi/t) e^{-y^2/4t}``."""
    if t <= 0:
        raise FunctionalCalculusError("heat time must be positive")
    return TransformPair(f"gaussian(t={t})", lambda x: np.exp(-t * np.asarray(x) ** 2),
                         lambda y: math.sqrt(math.pi / t) * np.exp(-np.asarray(y) ** 2 / (4 * t)))


def resolvent_pair(lam0: float) -> TransformPair:
    """``1/(lam0 + x^2)`` and ``(pi/sqrt(lam0)) e^{-sqrt(lam0)|y|}``."""
    if lam0 <= 0:
        raise FunctionalCalculusError("resolvent shift must be positive")
    r = math.sqrt(lam0)
    return TransformPair(f"resolvent(lam0={lam0})", lambda x: 1.0 / (lam0 + np.asarray(x) ** 2),
                         lambda y: math.pi / r * np.exp(-r * np.abs(np.asarray(y))))


def choose_window(fhat: Callable, tol: float = 1e-10, start: float = 1.0, limit: float = 1e6) -> float:
    """Smallest doubling ``Lambda`` with ``|fhat| < tol * |fhat(0)|`` on ``[Lambda, 2 Lambda]``."""
    peak = abs(float(fhat(0.0)))
    if not np.isfinite(peak):
        raise FunctionalCalculusError("transform is not finite at 0")
    lam = start
    while lam <= limit:
        probe = np.abs(fhat(np.linspace(lam, 2 * lam, 257)))
        if np.all(probe < tol * max(peak, 1e-300)):
            return lam
        lam *= 2
    raise FunctionalCalculusError("transform does not decay on the quadrature window; not integrable")


def function_of_sqrt(op: DiscreteOperator, fhat: Callable, f0: np.ndarray,
                     spectral: SpectralDecomposition | None = None, window: float | None = None,
                     step: float | None = None, tol: float = 1e-10) -> np.ndarray:
    """``(1/pi) int_0^Lambda fhat(lam) cos(lam sqrt A) f0 d lam`` by the trapezoid rule.

    The default step ``pi / (sqrt(mu_max) + 1)`` keeps the quadrature alias
    of every eigenfrequency at least ``sqrt(mu_max)`` away.
    """
    spectral = spectral or SpectralDecomposition.of(op)
    window = window or choose_window(fhat, tol)
    roots = np.sqrt(np.maximum(spectral.values, 0.0))
    step = step or math.pi / (roots.max() + 1.0)
    m = max(2, math.ceil(window / step))
    lams = np.linspace(0.0, window, m + 1)
    wts = np.full(lams.size, lams[1] - lams[0])
    wts[[0, -1]] *= 0.5
    weights = wts * fhat(lams)
    # each snapshot cos(lam_j sqrt A) f0 is diagonal in the eigenbasis
    g = np.zeros_like(roots)
    for chunk in np.array_split(np.arange(lams.size), max(1, lams.size // 256)):
        g += np.cos(np.outer(roots, lams[chunk])) @ weights[chunk]
    return spectral.vectors @ (g / math.pi * spectral.coefficients(f0))


def heat_apply(op: DiscreteOperator, t: float, f0: np.ndarray,
               spectral: SpectralDecomposition | None = None) -> np.ndarray:
    if t <= 0:
        raise FunctionalCalculusError("heat time must be positive")
    spectral = spectral or SpectralDecomposition.of(op)
    return spectral.apply_function(lambda lam: np.exp(-t * lam), f0)


def resolvent_apply(op: DiscreteOperator, lam: complex, f0: np.ndarray) -> np.ndarray:
    """Solve ``(A - lam) u = f0`` with a banded solver."""
    d, e = op.symmetric_bands()
    ev = linalg.eigh_tridiagonal(d, e, eigvals_only=True)
    gap = float(np.min(np.abs(ev - lam)))
    if gap < 1e-8:
        warnings.warn(f"lambda is {gap:.2e} from an eigenvalue; solve is ill-conditioned",
                      ConditioningWarning, stacklevel=2)
    ab = np.zeros((3, op.size), dtype=complex)
    ab[0, 1:] = op.off
    ab[1] = op.diag - lam * op.mass
    ab[2, :-1] = op.off
    return linalg.solve_banded((1, 1), ab, op.mass * np.asarray(f0, dtype=complex))


# --------------------------------------------------------------------------
# weighted operator-norm growth


@dataclass
class GrowthFit:
    s: np.ndarray
    norms: np.ndarray
    C: float
    c: float
    residual: float
    envelope_C: float
    heat_bound_rows: list = field(default_factory=list)

    @property
    def heat_bound_passed(self) -> bool:
        return all(row["ok"] for row in self.heat_bound_rows)


def weighted_norm_of(spectral: SpectralDecomposition, beta: np.ndarray, func: Callable) -> float:
    """Operator norm of ``func(A)`` on ``L^2_beta`` via the similarity ``D^{1/2} F D^{-1/2}``."""
    Y = spectral.vectors * np.sqrt(spectral.mass)[:, None]
    sb = np.sqrt(beta)
    B = (sb[:, None] * Y * func(spectral.values)) @ (Y.T / sb)
    return float(linalg.svdvals(B)[0])


def weighted_opnorm_growth(op: DiscreteOperator, beta: np.ndarray, s_grid,
                           spectral: SpectralDecomposition | None = None,
                           heat_times=(0.5, 1.0, 2.0)) -> GrowthFit:
    """Scan ``||cos(s sqrt A)||_{L^2_beta}`` and fit ``log norm = log C + c |s|``.

    ``residual`` is the largest deviation of the log-norms from the fit.
    ``envelope_C`` lifts the fitted line to dominate every sample; it feeds
    the Gaussian check ``||e^{-tA}||_beta <= (1/pi) int |fhat| C e^{c lam}``.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (op.size,) or np.any(beta <= 0):
        raise FunctionalCalculusError("beta samples must be positive, one per interior node")
    spectral = spectral or SpectralDecomposition.of(op)
    s = np.abs(np.asarray(s_grid, dtype=float))
    roots = np.sqrt(np.maximum(spectral.values, 0.0))
    norms = np.array([weighted_norm_of(spectral, beta, lambda _, si=si: np.cos(si * roots)) for si in s])
    logs = np.log(norms)
    slope, icpt = np.polyfit(s, logs, 1)
    c = max(float(slope), 0.0)
    residual = float(np.max(np.abs(logs - (icpt + slope * s))))
    envelope_C = float(np.max(norms * np.exp(-c * s)))

    rows = []
    for t in heat_times:
        pair = gaussian_pair(t)
        lhs = weighted_norm_of(spectral, beta, lambda lam: np.exp(-t * lam))
        lam = np.linspace(0, max(s.max(), 1.0), 4001)
        integrand = np.abs(pair.fhat(lam)) * envelope_C * np.exp(c * lam)
        bound = float(np.trapezoid(integrand, lam) / math.pi)
        rows.append({"t": t, "norm": lhs, "bound": bound, "ok": lhs <= bound * (1 + 1e-9)})
    return GrowthFit(s, norms, math.exp(icpt), c, residual, envelope_C, rows)
