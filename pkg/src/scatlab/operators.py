"""Per-mode Laplacians on ends as symmetric Sturm-Liouville matrices.

Every operator has the form ``-(1/w)(p f')' + q f`` on nodes
``t_0 < ... < t_{N+1}`` with Dirichlet conditions at both ends.  The
finite-volume assembly gives a symmetric tridiagonal stiffness ``K`` and a
diagonal mass ``M`` (``w_i`` times the dual cell length), so ``A = M^{-1} K``
is exactly self-adjoint for ``<f, g>_w = sum f_i g_i M_i``.

Formulations of the cusp mode-k operator:

* ``cusp_u``  ``-u^2 f'' + (n-1) u f' + lambda_k u^2 f`` on ``L^2([1, L], u^{-(n+1)} du)``,
  i.e. ``p = u^{1-n}``, ``w = u^{-(n+1)}``, ``q = lambda_k u^2``;
* ``log_x``   ``-f'' + n^2/4 + lambda_k e^{2x}`` on ``L^2([0, log L], dx)``,
  conjugate to ``cusp_u`` through ``(V f)(x) = e^{-n x/2} f(e^x)``.

A cylinder mode is ``-f'' + mu_k`` on ``[0, L]``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .decay import DecayProfile


class OperatorConstructionError(ValueError):
    pass


class ResolutionWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# ends and coefficients


def torus_eigenvalues(n: int, side: float = 1.0, count: int = 32) -> np.ndarray:
    """Sorted Laplace eigenvalues ``(2 pi / side)^2 |m|^2`` of the flat n-torus."""
    reach = int(math.ceil(count ** (1.0 / max(n, 1)))) + 2
    grids = np.meshgrid(*[np.arange(-reach, reach + 1)] * n, indexing="ij")
    norms = sum(g.astype(float) ** 2 for g in grids).ravel()
    return np.sort(norms)[:count] * (2 * math.pi / side) ** 2


@dataclass(frozen=True)
class EndModel:
    """``kind`` is ``cusp`` (with cross-section dimension ``n``) or ``cylinder``."""

    kind: str
    n: int = 1
    eigenvalues: tuple = (0.0,)

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if ev.size == 0 or ev[0] != 0.0 or np.any(np.diff(ev) < 0) or np.any(ev < 0):
            raise OperatorConstructionError("mode eigenvalues must be sorted, nonnegative, starting at 0")
        if self.kind not in ("cusp", "cylinder"):
            raise OperatorConstructionError(f"unknown end kind {self.kind!r}")

    @property
    def k_max(self) -> int:
        return len(self.eigenvalues) - 1

    @property
    def threshold(self) -> float:
        return self.n**2 / 4 if self.kind == "cusp" else 0.0

    @classmethod
    def cusp(cls, n: int = 1, side: float = 1.0, modes: int = 8) -> "EndModel":
        return cls("cusp", n, tuple(torus_eigenvalues(n, side, modes)))

    @classmethod
    def cylinder(cls, circumference: float = 2 * math.pi, modes: int = 8) -> "EndModel":
        return cls("cylinder", 1, tuple(torus_eigenvalues(1, circumference, modes)))


@dataclass(frozen=True)
class Coefficients:
    """Continuous Sturm-Liouville coefficients in the operator coordinate ``t``.

    ``distance(t)`` is the arclength from the reference point and
    ``ddistance`` its derivative; ``breakpoints`` are coordinates where
    ``q`` jumps.
    """

    p: Callable
    dp: Callable
    w: Callable
    q: Callable
    distance: Callable
    ddistance: Callable
    breakpoints: tuple = ()


def _const(c):
    return lambda t: np.full_like(np.asarray(t, dtype=float), c)


def mode_coefficients(end: EndModel, mode: int, formulation: str) -> Coefficients:
    if not 0 <= mode <= end.k_max:
        raise OperatorConstructionError(f"mode {mode} outside 0..{end.k_max}")
    lam = float(end.eigenvalues[mode])
    if end.kind == "cylinder":
        return Coefficients(_const(1.0), _const(0.0), _const(1.0), _const(lam),
                            lambda t: np.asarray(t, dtype=float), _const(1.0))
    n = end.n
    if formulation == "cusp_u":
        return Coefficients(
            lambda u: np.asarray(u, dtype=float) ** (1 - n),
            lambda u: (1 - n) * np.asarray(u, dtype=float) ** (-n),
            lambda u: np.asarray(u, dtype=float) ** (-(n + 1)),
            lambda u: lam * np.asarray(u, dtype=float) ** 2,
            lambda u: np.log(u),
            lambda u: 1.0 / np.asarray(u, dtype=float),
        )
    if formulation == "log_x":
        if lam == 0.0:
            q = _const(n**2 / 4)
        else:
            def q(x):
                return n**2 / 4 + lam * np.exp(2 * np.asarray(x, dtype=float))
        return Coefficients(
            _const(1.0), _const(0.0), _const(1.0), q,
            lambda x: np.asarray(x, dtype=float), _const(1.0),
        )
    raise OperatorConstructionError(f"unknown formulation {formulation!r}")


# --------------------------------------------------------------------------
# discrete operator


@dataclass
class DiscreteOperator:
    nodes: np.ndarray
    mass: np.ndarray
    diag: np.ndarray
    off: np.ndarray
    left: float
    right: float
    coeffs: Coefficients
    mode: int = 0
    formulation: str = "log_x"
    provenance: str = ""
    n: int = 1

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    @property
    def size(self) -> int:
        return self.mass.size

    @property
    def distance(self) -> np.ndarray:
        return self.coeffs.distance(self.interior)

    def stiffness(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def matrix(self) -> np.ndarray:
        """Dense ``A = M^{-1} K`` acting on interior values."""
        return self.stiffness() / self.mass[:, None]

    def symmetric_bands(self):
        """Diagonal and off-diagonal of ``M^{-1/2} K M^{-1/2}``."""
        s = np.sqrt(self.mass)
        return self.diag / self.mass, self.off / (s[:-1] * s[1:])

    def apply(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        out = self.diag * f
        out[:-1] += self.off * f[1:]
        out[1:] += self.off * f[:-1]
        return out / self.mass

    def apply_full(self, f_full: np.ndarray) -> np.ndarray:
        """Apply to samples on all nodes, using the given boundary values."""
        f_full = np.asarray(f_full)
        out = self.apply(f_full[1:-1])
        out[0] += self.left * f_full[0] / self.mass[0]
        out[-1] += self.right * f_full[-1] / self.mass[-1]
        return out

    def inner(self, f, g) -> complex:
        return np.sum(np.conj(f) * g * self.mass)

    def norm(self, f) -> float:
        return float(np.sqrt(np.real(self.inner(f, f))))

    def lowest_eigenvalues(self, count: int = 1) -> np.ndarray:
        d, e = self.symmetric_bands()
        return linalg.eigh_tridiagonal(d, e, eigvals_only=True, select="i",
                                       select_range=(0, count - 1))

    def symmetry_defect(self, seed: int = 0) -> float:
        """Relative ``|<Af, g> - <f, Ag>|`` for random vectors."""
        rng = np.random.default_rng(seed)
        f, g = rng.standard_normal((2, self.size))
        a, b = self.inner(self.apply(f), g), self.inner(f, self.apply(g))
        return float(abs(a - b) / max(abs(a), abs(b), 1e-300))

    def to_banded_json(self) -> str:
        return json.dumps({
            "schema": "scatlab.banded/1",
            "provenance": self.provenance,
            "formulation": self.formulation,
            "mode": self.mode,
            "boundary": "dirichlet",
            "nodes": self.nodes.tolist(),
            "mass": self.mass.tolist(),
            "diag": self.diag.tolist(),
            "off": self.off.tolist(),
        })


def _sample_q(coeffs: Coefficients, t: np.ndarray) -> np.ndarray:
    q = np.asarray(coeffs.q(t), dtype=float).copy()
    for b in coeffs.breakpoints:
        hit = np.isclose(t, b, rtol=0, atol=1e-12 * max(1.0, abs(b)))
        if np.any(hit):
            eps = 1e-9 * max(1.0, abs(b))
            q[hit] = 0.5 * (coeffs.q(np.array([b - eps]))[0] + coeffs.q(np.array([b + eps]))[0])
    return q


def assemble(nodes: np.ndarray, coeffs: Coefficients, **meta) -> DiscreteOperator:
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 1 or nodes.size < 3 or np.any(np.diff(nodes) <= 0):
        raise OperatorConstructionError("nodes must be strictly increasing with at least 3 points")
    h = np.diff(nodes)
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    pm = np.asarray(coeffs.p(mid), dtype=float)
    t = nodes[1:-1]
    w = np.asarray(coeffs.w(t), dtype=float)
    if np.any(pm <= 0):
        bad = int(np.argmin(pm))
        raise OperatorConstructionError(f"ellipticity lost: p <= 0 near node t = {mid[bad]:.6g}")
    if np.any(w <= 0):
        bad = int(np.argmin(w))
        raise OperatorConstructionError(f"non-positive weight at node t = {t[bad]:.6g}")
    dual = 0.5 * (h[1:] + h[:-1])
    mass = w * dual
    flux = pm / h
    q = _sample_q(coeffs, t)
    diag = flux[1:] + flux[:-1] + q * mass
    off = -flux[1:-1]
    return DiscreteOperator(nodes, mass, diag, off, -flux[0], -flux[-1], coeffs, **meta)


@dataclass(frozen=True)
class GridSpec:
    """Nodes on ``[start, stop]`` with ``points`` interior unknowns."""

    stop: float
    points: int
    start: float | None = None
    spacing: str = "uniform"

    def nodes(self, default_start: float) -> np.ndarray:
        a = default_start if self.start is None else self.start
        if self.spacing == "geometric":
            return np.geomspace(a, self.stop, self.points + 2)
        return np.linspace(a, self.stop, self.points + 2)


def build_mode_operator(end: EndModel, mode: int, grid: GridSpec, formulation: str = "log_x",
                        lambda_max: float | None = None) -> DiscreteOperator:
    """Assemble the mode-``mode`` operator of ``end``.

    For ``cusp_u`` the grid coordinate is ``u`` (default start 1, geometric
    spacing recommended); for ``log_x`` and cylinders it is arclength.
    """
    if end.kind == "cylinder":
        formulation = "cylinder"
    coeffs = mode_coefficients(end, mode, "log_x" if formulation == "cylinder" else formulation)
    if end.kind == "cylinder":
        coeffs = mode_coefficients(end, mode, "cylinder")
    start = 1.0 if formulation == "cusp_u" else 0.0
    nodes = grid.nodes(start)
    if lambda_max is not None and lambda_max > 0:
        arc = np.diff(coeffs.distance(nodes)).max()
        per_wave = 2 * math.pi / math.sqrt(lambda_max) / arc
        if per_wave < 20:
            warnings.warn(f"grid under-resolved: {per_wave:.1f} points per wavelength (< 20)",
                          ResolutionWarning, stacklevel=2)
    label = {"cusp_u": "D0 (drift n-1) on L2(u^-(n+1) du)", "log_x": "-d2/dx2 + n^2/4 + lambda e^2x",
             "cylinder": "-d2/du2 + mu"}[formulation]
    return assemble(nodes, coeffs, mode=mode, formulation=formulation,
                    provenance=f"{end.kind} mode {mode}: {label}", n=end.n)


def conjugation_oracle(op: DiscreteOperator) -> DiscreteOperator:
    """Log-coordinate operator matching a ``cusp_u`` operator node for node."""
    if op.formulation != "cusp_u":
        raise OperatorConstructionError("conjugation oracle needs a cusp_u operator")
    lam = float(op.coeffs.q(np.array([1.0]))[0])
    end = EndModel("cusp", op.n, (0.0, lam) if lam > 0 else (0.0,))
    coeffs = mode_coefficients(end, 1 if lam > 0 else 0, "log_x")
    return assemble(np.log(op.nodes), coeffs, mode=op.mode, formulation="log_x",
                    provenance=op.provenance + " [log conjugate]", n=op.n)


def v_map(x: np.ndarray, f_of_u: np.ndarray, n: int) -> np.ndarray:
    """``(V f)(x) = e^{-n x / 2} f(e^x)`` for samples ``f_of_u`` at ``u = e^x``."""
    return np.exp(-n * np.asarray(x) / 2) * f_of_u


def v_inverse(x: np.ndarray, g: np.ndarray, n: int) -> np.ndarray:
    return np.exp(n * np.asarray(x) / 2) * g


# --------------------------------------------------------------------------
# perturbations and the difference decomposition


@dataclass(frozen=True)
class Perturbation:
    """Coefficient perturbation of a Sturm-Liouville operator.

    ``p -> p (1 + p_amp b)``, ``w -> w (1 + w_amp b)``, ``q -> q + q_amp b + V``
    with ``b(t) = envelope(1 + distance(t))`` and ``V`` an optional extra
    potential in the operator coordinate.
    """

    envelope: DecayProfile | None = None
    p_amp: float = 0.0
    w_amp: float = 0.0
    q_amp: float = 0.0
    potential: Callable | None = None
    breakpoints: tuple = ()

    @classmethod
    def square_well(cls, depth: float, width: float, start: float = 0.0) -> "Perturbation":
        """Potential ``-depth`` on ``[start, start + width)``."""
        lo, hi = start, start + width

        def V(t):
            t = np.asarray(t, dtype=float)
            return np.where((t >= lo) & (t < hi), -depth, 0.0)

        return cls(potential=V, breakpoints=(hi,) if start == 0 else (lo, hi))

    @property
    def is_zero(self) -> bool:
        return self.potential is None and (self.envelope is None or
                                           self.p_amp == self.w_amp == self.q_amp == 0.0)

    def coefficients(self, base: Coefficients) -> Coefficients:
        env = self.envelope
        p_amp, w_amp, q_amp, V = self.p_amp, self.w_amp, self.q_amp, self.potential

        def b(t):
            return env(1 + base.distance(t)) if env is not None else np.zeros_like(np.asarray(t, dtype=float))

        def db(t):
            if env is None:
                return np.zeros_like(np.asarray(t, dtype=float))
            return env.derivative(1 + base.distance(t)) * base.ddistance(t)

        def p(t):
            return base.p(t) * (1 + p_amp * b(t))

        def dp(t):
            return base.dp(t) * (1 + p_amp * b(t)) + base.p(t) * p_amp * db(t)

        def w(t):
            return base.w(t) * (1 + w_amp * b(t))

        def q(t):
            extra = V(t) if V is not None else 0.0
            return base.q(t) + q_amp * b(t) + extra

        return Coefficients(p, dp, w, q, base.distance, base.ddistance,
                            tuple(base.breakpoints) + tuple(self.breakpoints))


@dataclass
class DifferenceDecomposition:
    """``Delta_g - Delta_h = xi0 + xi1 d/dt + xi2 d^2/dt^2`` on interior nodes."""

    nodes: np.ndarray
    xi0: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    fitted_C: float

    def apply(self, f_full: np.ndarray, nodes_full: np.ndarray) -> np.ndarray:
        d1, d2 = _centered_derivatives(nodes_full, f_full)
        return self.xi0 * f_full[1:-1] + self.xi1 * d1 + self.xi2 * d2


def _centered_derivatives(t: np.ndarray, f: np.ndarray):
    hl = t[1:-1] - t[:-2]
    hr = t[2:] - t[1:-1]
    fl, fc, fr = f[:-2], f[1:-1], f[2:]
    d1 = (fr * hl**2 - fl * hr**2 + fc * (hr**2 - hl**2)) / (hl * hr * (hl + hr))
    d2 = 2 * (fr * hl + fl * hr - fc * (hl + hr)) / (hl * hr * (hl + hr))
    return d1, d2


def perturb_operator(op: DiscreteOperator, pert: Perturbation):
    """Assemble the perturbed operator and the coefficient decomposition.

    ``fitted_C`` is ``max_j sup |xi_j| / envelope(1 + distance)`` (infinite
    when there is no envelope but a nonzero extra potential).
    """
    coeffs = pert.coefficients(op.coeffs)
    op_h = assemble(op.nodes, coeffs, mode=op.mode, formulation=op.formulation,
                    provenance=op.provenance + " [perturbed]", n=op.n)
    t = op.interior
    g, h = op.coeffs, coeffs
    xi0 = _sample_q(g, t) - _sample_q(h, t)
    xi1 = -g.dp(t) / g.w(t) + h.dp(t) / h.w(t)
    xi2 = -g.p(t) / g.w(t) + h.p(t) / h.w(t)
    biggest = np.maximum.reduce([np.abs(xi0), np.abs(xi1), np.abs(xi2)])
    if pert.envelope is not None:
        fitted = float(np.max(biggest * np.exp(-pert.envelope.log(1 + g.distance(t)))))
    else:
        fitted = 0.0 if not np.any(biggest) else math.inf
    return op_h, DifferenceDecomposition(t, xi0, xi1, xi2, fitted)


# --------------------------------------------------------------------------
# weighted norms


def arclength_derivative(op: DiscreteOperator, f: np.ndarray) -> np.ndarray:
    """Derivative with respect to arclength of a function vanishing at both ends."""
    full = np.concatenate([[0.0], f, [0.0]])
    d1, _ = _centered_derivatives(op.nodes, full)
    return d1 / op.coeffs.ddistance(op.interior)


def weighted_norm(op: DiscreteOperator, f: np.ndarray, xi: np.ndarray, k: int = 0,
                  kind: str = "W", spectral=None) -> float:
    """Weighted Sobolev norm of interior samples ``f``.

    ``W``: ``(sum_{i<=k} int |d^i f|^2 xi)^{1/2}`` with arclength derivatives.
    ``H``: ``||(A + 1)^{k/2} f||_{L^2_xi}``; odd ``k`` needs ``spectral``
    (anything with ``apply_function(func, f)``).
    """
    xi = np.broadcast_to(np.asarray(xi, dtype=float), f.shape)
    if kind == "W":
        total, g = 0.0, np.asarray(f, dtype=float)
        for i in range(k + 1):
            total += float(np.sum(np.abs(g) ** 2 * xi * op.mass))
            if i < k:
                g = arclength_derivative(op, g)
        return math.sqrt(total)
    if kind != "H":
        raise ValueError(f"unknown norm kind {kind!r}")
    if k % 2 == 0:
        g = np.asarray(f, dtype=float)
        for _ in range(k // 2):
            g = op.apply(g) + g
    elif spectral is None:
        raise ValueError("odd-order H norm needs spectral data")
    else:
        g = spectral.apply_function(lambda lam: (lam + 1.0) ** (k / 2), f)
    return math.sqrt(float(np.sum(np.abs(g) ** 2 * xi * op.mass)))


def random_smooth_functions(op: DiscreteOperator, count: int, seed: int = 0, modes: int = 6) -> np.ndarray:
    """Smooth test functions vanishing at both ends (random sine sums in arclength)."""
    rng = np.random.default_rng(seed)
    s = op.coeffs.distance(op.nodes)
    a, b = s[0], s[-1]
    z = (op.coeffs.distance(op.interior) - a) / (b - a)
    out = np.zeros((count, op.size))
    for c in range(count):
        coef = rng.standard_normal(modes) / (1 + np.arange(modes)) ** 2
        for m, cm in enumerate(coef, start=1):
            out[c] += cm * np.sin(m * math.pi * z)
    return out


def inclusion_ratios(op: DiscreteOperator, tests: np.ndarray, k: int, weight_h, weight_w) -> np.ndarray:
    """``||f||_{H^k, weight_h} / ||f||_{W^k, weight_w}`` over test functions."""
    return np.array([weighted_norm(op, f, weight_h, k, "H") / weighted_norm(op, f, weight_w, k, "W")
                     for f in tests])


def truncated_floor_scan(end: EndModel, mode: int, starts: Sequence[float], u_max: float,
                         points: int = 800) -> np.ndarray:
    """Lowest eigenvalue of the ``cusp_u`` mode operator on ``[b, u_max]`` per ``b``."""
    out = []
    for b in starts:
        op = build_mode_operator(end, mode, GridSpec(u_max, points, start=b, spacing="geometric"),
                                 "cusp_u")
        out.append(op.lowest_eigenvalues(1)[0])
    return np.array(out)
