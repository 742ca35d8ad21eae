"""Warped-product ends ``dx^2 + phi(x)^2 g_Y`` over a flat torus ``Y``.

All tensors are handled in the g-orthonormal frame ``e_0 = d/dx``,
``e_i = phi^{-1} d/dy_i``.  In that frame the Levi-Civita connection only
involves ``H = phi'/phi``:

    nabla_{e_i} e_j = -H delta_ij e_0,   nabla_{e_i} e_0 = H e_i,
    nabla_{e_0} e_a = 0,

so every quantity is a closed-form expression in ``H``, ``K = psi'/psi``,
``r = psi/phi`` and their x-derivatives.  Those are built with sympy and
lambdified; finite differences appear only in the oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy as sp
from scipy import integrate, special

from .decay import DecayProfile

X = sp.Symbol("x", real=True, nonnegative=True)

# log-log slope above which a sampled ratio counts as unbounded
TAIL_SLOPE_TOL = 0.05
# tensor norms below this are round-off in the symbolic evaluators
NOISE_FLOOR = 1e-10


class CapabilityError(ValueError):
    """Requested derivative order exceeds what the profiles provide."""


@dataclass(frozen=True)
class WarpedMetric:
    """End metric ``dx^2 + phi(x)^2 g_Y`` with ``Y`` a flat n-torus."""

    warp: str
    n: int = 1
    systole: float = 2 * math.pi
    core_floor: float = 1.0
    k_max: int = 6
    name: str = "custom"

    @property
    def phi(self) -> sp.Expr:
        return _sympify(self.warp)

    @property
    def dim(self) -> int:
        return self.n + 1

    def evaluate(self, xs, order: int = 0):
        if order > self.k_max:
            raise CapabilityError(f"order {order} exceeds k_max={self.k_max}")
        return _lambdify(sp.diff(self.phi, X, order))(xs)

    def to_dict(self) -> dict:
        return {
            "end_kind": self.name,
            "n": self.n,
            "params": {"warp": self.warp, "systole": self.systole},
            "core_floor": self.core_floor,
        }


@lru_cache(maxsize=None)
def _sympify(text: str) -> sp.Expr:
    return sp.sympify(text, locals={"x": X})


def _lambdify(expr):
    f = sp.lambdify(X, expr, "numpy")

    def call(xs):
        xs = np.asarray(xs, dtype=float)
        return np.broadcast_to(np.asarray(f(xs), dtype=float), xs.shape).copy()

    return call


def cusp(n: int = 1, systole: float = 1.0, core_floor: float = 1.0) -> WarpedMetric:
    return WarpedMetric("exp(-x)", n, systole, core_floor, name="cusp")


def cylinder(n: int = 1, systole: float = 2 * math.pi, core_floor: float = 1.0) -> WarpedMetric:
    return WarpedMetric("1", n, systole, core_floor, name="cylinder")


def perturbed(base: WarpedMetric, envelope: str, amplitude: float) -> WarpedMetric:
    """Warp ``(1 + amplitude * envelope(x)) * phi(x)``."""
    warp = f"(1 + ({amplitude})*({envelope}))*({base.warp})"
    return WarpedMetric(warp, base.n, base.systole, base.core_floor, base.k_max, base.name)


def metric_from_spec(spec: dict) -> WarpedMetric:
    kind = spec.get("end_kind", "cusp")
    n = int(spec.get("n", 1))
    params = spec.get("params", {}) or {}
    floor = float(spec.get("core_floor", 1.0))
    if kind == "cusp":
        base = cusp(n, float(params.get("systole", 1.0)), floor)
    elif kind == "cylinder":
        base = cylinder(n, float(params.get("systole", 2 * math.pi)), floor)
    elif kind == "custom_profile":
        base = WarpedMetric(str(params["warp"]), n, float(params.get("systole", 1.0)), floor)
    else:
        raise ValueError(f"unknown end_kind {kind!r}")
    if "perturbation" in params:
        pert = params["perturbation"]
        base = perturbed(base, pert["envelope"], float(pert["amplitude"]))
    return base


@dataclass(frozen=True)
class MetricPair:
    g: WarpedMetric
    h: WarpedMetric
    k: int = 2
    q: float = 0.0

    def __post_init__(self):
        if self.g.n != self.h.n:
            raise ValueError("metrics must share the cross-section")

    def reversed(self) -> "MetricPair":
        return MetricPair(self.h, self.g, self.k, self.q)


# --------------------------------------------------------------------------
# frame tensor calculus


def _frame_functions(g: WarpedMetric, h: WarpedMetric):
    phi, psi = g.phi, h.phi
    H = sp.simplify(sp.diff(phi, X) / phi)
    K = sp.simplify(sp.diff(psi, X) / psi)
    r = sp.simplify(psi / phi)
    return H, K, r


def _covariant_derivative(T: np.ndarray, H: sp.Expr, dim: int) -> np.ndarray:
    rank = T.ndim
    out = np.empty((dim,) * (rank + 1), dtype=object)
    for idx in itertools.product(range(dim), repeat=rank + 1):
        c, rest = idx[0], idx[1:]
        val = sp.diff(T[rest], X) if c == 0 else sp.Integer(0)
        if c != 0:
            for slot, a in enumerate(rest):
                # nabla_{e_c} e_a expanded in the frame
                if a == 0:
                    repl = list(rest)
                    repl[slot] = c
                    val -= H * T[tuple(repl)]
                elif a == c:
                    repl = list(rest)
                    repl[slot] = 0
                    val += H * T[tuple(repl)]
        out[idx] = val
    return out


def _norm_expr(T: np.ndarray) -> sp.Expr:
    return sp.Add(*[c**2 for c in T.flat if c != 0])


def _difference_tensor(g, h):
    H, K, r = _frame_functions(g, h)
    dim = g.dim
    D = np.full((dim, dim), sp.Integer(0), dtype=object)
    for i in range(1, dim):
        D[i, i] = 1 - r**2
    return D, H


def _connection_difference(g, h):
    H, K, r = _frame_functions(g, h)
    dim = g.dim
    A = np.full((dim, dim, dim), sp.Integer(0), dtype=object)
    for i in range(1, dim):
        A[0, i, i] = -H + r**2 * K
        A[i, 0, i] = H - K
        A[i, i, 0] = H - K
    return A, H


@lru_cache(maxsize=256)
def _norm_functions(g: WarpedMetric, h: WarpedMetric, k: int, which: str):
    """Lambdified squared norms of the j-th covariant derivatives, j < count."""
    if which == "connection":
        T, H = _connection_difference(g, h)
        count = k
    else:
        T, H = _difference_tensor(g, h)
        count = k + 1
    funcs = []
    for _ in range(count):
        funcs.append(_lambdify(_norm_expr(T)))
        T = _covariant_derivative(T, H, g.dim)
    return funcs


def _check_order(pair: MetricPair, k: int):
    if k > min(pair.g.k_max, pair.h.k_max) - 1:
        raise CapabilityError(f"order {k} needs more derivatives than k_max allows")


def knorm_difference(pair: MetricPair, k: int, xs) -> np.ndarray:
    """``|g-h|_g + sum_{j<k} |(nabla^g)^j (nabla^g - nabla^h)|_g`` on ``xs``."""
    _check_order(pair, k)
    xs = np.asarray(xs, dtype=float)
    zeroth = np.sqrt(_norm_functions(pair.g, pair.h, 0, "metric")[0](xs))
    total = zeroth
    for f in _norm_functions(pair.g, pair.h, k, "connection"):
        total = total + np.sqrt(np.abs(f(xs)))
    return total


def nabla_difference(pair: MetricPair, k: int, xs) -> np.ndarray:
    """``sum_{i<=k} |(nabla^g)^i (g-h)|_g`` on ``xs``."""
    _check_order(pair, k)
    xs = np.asarray(xs, dtype=float)
    total = np.zeros_like(xs)
    for f in _norm_functions(pair.g, pair.h, k, "metric"):
        total = total + np.sqrt(np.abs(f(xs)))
    return total


def connection_norm_fd(pair: MetricPair, xs, step: float = 1e-3) -> np.ndarray:
    """Finite-difference oracle for ``|nabla^g - nabla^h|_g``.

    Christoffel symbols come from central differences of the coordinate
    metric components ``phi^2`` and ``psi^2``.
    """
    xs = np.asarray(xs, dtype=float)
    n = pair.g.n
    G = lambda x: pair.g.evaluate(x) ** 2
    Hm = lambda x: pair.h.evaluate(x) ** 2
    dG = (G(xs + step) - G(xs - step)) / (2 * step)
    dH = (Hm(xs + step) - Hm(xs - step)) / (2 * step)
    g_yy = G(xs)
    a_x = -0.5 * dG + 0.5 * dH
    a_y = 0.5 * dG / g_yy - 0.5 * dH / Hm(xs)
    return np.sqrt(n * a_x**2 / g_yy**2 + 2 * n * a_y**2)


# --------------------------------------------------------------------------
# verdicts


def default_grid(x_max: float = 200.0, points: int = 2001) -> np.ndarray:
    return np.linspace(0.0, x_max, points)


@dataclass
class BoundedVerdict:
    C: float
    passed: bool
    tail_slope: float


def bounded_ratio(xs: np.ndarray, ratio: np.ndarray) -> BoundedVerdict:
    """Sup of a sampled ratio and whether it stays bounded in the tail.

    Bounded means finite everywhere and no power-law growth over the upper
    half of the grid.
    """
    ratio = np.abs(np.asarray(ratio, dtype=float))
    if not np.all(np.isfinite(ratio)):
        return BoundedVerdict(math.inf, False, math.inf)
    C = float(ratio.max())
    if C <= 1e-300:
        return BoundedVerdict(0.0, True, 0.0)
    tail = xs >= xs[-1] / 2
    logs = np.log(np.maximum(ratio[tail], 1e-300))
    slope = float(np.polyfit(np.log1p(xs[tail]), logs, 1)[0])
    return BoundedVerdict(C, slope <= TAIL_SLOPE_TOL, slope)


def decay_ratio(xs: np.ndarray, values: np.ndarray, log_beta: np.ndarray) -> BoundedVerdict:
    """``bounded_ratio`` of ``values / beta`` restricted to resolved samples.

    Samples where ``values`` sits below ``NOISE_FLOOR`` carry no information
    about the decay rate and are dropped; if none remain the ratio is zero.
    """
    keep = np.abs(values) > NOISE_FLOOR
    if keep.sum() < 10:
        return BoundedVerdict(float(np.max(np.abs(values) * np.exp(-log_beta), initial=0.0)), True, 0.0)
    return bounded_ratio(xs[keep], values[keep] * np.exp(-log_beta[keep]))


@dataclass
class EquivalenceResult:
    C: float
    passed: bool
    reverse_C: float
    reverse_passed: bool
    tail_slope: float


def check_beta_equivalence(pair: MetricPair, k: int, beta: DecayProfile, xs=None) -> EquivalenceResult:
    """C = sup knorm/beta(1+x); verdict is run for the pair and its reverse."""
    xs = default_grid() if xs is None else np.asarray(xs, dtype=float)
    log_b = beta.log(1 + xs)
    fwd = decay_ratio(xs, knorm_difference(pair, k, xs), log_b)
    rev = decay_ratio(xs, knorm_difference(pair.reversed(), k, xs), log_b)
    if fwd.passed != rev.passed:
        raise AssertionError("beta-equivalence verdict is not symmetric")
    return EquivalenceResult(fwd.C, fwd.passed, rev.C, rev.passed, fwd.tail_slope)


def nabla_characterization_check(pair: MetricPair, k: int, beta: DecayProfile, xs=None):
    """Return (agree, nabla_verdict, equivalence_verdict)."""
    xs = default_grid() if xs is None else np.asarray(xs, dtype=float)
    nab = decay_ratio(xs, nabla_difference(pair, k, xs), beta.log(1 + xs))
    eq = check_beta_equivalence(pair, k, beta, xs)
    return nab.passed == eq.passed, nab, eq


def quasi_isometry_ratios(pair: MetricPair, xs) -> np.ndarray:
    """Eigenvalues of h relative to g at each point: 1 (radial) and r^2."""
    r = pair.h.evaluate(xs) / pair.g.evaluate(xs)
    return np.stack([np.ones_like(r), r**2], axis=1)


# --------------------------------------------------------------------------
# curvature


@lru_cache(maxsize=128)
def _curvature_functions(metric: WarpedMetric, orders: int):
    phi = metric.phi
    H = sp.simplify(sp.diff(phi, X) / phi)
    radial = -(sp.diff(H, X) + H**2)
    tangential = -(H**2)
    out = []
    for i in range(orders + 1):
        out.append((_lambdify(sp.diff(radial, X, i)), _lambdify(sp.diff(tangential, X, i))))
    return out


def sectional_curvatures(metric: WarpedMetric, xs) -> tuple:
    """(radial, tangential) sectional curvatures ``-phi''/phi`` and ``-(phi'/phi)^2``."""
    rad, tan = _curvature_functions(metric, 0)[0]
    return rad(xs), tan(xs)


def curvature_derivative_norm(metric: WarpedMetric, order: int, xs) -> np.ndarray:
    total = np.zeros_like(np.asarray(xs, dtype=float))
    for rad, tan in _curvature_functions(metric, order):
        total = total + np.abs(rad(xs)) + np.abs(tan(xs))
    return total


@dataclass
class CurvatureResult:
    C: float
    passed: bool
    bounded_g: bool
    bounded_h: bool


def curvature_difference_decay(pair: MetricPair, k: int, beta: DecayProfile, xs=None) -> CurvatureResult:
    """Check ``|R^g - R^h| <= C beta`` and that bounded curvature of order k-2
    holds for h exactly when it holds for g."""
    if k < 2:
        raise CapabilityError("curvature difference needs k >= 2")
    xs = default_grid() if xs is None else np.asarray(xs, dtype=float)
    diff = np.zeros_like(xs)
    fg = _curvature_functions(pair.g, k - 2)
    fh = _curvature_functions(pair.h, k - 2)
    for (rg, tg), (rh, th) in zip(fg, fh):
        diff = diff + np.abs(rg(xs) - rh(xs)) + np.abs(tg(xs) - th(xs))
    verdict = decay_ratio(xs, diff, beta.log(1 + xs))
    bg = bounded_ratio(xs, curvature_derivative_norm(pair.g, k - 2, xs) + 1e-300).passed
    bh = bounded_ratio(xs, curvature_derivative_norm(pair.h, k - 2, xs) + 1e-300).passed
    if bg != bh:
        raise AssertionError("bounded curvature holds for only one of the two metrics")
    return CurvatureResult(verdict.C, verdict.passed, bg, bh)


# --------------------------------------------------------------------------
# injectivity radius and volumes


@dataclass
class InjectivityModel:
    metric: WarpedMetric
    K: float
    p: float = 0.0

    @property
    def cap(self) -> float:
        return math.inf if self.K <= 0 else math.pi / (12 * math.sqrt(self.K))

    def raw(self, xs) -> np.ndarray:
        """Model injectivity radius ``min(core floor, phi * systole / 2)``."""
        xs = np.asarray(xs, dtype=float)
        return np.minimum(self.metric.core_floor, self.metric.evaluate(xs) * self.metric.systole / 2)

    def __call__(self, xs) -> np.ndarray:
        return np.minimum(self.cap, self.raw(xs))

    def injectivity_lower_bound(self, xs) -> BoundedVerdict:
        """Fit ``C`` in ``i~(x) >= C i~(p)^N exp(-(N-1) sqrt(K) d(x,p))``, N = dim."""
        xs = np.asarray(xs, dtype=float)
        N = self.metric.dim
        d = np.abs(xs - self.p)
        ip = float(self(self.p))
        bound = ip**N * np.exp(-(N - 1) * math.sqrt(max(self.K, 0.0)) * d)
        # boundedness of bound/i~ is the statement; C is its reciprocal sup
        v = bounded_ratio(xs, bound / self(xs))
        return BoundedVerdict(1.0 / v.C, v.passed, v.tail_slope)

    def injbound2(self, xs) -> float:
        """Smallest ``C`` with ``i~(y) >= C i~(x) exp(-(N-1) pi/12 d/i~(x))`` on all pairs."""
        xs = np.asarray(xs, dtype=float)
        N = self.metric.dim
        ix = self(xs)
        Xg, Yg = np.meshgrid(xs, xs, indexing="ij")
        IX = ix[:, None]
        IY = ix[None, :]
        log_rhs = np.log(IX) - (N - 1) * math.pi / 12 * np.abs(Xg - Yg) / IX
        return float(np.exp(np.min(np.log(IY) - log_rhs)))


def curvature_bound(metric: WarpedMetric, xs=None) -> float:
    xs = default_grid() if xs is None else xs
    rad, tan = sectional_curvatures(metric, xs)
    return float(max(np.max(np.abs(rad)), np.max(np.abs(tan))))


def injectivity_envelope(metric: WarpedMetric, p: float = 0.0, xs=None) -> InjectivityModel:
    """Modified injectivity radius model; K = 0 disables the curvature cap."""
    K = curvature_bound(metric, xs)
    if K < 1e-14:
        K = 0.0
    return InjectivityModel(metric, K, p)


@dataclass
class VolumeBounds:
    lower: float
    upper: float
    lower_valid: bool


def sphere_area(n: int) -> float:
    """Area of the unit sphere in R^n, ``2 pi^{n/2} / Gamma(n/2)``."""
    return 2 * math.pi ** (n / 2) / special.gamma(n / 2)


def gunther_bishop_volume(r: float, K: float, n: int) -> VolumeBounds:
    """Lower/upper volume bounds for a geodesic r-ball in dimension n."""
    if r <= 0 or K < 0 or n < 1:
        raise ValueError("need r > 0, K >= 0, n >= 1")
    w = sphere_area(n)
    if K == 0:
        v = w * r**n / n
        return VolumeBounds(v, v, True)
    s = math.sqrt(K)
    lo_int = integrate.quad(lambda t: (math.sin(t * s) / s) ** (n - 1), 0, r, limit=200)[0]
    hi_int = integrate.quad(lambda t: (math.sinh(t * s) / s) ** (n - 1), 0, r, limit=200)[0]
    valid = r <= math.pi / s
    return VolumeBounds(w * lo_int if valid else math.nan, w * hi_int, valid)
