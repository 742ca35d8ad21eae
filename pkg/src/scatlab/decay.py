"""Functions of moderate decay.

A profile ``beta`` lives on ``[1, inf)``.  Call sites always evaluate it at
``1 + d`` with ``d`` a distance; the shift is never baked into a profile.

The family is closed and symbolic so that derivatives are exact:

* ``power_law``      x**(-a)
* ``exponential``    exp(-c x)
* ``stretched_exp``  exp(-c x**alpha), 0 < alpha < 1
* ``product``        product of profiles
* ``power``          base**exponent
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

KINDS = ("power_law", "exponential", "stretched_exp", "product", "power")

# grid infimum of C_beta can overestimate the true infimum
SAFETY = 0.99


class DecayParameterError(ValueError):
    """Raised when a profile parameter is out of range."""


class DecayValidationError(ValueError):
    """Raised when a sampled profile violates the moderate-decay axioms."""


@dataclass(frozen=True)
class DecayProfile:
    kind: str
    params: dict = field(default_factory=dict)
    parts: tuple = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "power_law":
            return x ** (-p["a"])
        if self.kind == "exponential":
            return np.exp(-p["c"] * x)
        if self.kind == "stretched_exp":
            return np.exp(-p["c"] * x ** p["alpha"])
        if self.kind == "product":
            out = np.ones_like(x)
            for part in self.parts:
                out = out * part(x)
            return out
        if self.kind == "power":
            return self.parts[0](x) ** p["exponent"]
        raise DecayParameterError(f"unknown kind {self.kind!r}")

    def log(self, x):
        """log beta(x), computed without underflow."""
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "power_law":
            return -p["a"] * np.log(x)
        if self.kind == "exponential":
            return -p["c"] * x
        if self.kind == "stretched_exp":
            return -p["c"] * x ** p["alpha"]
        if self.kind == "product":
            return sum((part.log(x) for part in self.parts), np.zeros_like(x))
        return p["exponent"] * self.parts[0].log(x)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "power_law":
            return -p["a"] * x ** (-p["a"] - 1.0)
        if self.kind == "exponential":
            return -p["c"] * np.exp(-p["c"] * x)
        if self.kind == "stretched_exp":
            a, c = p["alpha"], p["c"]
            return -c * a * x ** (a - 1.0) * np.exp(-c * x**a)
        if self.kind == "product":
            vals = [part(x) for part in self.parts]
            ders = [part.derivative(x) for part in self.parts]
            out = np.zeros_like(x)
            for i in range(len(vals)):
                term = ders[i]
                for j, v in enumerate(vals):
                    if j != i:
                        term = term * v
                out = out + term
            return out
        e = p["exponent"]
        base = self.parts[0]
        return e * base(x) ** (e - 1.0) * base.derivative(x)

    @property
    def is_subexponential(self) -> bool:
        """True when exp(c x) beta(x) -> inf for every c > 0."""
        if self.kind == "exponential":
            return self.params["c"] == 0.0
        if self.kind in ("power_law", "stretched_exp"):
            return True
        return all(part.is_subexponential for part in self.parts)

    def to_dict(self) -> dict:
        if self.kind == "product":
            return {"kind": "product", "params": {"factors": [q.to_dict() for q in self.parts]}}
        if self.kind == "power":
            return {
                "kind": "power",
                "params": {"base": self.parts[0].to_dict(), "exponent": self.params["exponent"]},
            }
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, spec: dict) -> "DecayProfile":
        return make_profile(spec["kind"], spec.get("params", {}))


def _positive(name, value, allow_zero=False):
    value = float(value)
    if not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise DecayParameterError(f"parameter {name!r} must be {bound}, got {value}")
    return value


def make_profile(kind: str, params: dict | None = None) -> DecayProfile:
    """Build a profile from its config form ``{kind, params}``.

    ``product`` takes ``factors`` (profiles or dicts); ``power`` takes
    ``base`` and ``exponent``.
    """
    params = dict(params or {})
    if kind == "power_law":
        return DecayProfile(kind, {"a": _positive("a", params["a"])})
    if kind == "exponential":
        return DecayProfile(kind, {"c": _positive("c", params["c"], allow_zero=True)})
    if kind == "stretched_exp":
        alpha = float(params["alpha"])
        if not 0.0 < alpha < 1.0:
            raise DecayParameterError(f"parameter 'alpha' must lie in (0, 1), got {alpha}")
        return DecayProfile(kind, {"c": _positive("c", params["c"]), "alpha": alpha})
    if kind == "product":
        factors = params.get("factors", [])
        if not factors:
            raise DecayParameterError("parameter 'factors' must be a non-empty list")
        parts = tuple(f if isinstance(f, DecayProfile) else DecayProfile.from_dict(f) for f in factors)
        return DecayProfile(kind, {}, parts)
    if kind == "power":
        base = params["base"]
        base = base if isinstance(base, DecayProfile) else DecayProfile.from_dict(base)
        return DecayProfile(kind, {"exponent": _positive("exponent", params["exponent"])}, (base,))
    raise DecayParameterError(f"unknown kind {kind!r}; expected one of {KINDS}")


def power_law(a: float) -> DecayProfile:
    return make_profile("power_law", {"a": a})


def exponential(c: float) -> DecayProfile:
    return make_profile("exponential", {"c": c})


def stretched_exp(c: float, alpha: float) -> DecayProfile:
    return make_profile("stretched_exp", {"c": c, "alpha": alpha})


def product(*factors: DecayProfile) -> DecayProfile:
    return make_profile("product", {"factors": list(factors)})


def power(base: DecayProfile, exponent: float) -> DecayProfile:
    return make_profile("power", {"base": base, "exponent": exponent})


@dataclass(frozen=True)
class SampleGrid:
    x_max: float = 1.0e3
    points: int = 1000
    pair_points: int = 120

    def __post_init__(self):
        if self.x_max < 100 or self.points < 1000 or self.pair_points**2 < 10_000:
            raise ValueError("sample grid must reach x >= 100 with >= 1e3 points and >= 1e4 pairs")

    def line(self) -> np.ndarray:
        return np.geomspace(1.0, self.x_max, self.points)

    def pairs(self) -> np.ndarray:
        return np.geomspace(1.0, self.x_max, self.pair_points)


@dataclass
class DecayReport:
    sup_x_beta: float
    c_beta_estimate: float
    envelope: tuple
    is_subexponential: bool
    tail_slope: float

    @property
    def c_beta_safe(self) -> float:
        return SAFETY * self.c_beta_estimate


def estimate_c_beta(beta: DecayProfile, xs: np.ndarray) -> float:
    """Grid infimum of beta(x+y) / (beta(x) beta(y)), clipped at 1."""
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    log_ratio = beta.log(X + Y) - beta.log(X) - beta.log(Y)
    return float(min(1.0, np.exp(log_ratio.min())))


def verify_moderate_decay(beta: DecayProfile, grid: SampleGrid | None = None) -> DecayReport:
    """Audit a profile on a sample grid and fit its exponential envelope.

    The envelope ``beta(x) >= C exp(-c x)`` uses ``c = -log(C_beta beta(1))``
    (with the safety-reduced ``C_beta``) and ``C = beta(2)``, which is the
    minimum of ``beta`` on ``[1, 2]``.
    """
    grid = grid or SampleGrid()
    xs = grid.line()
    vals = beta(xs)
    logs = beta.log(xs)
    if not np.all(np.isfinite(logs)):
        raise DecayValidationError("profile is not finite and positive on the grid")
    bad = np.nonzero(np.diff(logs) > 1e-12)[0]
    if bad.size:
        raise DecayValidationError(f"profile increases at x = {xs[bad + 1][:10].tolist()}")
    sup_x_beta = float(np.max(xs * vals))
    if not np.isfinite(sup_x_beta):
        raise DecayValidationError("sup x beta(x) is not finite on the grid")

    c_beta = estimate_c_beta(beta, grid.pairs())
    if not c_beta > 0:
        raise DecayValidationError("C_beta estimate is not positive")
    c = -np.log(SAFETY * c_beta * float(beta(1.0)))
    C = float(beta(2.0))
    env_ok = logs >= np.log(C) - c * xs - 1e-12
    if not np.all(env_ok):
        raise DecayValidationError(f"envelope fails at x = {xs[~env_ok][:10].tolist()}")

    # growth of x beta(x) over the last decade; informational only
    tail = xs >= xs[-1] / 10
    slope = float(np.polyfit(np.log(xs[tail]), np.log(xs[tail]) + logs[tail], 1)[0])
    return DecayReport(sup_x_beta, c_beta, (C, float(c)), beta.is_subexponential, slope)


@dataclass
class QuotientCheck:
    passed: bool
    worst_margin: float
    lower: np.ndarray
    ratio: np.ndarray
    upper: np.ndarray


def check_quotient_bounds(beta: DecayProfile, c_beta: float, triples: Sequence) -> QuotientCheck:
    """Check C_beta beta(1+dxy) <= beta(1+dxq)/beta(1+dyq) <= 1/(C_beta beta(1+dxy)).

    ``triples`` holds rows ``(d(x,q), d(y,q), d(x,y))``.  The margin is the
    smaller log-gap to either bound; negative means violated.
    """
    t = np.atleast_2d(np.asarray(triples, dtype=float))
    dxq, dyq, dxy = t[:, 0], t[:, 1], t[:, 2]
    tol = 1e-12 * (1 + np.abs(dxq) + np.abs(dyq))
    bad = (np.abs(dxq - dyq) > dxy + tol) | (dxy > dxq + dyq + tol) | (t.min(axis=1) < 0)
    if np.any(bad):
        raise ValueError(f"triples violate the triangle inequality at rows {np.nonzero(bad)[0].tolist()}")
    log_ratio = beta.log(1 + dxq) - beta.log(1 + dyq)
    log_lower = np.log(c_beta) + beta.log(1 + dxy)
    log_upper = -log_lower
    margin = np.minimum(log_ratio - log_lower, log_upper - log_ratio)
    worst = float(margin.min())
    return QuotientCheck(
        worst >= -1e-12, worst, np.exp(log_lower), np.exp(log_ratio), np.exp(log_upper)
    )
