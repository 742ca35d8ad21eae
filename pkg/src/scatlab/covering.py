"""Greedy uniformly-locally-finite coverings of finite metric spaces.

Balls are open: ``B_r(x) = {y : d(x, y) < r}``.  Centers are chosen
nearest-first from a base point (ties by lowest index), so each new center
lies outside every earlier ball and the separation
``d(x_i, x_j) >= min(h(x_i), h(x_j))`` holds exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse


class FiniteMetricSpace:
    """Points with a distance that can be queried row by row.

    Either a dense distance matrix or coordinates plus a metric function
    ``metric(points, point) -> distances`` is supplied; the latter keeps
    memory linear for large clouds.
    """

    def __init__(self, dist: np.ndarray | None = None, coords: np.ndarray | None = None,
                 metric: Callable | None = None):
        if dist is None and coords is None:
            raise ValueError("need a distance matrix or coordinates")
        self._dist = None if dist is None else np.asarray(dist, dtype=float)
        self.coords = None if coords is None else np.asarray(coords, dtype=float)
        self.metric = metric or euclidean
        if self._dist is not None:
            D = self._dist
            if D.ndim != 2 or D.shape[0] != D.shape[1]:
                raise ValueError("distance matrix must be square")
            if not np.allclose(D, D.T) or np.any(np.diag(D) != 0) or np.any(D < 0):
                raise ValueError("distance matrix must be symmetric, nonnegative, zero on the diagonal")

    def __len__(self) -> int:
        return len(self._dist) if self._dist is not None else len(self.coords)

    def row(self, i: int) -> np.ndarray:
        if self._dist is not None:
            return self._dist[i]
        return self.metric(self.coords, self.coords[i])

    def audit_triangle(self, samples: int = 2000, seed: int = 0) -> float:
        """Worst violation ``d(a,c) - d(a,b) - d(b,c)`` over random triples."""
        n = len(self)
        if n < 3:
            return 0.0
        rng = np.random.default_rng(seed)
        worst = -math.inf
        for a, b, c in rng.integers(0, n, size=(samples, 3)):
            ra, rb = self.row(a), self.row(b)
            worst = max(worst, ra[c] - ra[b] - rb[c])
        return float(worst)

    @classmethod
    def from_csv(cls, path, metric: Callable | None = None) -> "FiniteMetricSpace":
        """Rows are ``index, values...``; a square block is read as a distance matrix."""
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        if rows and not _is_number(rows[0][0]):
            rows = rows[1:]
        values = np.array([[float(v) for v in r[1:]] for r in rows])
        if values.shape[0] == values.shape[1] and np.allclose(np.diag(values), 0) and len(values) > 1:
            return cls(dist=values)
        return cls(coords=values, metric=metric)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def euclidean(points: np.ndarray, p: np.ndarray) -> np.ndarray:
    return np.linalg.norm(points - p, axis=1)


def poincare(points: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Hyperbolic distance in the Poincare disk (curvature -1)."""
    diff = np.sum((points - p) ** 2, axis=1)
    den = (1 - np.sum(points**2, axis=1)) * (1 - np.sum(p**2))
    return np.arccosh(1 + 2 * diff / den)


def hyperbolic_disk_cloud(n_points: int, radius: float, seed: int = 0) -> np.ndarray:
    """Uniform samples (hyperbolic area) of a disk of hyperbolic radius ``radius``."""
    rng = np.random.default_rng(seed)
    # area inside radius rho is 2 pi (cosh rho - 1)
    u = rng.random(n_points)
    rho = np.arccosh(1 + u * (math.cosh(radius) - 1))
    theta = rng.random(n_points) * 2 * math.pi
    r = np.tanh(rho / 2)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


@dataclass
class CoverReport:
    centers: list
    radii: list
    multiplicity: int
    intersection_multiplicity: int
    separation: float
    covered: bool
    a: float = 1.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _membership(space: FiniteMetricSpace, centers, radii) -> sparse.csr_matrix:
    rows, cols = [], []
    for k, (c, r) in enumerate(zip(centers, radii)):
        inside = np.nonzero(space.row(c) < r)[0]
        rows.append(np.full(inside.size, k))
        cols.append(inside)
    if not rows:
        return sparse.csr_matrix((0, len(space)), dtype=np.int32)
    data = np.ones(sum(len(c) for c in cols), dtype=np.int32)
    return sparse.csr_matrix((data, (np.concatenate(rows), np.concatenate(cols))),
                             shape=(len(centers), len(space)))


def greedy_cover(space: FiniteMetricSpace, h, a: float = 1.0, base: int = 0) -> CoverReport:
    """Greedy cover by ``B_{h(x_i)}(x_i)`` plus multiplicities of the a-dilated balls.

    ``multiplicity`` is the largest number of dilated balls containing one
    point; ``intersection_multiplicity`` is the largest number of dilated
    balls meeting a given dilated ball (meeting = sharing a sample point).
    """
    n = len(space)
    if n == 0:
        return CoverReport([], [], 0, 0, math.inf, True, a)
    if a < 1:
        raise ValueError("dilation a must be >= 1")
    hv = np.broadcast_to(np.asarray(h(np.arange(n)) if callable(h) else h, dtype=float), (n,))
    if np.any(hv <= 0):
        raise ValueError("radius function must be positive")
    order = np.lexsort((np.arange(n), space.row(base)))
    covered = np.zeros(n, dtype=bool)
    centers: list[int] = []
    for i in order:
        if covered[i]:
            continue
        centers.append(int(i))
        covered |= space.row(i) < hv[i]

    radii = hv[centers]
    sep = math.inf
    for k, c in enumerate(centers):
        if k == 0:
            continue
        d = space.row(c)[centers[:k]]
        sep = min(sep, float(np.min(d / np.minimum(radii[:k], radii[k]))))

    M = _membership(space, centers, a * radii)
    point_mult = int(M.sum(axis=0).max())
    overlap = (M @ M.T).tocsr()
    inter = int(np.diff(overlap.indptr).max())
    return CoverReport(centers, radii.tolist(), point_mult, inter, sep, bool(covered.all()), a)


@dataclass
class KappaEstimate:
    kappa: int
    witness: list
    s: float
    eps: float


def kappa_estimate(space: FiniteMetricSpace, s: float, eps: float = 0.0) -> KappaEstimate:
    """Upper bound on kappa_eps(s) from a greedy (s - eps)-cover.

    Counts, for the worst point, the balls ``B_{3s+eps}(x_i)`` containing it.
    """
    if not s > eps >= 0:
        raise ValueError("need s > eps >= 0")
    n = len(space)
    if n == 0:
        return KappaEstimate(0, [], s, eps)
    rep = greedy_cover(space, np.full(n, s - eps), a=1.0)
    M = _membership(space, rep.centers, np.full(len(rep.centers), 3 * s + eps))
    return KappaEstimate(int(M.sum(axis=0).max()), rep.centers, s, eps)


def c3_bound(h_max: float, c4: float, a: float, K: float, dim: int) -> float:
    """Packing bound on the intersection multiplicity of a cover.

    Ratio of the sinh-volume of radius ``(4a+1) h`` to the sin-volume of
    radius ``c4 h / 2``.
    """
    s = math.sqrt(K)
    from scipy.integrate import quad

    top = quad(lambda t: (math.sinh(s * t) / s) ** (dim - 1), 0, (4 * a + 1) * h_max)[0]
    bottom = quad(lambda t: (math.sin(s * t) / s) ** (dim - 1), 0, c4 * h_max / 2)[0]
    return top / bottom
