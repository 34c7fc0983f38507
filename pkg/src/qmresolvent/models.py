"""Kernel families: Riesz kernels, a Green-kernel surrogate on the ball and
half-space, and the dyadic Carleson model.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import BoundaryPoint, DuplicatePoints, EmptyMeasure, InfiniteAtReference
from .neumann import operator_norm
from .space import KernelMatrix, MeasureSpace, Modifier, pairwise_distances

QLike = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def riesz_constant(n: int, alpha: float) -> float:
    """c_{n,alpha} = Gamma((n-alpha)/2) / (2^alpha pi^(n/2) Gamma(alpha/2))."""
    return math.gamma((n - alpha) / 2.0) / (2.0**alpha * math.pi ** (n / 2.0) * math.gamma(alpha / 2.0))


def radial_q(coeffs) -> Callable[[np.ndarray], np.ndarray]:
    """q(x) = sum_k coeffs[k] |x|^k."""
    coeffs = [float(a) for a in coeffs]

    def q(points):
        r = np.linalg.norm(np.atleast_2d(points), axis=1)
        return sum(a * r**k for k, a in enumerate(coeffs))

    return q


def _sample_q(q: QLike, points: np.ndarray) -> np.ndarray:
    if callable(q):
        vals = np.asarray(q(points), dtype=float)
    else:
        vals = np.broadcast_to(np.asarray(q, dtype=float), (points.shape[0],)).copy()
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise ValueError("q must be positive at every sample point (drop points where q = 0)")
    return vals


def cube_grid(resolution: int, n: int = 2, side: float = 1.0):
    """Cell centres and volumes of a uniform grid on [0, side]^n."""
    h = side / resolution
    axis = h * (np.arange(resolution) + 0.5)
    pts = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return pts, np.full(pts.shape[0], h**n)


def ball_grid(resolution: int, n: int = 2):
    """Cell centres strictly inside the unit ball of a uniform grid on [-1, 1]^n.

    Returns (points, volumes, delta) with delta the distance to the sphere.
    """
    h = 2.0 / resolution
    axis = -1.0 + h * (np.arange(resolution) + 0.5)
    pts = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    r = np.linalg.norm(pts, axis=1)
    keep = r < 1.0
    pts = pts[keep]
    return pts, np.full(pts.shape[0], h**n), 1.0 - r[keep]


def half_space_grid(resolution: int, n: int = 2, width: float = 1.0, height: float = 1.0):
    """Grid on the box [-width, width]^(n-1) x (0, height] of the upper half-space.

    delta is the last coordinate (distance to the boundary hyperplane).
    """
    hx = 2.0 * width / resolution
    hz = height / resolution
    lateral = -width + hx * (np.arange(resolution) + 0.5)
    vertical = hz * (np.arange(resolution) + 0.5)
    axes = [lateral] * (n - 1) + [vertical]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    return pts, np.full(pts.shape[0], hx ** (n - 1) * hz), pts[:, -1].copy()


def _check_distinct(r: np.ndarray) -> None:
    off = ~np.eye(r.shape[0], dtype=bool)
    if np.any(r[off] == 0):
        i, j = np.argwhere((r == 0) & off)[0]
        raise DuplicatePoints(f"points {i} and {j} coincide")


def _offdiag_max(k: np.ndarray) -> float:
    off = ~np.eye(k.shape[0], dtype=bool)
    vals = k[off]
    return float(vals.max()) if vals.size else 1.0


@dataclass
class RieszSpec:
    n: int
    alpha: float
    points: np.ndarray
    volumes: Union[float, np.ndarray] = 1.0
    q: QLike = 1.0
    normalization: Optional[float] = None
    cap: Optional[float] = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("dimension must be at least 2")
        if not (0.0 < self.alpha < self.n):
            raise ValueError("need 0 < alpha < n")
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[1] != self.n:
            raise ValueError("points must have n coordinates")
        if self.normalization is None:
            self.normalization = riesz_constant(self.n, self.alpha)
        if self.normalization <= 0:
            raise ValueError("normalization must be positive")


def build_riesz(spec: RieszSpec) -> tuple[KernelMatrix, MeasureSpace]:
    """K = c_{n,alpha} |x - y|^(alpha - n) with the diagonal clamped.

    The clamp defaults to the largest off-diagonal entry, i.e. self-interaction
    at nearest-neighbour scale. omega_i = q(x_i) vol_i.
    """
    r = pairwise_distances(spec.points)
    _check_distinct(r)
    with np.errstate(divide="ignore"):
        k = spec.normalization * r ** (spec.alpha - spec.n)
    cap = spec.cap if spec.cap is not None else _offdiag_max(np.where(np.isfinite(k), k, 0.0))
    k = np.minimum(k, cap)
    vols = np.broadcast_to(np.asarray(spec.volumes, dtype=float), (spec.points.shape[0],))
    w = _sample_q(spec.q, spec.points) * vols
    return KernelMatrix(k, cap), MeasureSpace(w, spec.points)


@dataclass
class DomainGreenSpec:
    domain: str
    n: int
    alpha: float
    points: np.ndarray
    volumes: Union[float, np.ndarray]
    delta: np.ndarray
    q: QLike = 1.0
    cap: Optional[float] = None
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if self.domain not in ("unit_ball", "half_space"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if not (0.0 < self.alpha < self.n):
            raise ValueError("need 0 < alpha < n")
        if self.alpha > 2.0:
            raise ValueError("the Green surrogate is only supported for alpha <= 2")
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.delta = np.asarray(self.delta, dtype=float)
        if np.any(self.delta <= 0):
            raise BoundaryPoint(f"point {int(np.argmin(self.delta))} lies on the boundary")

    @classmethod
    def on_grid(cls, domain: str, n: int, alpha: float, resolution: int, q: QLike = 1.0,
                cap: Optional[float] = None) -> "DomainGreenSpec":
        if domain == "unit_ball":
            pts, vols, delta = ball_grid(resolution, n)
            notes = []
        elif domain == "half_space":
            pts, vols, delta = half_space_grid(resolution, n)
            notes = ["half-space truncated to [-1,1]^(n-1) x (0,1]"]
        else:
            raise ValueError(f"unknown domain {domain!r}")
        return cls(domain, n, alpha, pts, vols, delta, q, cap, notes)


def build_green_surrogate(spec: DomainGreenSpec) -> tuple[KernelMatrix, MeasureSpace, Modifier]:
    """G(x,y) = d(x)^(a/2) d(y)^(a/2) / (r^(n-a) (r + d(x) + d(y))^(a/2)), constant taken as 1.

    Returns the kernel, the measure q dx and the modifier delta^(alpha/2).
    The diagonal is clamped on the modified kernel G / (m x m) and mapped back.
    """
    a, n = spec.alpha, spec.n
    r = pairwise_distances(spec.points)
    _check_distinct(r)
    dsum = spec.delta[:, None] + spec.delta[None, :]
    with np.errstate(divide="ignore"):
        kt = 1.0 / (r ** (n - a) * (r + dsum) ** (a / 2.0))
    cap = spec.cap if spec.cap is not None else _offdiag_max(np.where(np.isfinite(kt), kt, 0.0))
    kt = np.minimum(kt, cap)
    m = spec.delta ** (a / 2.0)
    G = kt * np.outer(m, m)
    vols = np.broadcast_to(np.asarray(spec.volumes, dtype=float), (spec.points.shape[0],))
    w = _sample_q(spec.q, spec.points) * vols
    return KernelMatrix(G), MeasureSpace(w, spec.points), Modifier(m, "boundary_distance", a)


def green_min_modifier(K: KernelMatrix, x0: int) -> Modifier:
    """m(x) = min(1, K(x, x0))."""
    col = K.entries[:, x0]
    bad = np.flatnonzero(~np.isfinite(col))
    if bad.size:
        raise InfiniteAtReference(bad[0], x0)
    return Modifier(np.minimum(1.0, col), "green_min", int(x0))


def rescale_to_norm(K, omega: MeasureSpace, target: float, norm_T: Optional[float] = None) -> MeasureSpace:
    """Scale omega so that ||T|| equals ``target`` (||T|| is linear in omega)."""
    lam = operator_norm(K, omega) if norm_T is None else norm_T
    return omega.scaled(target / lam)


# dyadic model ---------------------------------------------------------------

Cube = tuple  # (generation, index tuple)
SLike = Union[float, Mapping, Callable[[int, tuple], float]]


def _resolve_s(s: SLike, cube: Cube) -> float:
    if callable(s):
        v = s(cube[0], cube[1])
    elif isinstance(s, Mapping):
        v = s[cube]
    else:
        v = s
    v = float(v)
    if not (v > 0 and math.isfinite(v)):
        raise ValueError(f"s must be positive and finite, got {v!r} on cube {cube}")
    return v


@dataclass
class DyadicModel:
    level: int
    dim: int
    omega: MeasureSpace
    s: dict
    mass: dict
    kernel: KernelMatrix
    cube_codes: np.ndarray  # (points, level+1, dim) integer cube indices
    carleson_norm: float = float("nan")

    @property
    def cubes(self) -> list:
        return sorted(self.mass)


def _cube_indices(points: np.ndarray, level: int) -> np.ndarray:
    scale = 2 ** np.arange(level + 1)
    return np.floor(points[:, None, :] * scale[None, :, None]).astype(np.int64)


def build_dyadic(points, weights, level: int, s: SLike = 1.0) -> DyadicModel:
    """K(x,y) = sum over dyadic cubes Q containing x and y of s_Q / omega(Q).

    ``points`` are the atoms of omega in [0,1)^dim; generations 0..level
    are used and only cubes of positive mass enter.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    w = np.asarray(weights, dtype=float).reshape(-1)
    if pts.shape[0] == 0 or w.size == 0 or not np.any(w > 0):
        raise EmptyMeasure("omega has no mass")
    if np.any(pts < 0) or np.any(pts >= 1):
        raise ValueError("atoms must lie in [0, 1)^dim")
    omega = MeasureSpace(w, pts)
    dim = pts.shape[1]
    codes = _cube_indices(pts, level)
    mass: dict = {}
    for i in range(pts.shape[0]):
        for g in range(level + 1):
            key = (g, tuple(int(c) for c in codes[i, g]))
            mass[key] = mass.get(key, 0.0) + w[i]
    s_map = {cube: _resolve_s(s, cube) for cube in sorted(mass)}
    # prefix[i, g]: sum of s_Q / omega(Q) over the cubes of generations 0..g containing atom i
    prefix = np.empty((pts.shape[0], level + 1))
    for i in range(pts.shape[0]):
        acc = 0.0
        for g in range(level + 1):
            key = (g, tuple(int(c) for c in codes[i, g]))
            acc = acc + s_map[key] / mass[key]
            prefix[i, g] = acc
    same = np.all(codes[:, None, :, :] == codes[None, :, :, :], axis=-1)
    deepest = same.sum(axis=-1) - 1
    K = np.take_along_axis(prefix, deepest, axis=1)
    model = DyadicModel(level, dim, omega, s_map, mass, KernelMatrix(K), codes)
    model.carleson_norm = carleson_norm(model)
    return model


def carleson_norm(model: DyadicModel) -> float:
    """sup over cubes Q of omega(Q)^-1 sum_{P inside Q} s_P omega(P)."""
    acc = dict.fromkeys(model.mass, 0.0)
    for (g, idx), m in model.mass.items():
        contrib = model.s[(g, idx)] * m
        for h in range(g + 1):
            anc = (h, tuple(c >> (g - h) for c in idx))
            acc[anc] += contrib
    return max(acc[q] / model.mass[q] for q in acc)


def dyadic_bilinear(model: DyadicModel, g) -> float:
    """sum over cubes of s_Q / omega(Q) (integral of g over Q)^2."""
    g = np.asarray(g, dtype=float)
    gw = g * model.omega.weights
    sums: dict = {}
    for i in range(gw.size):
        for lev in range(model.level + 1):
            key = (lev, tuple(int(c) for c in model.cube_codes[i, lev]))
            sums[key] = sums.get(key, 0.0) + gw[i]
    return float(sum(model.s[q] / model.mass[q] * v * v for q, v in sums.items()))


def ultrametric_violation(d) -> tuple[bool, Optional[tuple]]:
    """Exact check of d(i,j) <= max(d(i,k), d(k,j)); returns (ok, first failing triple)."""
    d = np.asarray(d, dtype=float)
    for k in range(d.shape[0]):
        bad = d > np.maximum(d[:, k, None], d[None, k, :])
        if bad.any():
            i, j = np.argwhere(bad)[0]
            return False, (int(i), int(j), k)
    return True, None
