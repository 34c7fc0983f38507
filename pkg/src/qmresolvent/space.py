"""Finite measure spaces, kernels and quasi-metric diagnostics.

A kernel K on a finite set is stored as a dense symmetric matrix with entries
in (0, +inf]; the associated distance is d = 1/K (with 1/inf = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InfiniteAtReference, NotPtolemy, NotQuasiMetric, Unbounded

#: Default clamp is this factor times the largest finite kernel entry.
DEFAULT_CAP_FACTOR = 1e12


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MeasureSpace:
    """Finite point set with point masses ``weights``.

    ``points`` optionally carries Euclidean coordinates (shape ``(n, dim)``).
    ``allow_null`` admits zero masses; it exists for the far-point extension
    and is off everywhere else.
    """

    weights: np.ndarray
    points: Optional[np.ndarray] = None
    allow_null: bool = False

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size == 0:
            raise ValueError("a measure space needs at least one point")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if self.allow_null:
            if np.any(w < 0) or not np.any(w > 0):
                raise ValueError("weights must be nonnegative and not all zero")
        elif np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        object.__setattr__(self, "weights", _readonly(w))
        if self.points is not None:
            p = np.array(self.points, dtype=float)
            if p.ndim == 1:
                p = p[:, None]
            if p.shape[0] != w.size:
                raise ValueError("points and weights disagree in length")
            object.__setattr__(self, "points", _readonly(p))

    @property
    def n(self) -> int:
        return self.weights.size

    def scaled(self, factor: float) -> "MeasureSpace":
        return MeasureSpace(self.weights * factor, self.points, self.allow_null)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Symmetric kernel with entries in (0, +inf], optionally clamped at ``cap``."""

    entries: np.ndarray
    cap: Optional[float] = None

    def __post_init__(self):
        k = np.array(self.entries, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] == 0:
            raise ValueError(f"kernel must be a non-empty square matrix, got shape {k.shape}")
        if np.any(np.isnan(k)):
            raise ValueError("kernel contains NaN")
        if not np.array_equal(k, k.T):
            raise ValueError("kernel is not exactly symmetric")
        if np.any(k <= 0):
            raise ValueError("kernel entries must be strictly positive")
        if self.cap is not None:
            cap = float(self.cap)
            if not (cap > 0 and math.isfinite(cap)):
                raise ValueError("cap must be positive and finite")
            if np.any(k > cap):
                raise ValueError("entries exceed the declared cap")
            object.__setattr__(self, "cap", cap)
        object.__setattr__(self, "entries", _readonly(k))

    @classmethod
    def from_distances(cls, d, cap: Optional[float] = None) -> "KernelMatrix":
        d = np.asarray(d, dtype=float)
        with np.errstate(divide="ignore"):
            k = 1.0 / d
        if cap is not None:
            k = np.minimum(k, cap)
        return cls(k, cap)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.entries)))

    def distances(self) -> np.ndarray:
        with np.errstate(divide="ignore", over="ignore"):
            return 1.0 / self.entries

    def default_cap(self) -> float:
        finite = self.entries[np.isfinite(self.entries)]
        if finite.size == 0:
            raise ValueError("kernel has no finite entries to derive a cap from")
        return float(DEFAULT_CAP_FACTOR * finite.max())

    def clamp(self, cap: Optional[float] = None) -> "KernelMatrix":
        """Return ``min(K, cap)``; ``cap`` defaults to the kernel's own or the default rule."""
        if cap is None:
            cap = self.cap if self.cap is not None else self.default_cap()
        return KernelMatrix(np.minimum(self.entries, cap), cap)

    def finite(self) -> "KernelMatrix":
        return self if self.is_finite else self.clamp()

    def clamped_mask(self) -> np.ndarray:
        if self.cap is None:
            return np.zeros(self.entries.shape, dtype=bool)
        return self.entries == self.cap


@dataclass(frozen=True, eq=False)
class Modifier:
    values: np.ndarray
    source: str = "user_supplied"
    param: object = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size == 0 or not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("modifier values must be strictly positive and finite")
        object.__setattr__(self, "values", _readonly(v))

    def reciprocal(self) -> "Modifier":
        return Modifier(1.0 / self.values, "user_supplied")


@dataclass
class QuasiMetricReport:
    kappa: float
    kappa_witness: tuple
    ptolemy: Optional[float] = None
    ptolemy_witness: Optional[tuple] = None
    beta: Optional[float] = None
    snowflake_comparability: Optional[float] = None
    n: Optional[int] = None
    failure: Optional[str] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "kappa": self.kappa,
            "kappa_witness": list(self.kappa_witness) if self.kappa_witness is not None else None,
            "ptolemy": self.ptolemy,
            "ptolemy_witness": list(self.ptolemy_witness) if self.ptolemy_witness is not None else None,
            "ptolemy_bound": None if self.kappa is None else 4.0 * self.kappa**2,
            "beta": self.beta,
            "snowflake_comparability": self.snowflake_comparability,
            "failure": self.failure,
            "notes": list(self.notes),
        }


def _as_distances(K) -> np.ndarray:
    if isinstance(K, KernelMatrix):
        return K.distances()
    return np.asarray(K, dtype=float)


def _triple_ratios(d: np.ndarray, k: int):
    """Ratios d(i,j)/(d(i,k)+d(k,j)) for fixed k; returns (ratio, bad) with 0/0 -> -inf."""
    den = d[:, k, None] + d[None, k, :]
    zero = den == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(zero, -np.inf, d / den)
    bad = zero & (d > 0)
    return ratio, bad


def triple_scan(d) -> tuple[float, tuple]:
    """Exhaustive scan of max d(i,j) / (d(i,k) + d(k,j)) over ordered triples.

    Works on a distance matrix. Ties prefer triples of three distinct indices,
    then the lexicographically smallest one.
    """
    d = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d)):
        raise Unbounded("triple scan needs finite distances")
    n = d.shape[0]
    per_k = np.empty(n)
    bad_triples = []
    for k in range(n):
        ratio, bad = _triple_ratios(d, k)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            bad_triples.append((int(i), int(j), k))
        per_k[k] = ratio.max()
    if bad_triples:
        raise NotQuasiMetric(min(bad_triples))
    best = per_k.max()
    if best == -np.inf:
        raise NotQuasiMetric((0, 0, 0), "distance is identically zero")
    candidates = []
    for k in np.flatnonzero(per_k == best):
        ratio, _ = _triple_ratios(d, int(k))
        for i, j in np.argwhere(ratio == best):
            t = (int(i), int(j), int(k))
            candidates.append((len(set(t)) < 3, t))
    return float(best), min(candidates)[1]


def quasimetric_constant(K) -> tuple[float, tuple]:
    """Smallest kappa with d(x,y) <= kappa (d(x,z) + d(z,y)) on all triples, plus a witness."""
    return triple_scan(_as_distances(K))


def ptolemy_constant(K) -> tuple[float, tuple]:
    """Best constant in st <= C max(ac, bd) over all ordered quadruples.

    With (y1, y2, y3, y4): a = d12, b = d23, c = d34, d = d41, s = d24, t = d13.
    Cost is O(n^4); intended for n up to a few dozen.
    """
    d = _as_distances(K)
    n = d.shape[0]
    off = ~np.eye(n, dtype=bool)
    if not np.all(np.isfinite(d[off])):
        raise ValueError("Ptolemy scan needs finite off-diagonal distances")
    best = -np.inf
    witness = None
    failures = []
    b = d[:, :, None]          # d(y2, y3)
    c = d[None, :, :]          # d(y3, y4)
    s = d[:, None, :]          # d(y2, y4)
    for y1 in range(n):
        a = d[y1, :][:, None, None]        # d(y1, y2)
        dd = d[:, y1][None, None, :]       # d(y4, y1)
        t = d[y1, :][None, :, None]        # d(y1, y3)
        num = s * t
        den = np.maximum(a * c, b * dd)
        zero = den == 0
        bad = zero & (num > 0)
        if bad.any():
            failures.append((y1, *map(int, np.argwhere(bad)[0])))
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(zero, -np.inf, num / den)
        m = ratio.max()
        if m > best:
            best = m
            witness = (y1, *map(int, np.argwhere(ratio == m)[0]))
    if failures:
        raise NotPtolemy(min(failures))
    if witness is None:
        raise NotPtolemy((0, 0, 0, 0), "all quadruples degenerate")
    # argwhere is row-major and y1 ascends, so the first hit at the max is lexicographically smallest
    return float(best), tuple(int(v) for v in witness)


def floyd_warshall(lengths: np.ndarray) -> np.ndarray:
    """All-pairs shortest chains of at least one edge in the complete graph.

    Self-loops keep their own length, so the diagonal may stay positive.
    """
    D = np.array(lengths, dtype=float, copy=True)
    for k in range(D.shape[0]):
        np.minimum(D, D[:, k, None] + D[None, k, :], out=D)
    return D


@dataclass
class Snowflake:
    D: np.ndarray
    beta: float
    comparability: float
    kappa: float
    lower_ok: bool
    triangle_constant: float

    @property
    def comparability_bound(self) -> float:
        return (2.0 * self.kappa) ** 2 if self.kappa > 0.5 else 1.0


def snowflake(K, kappa: Optional[float] = None) -> Snowflake:
    """Quasi-metric D with constant 1 and D^beta <= d <= C D^beta, beta = 2 log2(2 kappa).

    D is the chain infimum of d^(1/beta). ``comparability`` is the measured
    smallest C, to be compared with (2 kappa)^2.
    """
    d = _as_distances(K)
    if kappa is None:
        kappa, _ = triple_scan(d)
    beta = 2.0 * math.log2(2.0 * kappa)
    if beta <= 0.0:
        # kappa = 1/2 forces d constant; any exponent reproduces it exactly
        beta = 1.0
    scale = d.max()
    if not math.isfinite(scale):
        raise Unbounded("snowflake needs finite distances")
    dn = d / scale
    rho = dn ** (1.0 / beta)
    Dn = floyd_warshall(rho)
    Db = Dn**beta
    lower_ok = bool(np.all(Db <= dn * (1.0 + 1e-12)))
    pos = Dn > 0
    if np.any(~pos & (dn > 0)):
        comparability = math.inf
    else:
        comparability = float((dn[pos] / Db[pos]).max()) if pos.any() else 1.0
    tri, _ = triple_scan(Dn)
    return Snowflake(
        D=Dn * scale ** (1.0 / beta),
        beta=beta,
        comparability=comparability,
        kappa=float(kappa),
        lower_ok=lower_ok,
        triangle_constant=tri,
    )


def find_modifier(K: KernelMatrix, w: int) -> Modifier:
    """Modifier m(x) = K(x, w) built from a reference point ``w``."""
    col = K.entries[:, w]
    bad = np.flatnonzero(~np.isfinite(col))
    if bad.size:
        raise InfiniteAtReference(bad[0], w)
    return Modifier(col.copy(), "reference_point", int(w))


def modify(K: KernelMatrix, omega: MeasureSpace, m) -> tuple[KernelMatrix, MeasureSpace]:
    """K~ = K / (m(x) m(y)) and omega~ = m^2 omega."""
    mv = m.values if isinstance(m, Modifier) else np.asarray(m, dtype=float)
    if mv.shape != (K.n,) or np.any(mv <= 0):
        raise ValueError("modifier must be positive with one value per point")
    Kt = K.entries / np.outer(mv, mv)
    return KernelMatrix(Kt), MeasureSpace(mv**2 * omega.weights, omega.points, omega.allow_null)


@dataclass
class FarPointExtension:
    K: KernelMatrix
    omega: MeasureSpace
    z: int
    diameter: float


def extend_with_far_point(K: KernelMatrix, omega: MeasureSpace) -> FarPointExtension:
    """Append a null point z with d*(x, z) = diam_d for every x and d*(z, z) = 0 (clamped)."""
    d = K.distances()
    diam = float(d.max())
    if not math.isfinite(diam):
        raise Unbounded("some d(x,y) is infinite")
    n = K.n
    cap = K.cap if K.cap is not None else K.default_cap()
    ext = np.empty((n + 1, n + 1))
    ext[:n, :n] = K.entries
    ext[:n, n] = ext[n, :n] = 1.0 / diam
    ext[n, n] = cap
    w = np.append(omega.weights, 0.0)
    pts = None
    if omega.points is not None:
        pts = np.vstack([omega.points, np.full((1, omega.points.shape[1]), np.nan)])
    return FarPointExtension(
        KernelMatrix(ext, K.cap),
        MeasureSpace(w, pts, allow_null=True),
        n,
        diam,
    )


def diagnose(K: KernelMatrix, ptolemy_limit: int = 60, with_snowflake: bool = True) -> QuasiMetricReport:
    """Collect kappa, Ptolemy constant (for n <= ptolemy_limit) and the snowflake summary."""
    kappa, wit = quasimetric_constant(K)
    report = QuasiMetricReport(kappa=kappa, kappa_witness=wit, n=K.n)
    d = K.distances()
    off = ~np.eye(K.n, dtype=bool)
    if K.n <= ptolemy_limit and np.all(np.isfinite(d[off])):
        report.ptolemy, report.ptolemy_witness = ptolemy_constant(K)
    else:
        report.notes.append(f"Ptolemy scan skipped (n={K.n} > {ptolemy_limit})")
    if with_snowflake:
        sf = snowflake(K, kappa)
        report.beta = sf.beta
        report.snowflake_comparability = sf.comparability
    return report


def pairwise_distances(points: Sequence) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    diff = p[:, None, :] - p[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
