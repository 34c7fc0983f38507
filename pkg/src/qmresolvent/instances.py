"""Seeded random quasi-metric instances.

Every stream comes from numpy's counter-based Philox generator keyed by a
``SeedSequence(seed, spawn_key=...)``, so instance ``i`` of a suite is
reproducible from ``(seed, i)`` alone, independent of the other instances.

Families (d is the distance, K = 1/d):

``power``      d = |x - y|^p + eps on uniform points of the unit square.
``perturbed``  the power family times exp(sigma * Z) with Z symmetric Gaussian.
``ultra``      an ultrametric from a random hierarchical clustering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .neumann import operator_norm
from .space import KernelMatrix, MeasureSpace, pairwise_distances

FAMILIES = ("power", "perturbed", "ultra")


def make_rng(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _power_distances(rng, n, p, eps, dim=2):
    pts = rng.random((n, dim))
    return pairwise_distances(pts) ** p + eps, pts


def _ultra_distances(rng, n):
    # merge clusters at increasing heights; d(x,y) = height at which x and y join
    heights = np.sort(rng.uniform(0.05, 1.0, size=n - 1)) if n > 1 else np.array([])
    label = np.arange(n)
    d = np.full((n, n), 0.02)
    for h in heights:
        roots = np.unique(label)
        a, b = rng.choice(roots, size=2, replace=False)
        ia, ib = label == a, label == b
        d[np.ix_(ia, ib)] = h
        d[np.ix_(ib, ia)] = h
        label[ib] = a
    return d


def random_quasimetric(rng: np.random.Generator, n: int, family: str = "power",
                       p: Optional[float] = None, eps: Optional[float] = None,
                       sigma: float = 0.3) -> tuple[KernelMatrix, MeasureSpace]:
    """One random finite quasi-metric kernel with positive diagonal distance."""
    pts = None
    if family in ("power", "perturbed"):
        p = float(rng.uniform(1.0, 2.5)) if p is None else p
        eps = float(10 ** rng.uniform(-3, -1)) if eps is None else eps
        d, pts = _power_distances(rng, n, p, eps)
        if family == "perturbed":
            z = rng.normal(size=(n, n))
            z = (z + z.T) / np.sqrt(2.0)
            d = d * np.exp(sigma * z)
    elif family == "ultra":
        d = _ultra_distances(rng, n)
    else:
        raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")
    K = KernelMatrix.from_distances(d)
    w = rng.uniform(0.5, 1.5, size=n)
    return K, MeasureSpace(w, pts)


@dataclass
class Instance:
    name: str
    K: KernelMatrix
    omega: MeasureSpace
    norm_T: float
    meta: dict = field(default_factory=dict)


def random_instance(seed: int, index: int, n: int, target_norm: Optional[float] = None,
                    family: str = "power", **kwargs) -> Instance:
    """Instance ``index`` of the stream ``seed``; omega rescaled to ``target_norm`` if given."""
    rng = make_rng(seed, index)
    K, omega = random_quasimetric(rng, n, family, **kwargs)
    lam = operator_norm(K, omega)
    if target_norm is not None:
        omega = omega.scaled(target_norm / lam)
        lam = operator_norm(K, omega)
    meta = {"seed": seed, "index": index, "n": n, "family": family, "target_norm": target_norm}
    meta.update({k: v for k, v in kwargs.items() if v is not None})
    return Instance(f"{family}-{seed}-{index}-n{n}", K, omega, lam, meta)


def suite(seed: int, count: int, sizes: Sequence[int], norms: Sequence[Optional[float]],
          families: Sequence[str] = ("power", "perturbed")) -> list[Instance]:
    """``count`` instances cycling through sizes, norms and families."""
    return [
        random_instance(seed, i, sizes[i % len(sizes)], norms[i % len(norms)],
                        families[(i // len(sizes)) % len(families)])
        for i in range(count)
    ]
