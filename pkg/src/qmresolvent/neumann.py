"""Iterated kernels, operator norm and the Neumann-series resolvent kernel.

For a kernel K on a finite space with masses w the integral operator is
``(Tf)_i = sum_j K_ij f_j w_j``. Its iterates have kernels
``K_j = K (W K)^(j-1)`` and the resolvent kernel is ``H = sum_{j>=1} K_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DivergentSeries, KernelOverflow, NoConvergence, SingularSolve
from .space import KernelMatrix, MeasureSpace, Modifier

SYMMETRY_RTOL = 1e-12
#: An entry above this counts as blown up when reporting divergence.
BLOWUP_THRESHOLD = 1e6
#: Relative inflation of ||T|| used inside tail certificates.
NORM_SAFETY = 1e-9


def _kernel_array(K) -> np.ndarray:
    if isinstance(K, KernelMatrix):
        return K.finite().entries
    k = np.asarray(K, dtype=float)
    if not np.all(np.isfinite(k)):
        raise ValueError("kernel must be finite here; clamp it first")
    return k


def _weights(omega) -> np.ndarray:
    if isinstance(omega, MeasureSpace):
        return omega.weights
    return np.asarray(omega, dtype=float)


def apply_T(K, omega, f) -> np.ndarray:
    """(Tf)_i = sum_j K_ij f_j w_j."""
    k = _kernel_array(K)
    w = _weights(omega)
    return k @ (w * np.asarray(f, dtype=float))


def operator_norm(K, omega, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Norm of T on L2(omega), via power iteration on S = W^1/2 K W^1/2.

    Starts from the normalised ones vector and stops when successive Rayleigh
    quotients agree to ``tol`` relative.
    """
    k = _kernel_array(K)
    sw = np.sqrt(_weights(omega))
    S = sw[:, None] * k * sw[None, :]
    x = np.ones(S.shape[0]) / math.sqrt(S.shape[0])
    y = S @ x
    lam = float(x @ y)
    for _ in range(max_iter):
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        y = S @ x
        new = float(x @ y)
        if abs(new - lam) <= tol * abs(new):
            return abs(new)
        lam = new
    residual = float(np.linalg.norm(y - lam * x))
    raise NoConvergence(
        f"power iteration did not reach rtol {tol} in {max_iter} steps "
        f"(last Rayleigh quotient {lam!r}, residual {residual!r})",
        rayleigh=lam,
        residual=residual,
    )


def _check_symmetric(kj: np.ndarray, j: int) -> None:
    gap = np.abs(kj - kj.T)
    if np.any(gap > SYMMETRY_RTOL * np.abs(kj)):
        worst = float((gap / np.abs(kj)).max())
        raise AssertionError(f"K_{j} asymmetric: relative gap {worst:.3e}")


def _next_iterate(kj: np.ndarray, k: np.ndarray, w: np.ndarray, j: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        nxt = (kj * w[None, :]) @ k
    if not np.all(np.isfinite(nxt)):
        raise KernelOverflow(f"K_{j} overflowed the floating-point range")
    _check_symmetric(nxt, j)
    return nxt


def iterated_kernels(K, omega, J: int) -> list[np.ndarray]:
    """[K_1, ..., K_J] with K_1 = K and K_j = K_{j-1} W K."""
    if J < 1:
        raise ValueError("J must be at least 1")
    k = _kernel_array(K)
    w = _weights(omega)
    out = [k.copy()]
    for j in range(2, J + 1):
        out.append(_next_iterate(out[-1], k, w, j))
    return out


@dataclass
class ResolventResult:
    iterates: list
    H_series: np.ndarray
    H_solve: Optional[np.ndarray]
    norm_T: float
    J: int
    tail_bound: float
    tail: Optional[np.ndarray]
    K2: np.ndarray
    divergent: bool = False
    converged: bool = True
    blowup_j: Optional[int] = None
    cap: Optional[float] = None
    notes: list = field(default_factory=list)

    @property
    def critical(self) -> bool:
        return abs(self.norm_T - 1.0) <= 1e-12

    def solve_gap(self) -> Optional[float]:
        """max |H_series - H_solve| / H_solve."""
        if self.H_solve is None:
            return None
        return float((np.abs(self.H_series - self.H_solve) / self.H_solve).max())

    def to_dict(self) -> dict:
        return {
            "n": int(self.H_series.shape[0]),
            "norm_T": self.norm_T,
            "J": self.J,
            "tail_bound": self.tail_bound,
            "divergent": self.divergent,
            "critical": self.critical,
            "converged": self.converged,
            "blowup_j": self.blowup_j,
            "solve_gap": self.solve_gap(),
            "H_series_max": float(self.H_series.max()),
            "cap": self.cap,
            "notes": list(self.notes),
        }


def _tail(even_diag: np.ndarray, power: int, lam: float) -> np.ndarray:
    # K_{m+i}(x,y) = <T^a k_x, T^i T^a k_y> <= ||T||^i sqrt(K_m(x,x) K_m(y,y)), m = 2a + 2
    r = np.sqrt(even_diag)
    return np.outer(r, r) * (lam**power / (1.0 - lam))


def neumann_sum(
    K,
    omega,
    tol: float = 1e-10,
    max_j: int = 10_000,
    keep_iterates: Optional[int] = None,
    divergence_j: int = 200,
    norm_T: Optional[float] = None,
) -> ResolventResult:
    """Truncated Neumann series for H, with a certified tail and a direct-solve oracle.

    If ||T|| < 1 the sum stops once the certified tail is below ``tol`` times
    every entry and H_solve = (I - K W)^-1 K is attached. Otherwise partial
    sums up to ``divergence_j`` terms are returned with ``divergent`` set.
    """
    cap = K.finite().cap if isinstance(K, KernelMatrix) else None
    k = _kernel_array(K)
    w = _weights(omega)
    lam = operator_norm(k, w) if norm_T is None else float(norm_T)
    keep = (lambda j: True) if keep_iterates is None else (lambda j: j <= keep_iterates)

    iterates = [k.copy()] if keep(1) else []
    H = k.copy()
    kj = k
    K2 = None

    if lam >= 1.0:
        blowup = 1 if H.max() > BLOWUP_THRESHOLD else None
        j = 1
        while j < divergence_j and H.max() <= 1e300:
            j += 1
            kj = _next_iterate(kj, k, w, j)
            if j == 2:
                K2 = kj.copy()
            H = H + kj
            if keep(j):
                iterates.append(kj)
            if blowup is None and H.max() > BLOWUP_THRESHOLD:
                blowup = j
        if K2 is None:
            K2 = (k * w[None, :]) @ k
        res = ResolventResult(iterates, H, None, lam, j, math.inf, None, K2, divergent=True,
                              converged=False, blowup_j=blowup, cap=cap)
        res.notes.append("||T|| >= 1: Neumann series diverges; partial sums only")
        if res.critical:
            res.notes.append("||T|| = 1 to 1e-12: critical case, H may be finite or infinite")
        return res

    lam_c = min(lam * (1.0 + NORM_SAFETY), math.nextafter(1.0, 0.0))
    even_diag = None
    tail = None
    rel = math.inf
    j = 1
    while j < max_j:
        j += 1
        kj = _next_iterate(kj, k, w, j)
        if j == 2:
            K2 = kj.copy()
        H = H + kj
        if keep(j):
            iterates.append(kj)
        if j % 2 == 0:
            even_diag = np.diag(kj).copy()
        m = j if j % 2 == 0 else j - 1
        tail = _tail(even_diag, j + 1 - m, lam_c)
        rel = float((tail / H).max())
        if rel <= tol:
            break
    if K2 is None:
        K2 = (k * w[None, :]) @ k

    A = np.eye(k.shape[0]) - k * w[None, :]
    try:
        H_solve = np.linalg.solve(A, k)
    except np.linalg.LinAlgError as exc:
        raise SingularSolve(f"direct solve failed: {exc}", condition=float(np.linalg.cond(A))) from exc
    if not np.all(np.isfinite(H_solve)):
        raise SingularSolve("direct solve produced non-finite values", condition=float(np.linalg.cond(A)))

    res = ResolventResult(iterates, H, H_solve, lam, j, rel, tail, K2, converged=rel <= tol, cap=cap)
    if not res.converged:
        res.notes.append(f"tail {rel:.3e} above tol {tol:.1e} after max_j={max_j} terms")
    return res


@dataclass
class MinimalSolution:
    u0: np.ndarray
    g: np.ndarray
    method: str
    u_series: np.ndarray
    J: int
    series_gap: float
    norm_T: float

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "J": self.J,
            "series_gap": self.series_gap,
            "norm_T": self.norm_T,
            "u0_max": float(self.u0.max()),
            "u0_min": float(self.u0.min()),
        }


def minimal_solution(K, omega, g=None, tol: float = 1e-10, max_j: int = 10_000,
                     norm_T: Optional[float] = None) -> MinimalSolution:
    """Minimal positive solution of u = Tu + g (g defaults to 1).

    Solved directly and cross-checked against g + sum_j T^j g summed until the
    pointwise tail sqrt(K_2(x,x)) ||T^J g|| / (1 - ||T||) is below ``tol`` u.
    """
    k = _kernel_array(K)
    w = _weights(omega)
    n = k.shape[0]
    if g is None:
        gv = np.ones(n)
    elif isinstance(g, Modifier):
        gv = g.values.copy()
    else:
        gv = np.asarray(g, dtype=float).copy()
    if gv.shape != (n,) or np.any(gv <= 0):
        raise ValueError("g must be positive with one value per point")
    lam = operator_norm(k, w) if norm_T is None else float(norm_T)
    if lam >= 1.0:
        raise DivergentSeries(f"||T|| = {lam!r} >= 1: no finite minimal solution")
    lam_c = min(lam * (1.0 + NORM_SAFETY), math.nextafter(1.0, 0.0))

    A = np.eye(n) - k * w[None, :]
    try:
        u0 = np.linalg.solve(A, gv)
    except np.linalg.LinAlgError as exc:
        raise SingularSolve(f"direct solve failed: {exc}", condition=float(np.linalg.cond(A))) from exc

    root_k2 = np.sqrt(np.einsum("ij,j,ij->i", k, w, k))
    u = gv.copy()
    term = gv
    J = 0
    while J < max_j:
        J += 1
        term = k @ (w * term)
        u = u + term
        tail = root_k2 * math.sqrt(float(w @ term**2)) / (1.0 - lam_c)
        if np.all(tail <= tol * u):
            break
    gap = float((np.abs(u - u0) / u0).max())
    return MinimalSolution(u0, gv, "solve", u, J, gap, lam)


def geometric_T1(K, omega) -> np.ndarray:
    """T1(x) as the integral of omega(B(x,t)) / t^2 over t > 0.

    For a discrete measure the ball mass is a step function of t, so the
    integral is a finite sum over the sorted distances from x.
    """
    k = _kernel_array(K)
    w = _weights(omega)
    d = 1.0 / k
    order = np.argsort(d, axis=1, kind="stable")
    t = np.take_along_axis(d, order, axis=1)
    mass = np.cumsum(w[order], axis=1)
    inv = 1.0 / t
    gaps = inv - np.concatenate([inv[:, 1:], np.zeros((t.shape[0], 1))], axis=1)
    return (mass * gaps).sum(axis=1)
