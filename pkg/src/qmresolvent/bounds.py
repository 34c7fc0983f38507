"""Explicit constants and certification of the two-sided exponential bounds.

Lower:  H >= K exp(c K2/K)  with c = 1/(4 kappa^2).
Upper:  H <= K exp(C K2/K)  with C assembled from the snowflake /
inverse-Ptolemy chain, valid when ||T|| < 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DivergentSeries, InvalidNorm
from .neumann import MinimalSolution, apply_T, minimal_solution, neumann_sum, operator_norm
from .space import KernelMatrix, MeasureSpace, Modifier, modify, quasimetric_constant

DEFAULT_TOL_ABS = 1e-9


def lower_constant(kappa: float) -> float:
    if kappa < 0.5:
        raise ValueError("a quasi-metric constant is at least 1/2")
    return 1.0 / (4.0 * kappa * kappa)


@dataclass(frozen=True)
class ConstantLedger:
    kappa: float
    norm_T: float
    c: float
    alpha: float
    tau: float
    beta: float
    rho: float
    C_tau_kappa: float
    A: float
    B: float
    C_final: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def upper_constant(kappa: float, norm_T: float) -> ConstantLedger:
    """Fill the constant ledger for given kappa and ||T||.

    alpha = ||T||^(-1/2) sits geometrically midway in (1, 1/||T||); tau is
    chosen with tau^beta = sqrt(alpha), so rho = tau^beta / alpha = ||T||^(1/4).
    """
    if not (0.0 < norm_T < 1.0):
        raise InvalidNorm(f"||T|| must lie in (0, 1), got {norm_T!r}")
    c = lower_constant(kappa)
    two_k = 2.0 * kappa
    beta = 2.0 * math.log2(two_k)
    log_alpha = -0.5 * math.log(norm_T)
    alpha = math.exp(log_alpha)
    rho = math.exp(-0.5 * log_alpha)
    if beta > 0.0:
        log_tau = log_alpha / (2.0 * beta)
        tau = math.exp(log_tau) if log_tau < 700.0 else math.inf
        # (1 - 1/tau)^(-2 beta), via log1p for tau near 1 or huge
        log_factor = -2.0 * beta * math.log1p(-math.exp(-log_tau))
    else:
        # beta -> 0+ limit: tau -> inf and the factor tends to 1
        tau = math.inf
        log_factor = 0.0
    C_tau_kappa = math.exp(6.0 * math.log(two_k) + log_factor)
    A = two_k**2 / (1.0 - rho)
    B = C_tau_kappa / (1.0 - rho)
    return ConstantLedger(
        kappa=float(kappa),
        norm_T=float(norm_T),
        c=c,
        alpha=alpha,
        tau=tau,
        beta=beta,
        rho=rho,
        C_tau_kappa=C_tau_kappa,
        A=A,
        B=B,
        C_final=2.0 * max(A, B),
    )


Constants = Union[ConstantLedger, float]


def _split(constants: Constants) -> tuple[float, Optional[float]]:
    if isinstance(constants, ConstantLedger):
        return constants.c, constants.C_final
    return float(constants), None


@dataclass
class BoundCertificate:
    lower_margins: np.ndarray
    upper_margins: Optional[np.ndarray]
    c: float
    C: Optional[float]
    c_empirical: Optional[float]
    C_empirical: Optional[float]
    lower_pass: bool
    upper_pass: Optional[bool]
    tol_abs: float
    flagged: Optional[np.ndarray] = None
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.lower_pass and self.upper_pass is not False

    def to_dict(self) -> dict:
        up = self.upper_margins
        return {
            "c": self.c,
            "C": self.C,
            "c_empirical": self.c_empirical,
            "C_empirical": self.C_empirical,
            "lower_pass": self.lower_pass,
            "upper_pass": self.upper_pass,
            "min_lower_margin": float(self.lower_margins.min()),
            "min_upper_margin": None if up is None else float(up.min()),
            "tol_abs": self.tol_abs,
            "flagged": 0 if self.flagged is None else int(self.flagged.sum()),
            "notes": list(self.notes),
        }


def _log_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # log(num/den) with the small-difference case through log1p
    return np.log1p((num - den) / den)


def _certify_logs(log_gain, V, constants, tol_abs, flagged=None) -> BoundCertificate:
    c, C = _split(constants)
    lower = log_gain - c * V
    upper = None if C is None else C * V - log_gain
    usable = V > tol_abs
    c_emp = C_emp = None
    if usable.any():
        ratio = log_gain[usable] / V[usable]
        c_emp, C_emp = float(ratio.min()), float(ratio.max())
    cert = BoundCertificate(
        lower_margins=lower,
        upper_margins=upper,
        c=c,
        C=C,
        c_empirical=c_emp,
        C_empirical=C_emp,
        lower_pass=bool(np.all(lower >= -tol_abs)),
        upper_pass=None if upper is None else bool(np.all(upper >= -tol_abs)),
        tol_abs=tol_abs,
        flagged=flagged,
    )
    if upper is None:
        cert.notes.append("lower bound only (no upper constant supplied)")
    return cert


def certify(H, K, K2, constants: Constants, tol_abs: float = DEFAULT_TOL_ABS) -> BoundCertificate:
    """Entrywise margins of K e^{cV} <= H <= K e^{CV}, V = K2/K, in log space.

    ``constants`` is a ConstantLedger, or a bare lower constant c for a
    lower-only check. Entries sitting at the kernel clamp are flagged.
    """
    flagged = None
    if isinstance(K, KernelMatrix):
        flagged = K.clamped_mask()
        k = K.finite().entries
    else:
        k = np.asarray(K, dtype=float)
    H = np.asarray(H, dtype=float)
    K2 = np.asarray(K2, dtype=float)
    if not (H.shape == k.shape == K2.shape):
        raise ValueError("H, K and K2 must have the same shape")
    cert = _certify_logs(_log_ratio(H, k), K2 / k, constants, tol_abs, flagged)
    if flagged is not None and flagged.any():
        cert.notes.append(f"{int(flagged.sum())} entries sit at the clamp value {K.cap!r}")
    return cert


def certify_u0(u0: MinimalSolution, T_g_over_g, m, constants: Constants,
               tol_abs: float = DEFAULT_TOL_ABS) -> BoundCertificate:
    """Pointwise margins of m e^{c Tm/m} <= u0 <= m e^{C Tm/m}; ``m=None`` means m = 1."""
    if m is None:
        mv = np.ones_like(u0.u0)
    elif isinstance(m, Modifier):
        mv = m.values
    else:
        mv = np.asarray(m, dtype=float)
    return _certify_logs(_log_ratio(u0.u0, mv), np.asarray(T_g_over_g, dtype=float), constants, tol_abs)


def term_lower_margins(iterates, c: float) -> list[np.ndarray]:
    """log-space margins of K_j >= c^-1 K (c V)^(j-1) / (j-1)! for j = 2..len(iterates)."""
    k = iterates[0]
    logV = np.log(iterates[1]) - np.log(k)
    out = []
    for j in range(2, len(iterates) + 1):
        rhs = -math.log(c) + np.log(k) + (j - 1) * (math.log(c) + logV) - math.lgamma(j)
        out.append(np.log(iterates[j - 1]) - rhs)
    return out


def u0_ledger_kappa(kappa: float) -> float:
    """Quasi-metric constant of the far-point extension, used for the u0 bounds."""
    return max(kappa, 1.0)


@dataclass
class EquivalenceReport:
    norm_T: float
    C1: float
    C2: float
    sup_Tm_over_m: float
    sup_u0_over_m: float
    kappa: float
    divergent: bool
    checks: dict = field(default_factory=dict)

    @property
    def consistent(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "norm_T": self.norm_T,
            "kappa": self.kappa,
            "C1": self.C1,
            "C2": self.C2,
            "sup_Tm_over_m": self.sup_Tm_over_m,
            "sup_u0_over_m": self.sup_u0_over_m,
            "divergent": self.divergent,
            "checks": dict(self.checks),
        }


def equivalence_report(K: KernelMatrix, omega: MeasureSpace, m=None, tol: float = 1e-10) -> EquivalenceReport:
    """Finite-scale check of the equivalence of (a) H <= C1 K, (b) ||T|| < 1 with
    K2 <= C2 K, and (c) bounded u0/m, for the kernel modified by ``m``.

    Infinite sup values mean the corresponding series diverges.
    """
    K = K.finite()
    mv = np.ones(K.n) if m is None else (m.values if isinstance(m, Modifier) else np.asarray(m, float))
    Kt, wt = modify(K, omega, mv)
    kappa, _ = quasimetric_constant(Kt)
    res = neumann_sum(K, omega, tol=tol)
    k = K.entries
    C2 = float((res.K2 / k).max())
    Tm_over_m = apply_T(K, omega, mv) / mv
    checks = {}
    if res.divergent:
        C1 = math.inf
        sup_u0 = math.inf
        try:
            minimal_solution(K, omega, mv, tol=tol, norm_T=res.norm_T)
            u0_diverges = False
        except DivergentSeries:
            u0_diverges = True
        checks["divergence_flags_agree"] = u0_diverges and res.H_series.max() > res.K2.max()
    else:
        H = res.H_solve
        C1 = float((H / k).max())
        sol = minimal_solution(K, omega, mv, tol=tol, norm_T=res.norm_T)
        sup_u0 = float((sol.u0 / mv).max())
        ledger = upper_constant(kappa, res.norm_T)
        # (b) => (a): H/K <= exp(C_final K2/K) <= exp(C_final C2)
        checks["b_implies_a"] = math.log(C1) <= ledger.C_final * C2 + DEFAULT_TOL_ABS
        # (c) => ||T|| <= 1 - 1/sup(u0/m) by the Schur test with u0
        checks["c_implies_schur"] = res.norm_T <= 1.0 - 1.0 / sup_u0 + 1e-9
    # K2~ <= kappa K~ (T~1(x) + T~1(y)) and, bounded diameter, T~1 <= 3 kappa C2
    T1t = apply_T(Kt, wt, np.ones(K.n))
    K2t = (Kt.entries * wt.weights[None, :]) @ Kt.entries
    rhs = kappa * Kt.entries * (T1t[:, None] + T1t[None, :])
    checks["K2_le_kappa_K_T1"] = bool(np.all(K2t <= rhs * (1.0 + 1e-12)))
    checks["T1_le_3kappa_C2"] = bool(T1t.max() <= 3.0 * kappa * C2 * (1.0 + 1e-12))
    return EquivalenceReport(
        norm_T=res.norm_T,
        C1=C1,
        C2=C2,
        sup_Tm_over_m=float(Tm_over_m.max()),
        sup_u0_over_m=sup_u0,
        kappa=kappa,
        divergent=res.divergent,
        checks=checks,
    )


def certify_instance(K: KernelMatrix, omega: MeasureSpace, tol: float = 1e-10,
                     tol_abs: float = DEFAULT_TOL_ABS, kappa: Optional[float] = None,
                     max_j: int = 10_000, keep_iterates: Optional[int] = 2):
    """Full pipeline: kappa, resolvent, ledger and certificate for one kernel.

    Returns (kappa, ResolventResult, ConstantLedger or None, BoundCertificate).
    The certificate is taken on H_series; for ||T|| >= 1 it is lower-only.
    """
    if kappa is None:
        kappa, _ = quasimetric_constant(K)
    res = neumann_sum(K, omega, tol=tol, max_j=max_j, keep_iterates=keep_iterates)
    if res.divergent:
        ledger = None
        cert = certify(res.H_series, K, res.K2, lower_constant(kappa), tol_abs)
        cert.notes.append("divergent series: partial sums certified against the lower bound")
    else:
        ledger = upper_constant(kappa, res.norm_T)
        cert = certify(res.H_series, K, res.K2, ledger, tol_abs)
    return kappa, res, ledger, cert


def certify_minimal_solution(K: KernelMatrix, omega: MeasureSpace, m=None, tol: float = 1e-10,
                             tol_abs: float = DEFAULT_TOL_ABS):
    """u0 bounds for u = Tu + m with constants from the modified kernel's far-point constant.

    Returns (MinimalSolution, ConstantLedger, BoundCertificate).
    """
    K = K.finite()
    mv = np.ones(K.n) if m is None else (m.values if isinstance(m, Modifier) else np.asarray(m, float))
    Kt, _ = modify(K, omega, mv)
    kappa, _ = quasimetric_constant(Kt)
    lam = operator_norm(K, omega)
    if lam >= 1.0:
        raise DivergentSeries(f"||T|| = {lam!r} >= 1")
    sol = minimal_solution(K, omega, mv, tol=tol, norm_T=lam)
    ledger = upper_constant(u0_ledger_kappa(kappa), lam)
    ratio = apply_T(K, omega, mv) / mv
    return sol, ledger, certify_u0(sol, ratio, mv, ledger, tol_abs)
