"""Resolvent kernels of integral operators with quasi-metric kernels on finite measure spaces."""

from .bounds import (
    BoundCertificate,
    ConstantLedger,
    certify,
    certify_instance,
    certify_minimal_solution,
    certify_u0,
    equivalence_report,
    lower_constant,
    upper_constant,
)
from .neumann import (
    MinimalSolution,
    ResolventResult,
    apply_T,
    geometric_T1,
    iterated_kernels,
    minimal_solution,
    neumann_sum,
    operator_norm,
)
from .space import (
    KernelMatrix,
    MeasureSpace,
    Modifier,
    QuasiMetricReport,
    diagnose,
    extend_with_far_point,
    find_modifier,
    modify,
    ptolemy_constant,
    quasimetric_constant,
    snowflake,
)

__version__ = "0.1.0"
