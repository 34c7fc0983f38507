"""Command-line entry point.

Commands: diagnose, resolvent, certify, model, dyadic, sweep. Options may also
come from a JSON file given with ``--config``; keys there override flags
(precedence: built-in defaults < command-line flags < config file).

Exit codes: 0 success, 2 unreadable/malformed input, 3 kernel is not
quasi-metric, 4 a bound verdict failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import serialize
from .bounds import DEFAULT_TOL_ABS, certify_instance, certify_minimal_solution, lower_constant
from .errors import NotQuasiMetric, ParseError, QMError
from .instances import make_rng, random_instance
from .models import (
    DomainGreenSpec,
    RieszSpec,
    build_dyadic,
    build_green_surrogate,
    build_riesz,
    cube_grid,
    radial_q,
    rescale_to_norm,
    ultrametric_violation,
)
from .neumann import neumann_sum, operator_norm
from .space import KernelMatrix, MeasureSpace, QuasiMetricReport, diagnose, modify, pairwise_distances, quasimetric_constant

log = logging.getLogger("qmresolvent")

EXIT_OK, EXIT_PARSE, EXIT_NOT_QM, EXIT_VERDICT = 0, 2, 3, 4

SWEEP_HEADER = ["instance", "power", "kappa", "norm_T", "c", "c_emp", "C_emp", "C_final", "status"]


class ConfigError(ParseError):
    pass


def _load_config(args) -> None:
    if not getattr(args, "config", None):
        return
    try:
        data = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise ConfigError(0, f"cannot read config {args.config}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.lineno, f"invalid JSON in {args.config}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(1, "config must be a JSON object")
    for key, value in data.items():
        setattr(args, key.replace("-", "_"), value)


def _emit(args, name: str, payload) -> None:
    text = serialize.dump_json(payload)
    if args.output_dir:
        serialize.write_text(Path(args.output_dir) / name, text)
    sys.stdout.write(text)


def _load_kernel(args, finite: bool = True) -> tuple[KernelMatrix, MeasureSpace]:
    if not args.input:
        raise ParseError(0, "--input is required")
    K, omega = serialize.read_kernel(args.input)
    if args.cap is not None:
        K = K.clamp(float(args.cap))
    if finite and not K.is_finite:
        log.warning("infinite kernel entries clamped at the default cap")
        K = K.clamp()
    if args.target_norm is not None:
        omega = rescale_to_norm(K.finite(), omega, float(args.target_norm))
    return K, omega


def cmd_diagnose(args) -> int:
    K, _ = _load_kernel(args, finite=False)
    try:
        report = diagnose(K, ptolemy_limit=args.ptolemy_limit)
    except NotQuasiMetric as exc:
        report = QuasiMetricReport(kappa=None, kappa_witness=exc.witness, n=K.n, failure=str(exc))
        _emit(args, "report.json", report.to_dict())
        return EXIT_NOT_QM
    _emit(args, "report.json", report.to_dict())
    return EXIT_OK


def cmd_resolvent(args) -> int:
    K, omega = _load_kernel(args)
    res = neumann_sum(K, omega, tol=args.tol, max_j=args.max_j, keep_iterates=2)
    if args.output_dir:
        out = Path(args.output_dir)
        serialize.write_matrix(out / "H_series.csv", res.H_series)
        if res.H_solve is not None:
            serialize.write_matrix(out / "H_solve.csv", res.H_solve)
        serialize.write_matrix(out / "K2.csv", res.K2)
    _emit(args, "resolvent.json", res.to_dict())
    return EXIT_OK


def cmd_certify(args) -> int:
    K, omega = _load_kernel(args)
    kappa, res, ledger, cert = certify_instance(K, omega, tol=args.tol, tol_abs=args.tol_abs, max_j=args.max_j)
    payload = {
        "kappa": kappa,
        "resolvent": res.to_dict(),
        "ledger": None if ledger is None else ledger.to_dict(),
        "certificate": cert.to_dict(),
        "u0": None,
    }
    ok = cert.passed
    if not res.divergent:
        sol, u_ledger, u_cert = certify_minimal_solution(K, omega, tol=args.tol, tol_abs=args.tol_abs)
        payload["u0"] = {"solution": sol.to_dict(), "ledger": u_ledger.to_dict(), "certificate": u_cert.to_dict()}
        ok = ok and u_cert.passed
    if args.output_dir:
        out = Path(args.output_dir)
        serialize.write_matrix(out / "lower_margins.csv", cert.lower_margins)
        if cert.upper_margins is not None:
            serialize.write_matrix(out / "upper_margins.csv", cert.upper_margins)
    payload["verdict"] = "pass" if ok else "fail"
    _emit(args, "certificate.json", payload)
    return EXIT_OK if ok else EXIT_VERDICT


def _q_from(value):
    if isinstance(value, dict) and "radial" in value:
        return radial_q(value["radial"])
    return float(value)


def cmd_model(args) -> int:
    kind = args.kind
    summary = {"kind": kind}
    modifier = None
    if kind == "riesz":
        pts, vols = cube_grid(int(args.resolution), int(args.dim))
        spec = RieszSpec(int(args.dim), float(args.alpha), pts, vols, _q_from(args.q), cap=args.cap)
        K, omega = build_riesz(spec)
        summary["normalization"] = spec.normalization
    elif kind == "green":
        spec = DomainGreenSpec.on_grid(args.domain, int(args.dim), float(args.alpha), int(args.resolution),
                                       _q_from(args.q), cap=args.cap)
        K, omega, modifier = build_green_surrogate(spec)
        summary.update(domain=args.domain, notes=spec.notes + ["surrogate kernel with constant 1"])
    elif kind == "random":
        inst = random_instance(int(args.seed), int(args.index), int(args.points), None, args.family)
        K, omega = inst.K, inst.omega
        summary["meta"] = inst.meta
    else:
        raise ConfigError(0, f"unknown model kind {kind!r}")
    if args.target_norm is not None:
        omega = rescale_to_norm(K, omega, float(args.target_norm))
    summary["n"] = K.n
    summary["cap"] = K.cap
    summary["norm_T"] = operator_norm(K, omega)
    check = K if modifier is None else modify(K, omega, modifier)[0]
    try:
        summary["kappa"] = quasimetric_constant(check)[0]
    except NotQuasiMetric as exc:
        summary["kappa"] = None
        summary["failure"] = str(exc)
    if args.output_dir:
        out = Path(args.output_dir)
        serialize.write_kernel(out / "kernel.csv", K, omega)
        if modifier is not None:
            serialize.write_matrix(out / "modifier.csv", modifier.values[None, :])
    _emit(args, "model.json", summary)
    return EXIT_OK


def _dyadic_s(args, rng):
    if args.s_rule == "constant":
        return float(args.s_value)
    if args.s_rule == "random":
        cache = {}

        def s(gen, idx):
            if (gen, idx) not in cache:
                cache[(gen, idx)] = float(args.s_value) * rng.uniform(0.5, 1.5)
            return cache[(gen, idx)]

        return s
    if args.s_rule == "file":
        try:
            entries = json.loads(Path(args.s_file).read_text())
        except (OSError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(0, f"cannot read s-file: {exc}") from None
        return {(int(g), tuple(int(c) for c in idx)): float(v) for g, idx, v in entries}
    raise ConfigError(0, f"unknown s rule {args.s_rule!r}")


def cmd_dyadic(args) -> int:
    rng = make_rng(int(args.seed), 0)
    atoms = rng.random((int(args.points), int(args.dim)))
    weights = rng.uniform(0.5, 1.5, size=atoms.shape[0]) / atoms.shape[0]
    model = build_dyadic(atoms, weights, int(args.level), _dyadic_s(args, rng))
    omega = model.omega
    if args.target_norm is not None:
        scale = float(args.target_norm) / operator_norm(model.kernel, omega)
        model = build_dyadic(atoms, weights * scale, int(args.level), model.s)
        omega = model.omega
    lam = operator_norm(model.kernel, omega)
    ok, witness = ultrametric_violation(model.kernel.distances())
    summary = {
        "level": model.level,
        "dim": model.dim,
        "atoms": omega.n,
        "cubes": len(model.mass),
        "carleson_norm": model.carleson_norm,
        "norm_T": lam,
        "ratio_norm_to_carleson": lam / model.carleson_norm,
        "ultrametric": ok,
        "ultrametric_witness": witness,
        "notes": ["sharpness of the constant 4 is not asserted (report only)"],
    }
    if args.output_dir:
        serialize.write_kernel(Path(args.output_dir) / "kernel.csv", model.kernel, omega)
    _emit(args, "dyadic.json", summary)
    return EXIT_OK


def sweep_rows(seed: int, points: int, powers, norms, tol: float, eps: float = 1e-2) -> list[list]:
    """One row per (power, norm) on a fixed random geometry with K = (|x-y| + eps)^(-p)."""
    rng = make_rng(seed, 0)
    pts = rng.random((points, 2))
    base = pairwise_distances(pts) + eps
    weights = rng.uniform(0.5, 1.5, size=points)
    rows = []
    for p in powers:
        for target in norms:
            name = f"p{p:g}-t{target:g}"
            try:
                K = KernelMatrix.from_distances(base ** float(p))
                omega = rescale_to_norm(K, MeasureSpace(weights), float(target))
                kappa, res, ledger, cert = certify_instance(K, omega, tol=tol)
                rows.append([
                    name, p, kappa, res.norm_T, lower_constant(kappa), cert.c_empirical, cert.C_empirical,
                    None if ledger is None else ledger.C_final, "pass" if cert.passed else "fail",
                ])
            except (QMError, ValueError, ArithmeticError) as exc:
                rows.append([name, p, None, None, None, None, None, None, f"error: {exc}"])
    return rows


def cmd_sweep(args) -> int:
    rows = sweep_rows(int(args.seed), int(args.points), list(args.powers or []), list(args.norms or []), args.tol)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for row in rows:
        writer.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                         for v in row])
    if args.output_dir:
        serialize.write_text(Path(args.output_dir) / "sweep.csv", buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _float_list(text: str):
    return [float(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="kernel file (count, weights, upper triangle)")
    common.add_argument("--output-dir", help="directory for reports and matrices")
    common.add_argument("--config", help="JSON file whose keys override flags")
    common.add_argument("--tol", type=float, default=1e-10, help="relative truncation tolerance")
    common.add_argument("--tol-abs", type=float, default=DEFAULT_TOL_ABS, help="log-space margin tolerance")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--target-norm", type=float, default=None, help="rescale omega to this ||T||")
    common.add_argument("--max-j", type=int, default=10_000, help="maximum Neumann terms")
    common.add_argument("--cap", type=float, default=None, help="clamp kernel entries at this value")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qmresolvent", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("diagnose", parents=[common], help="quasi-metric, Ptolemy and snowflake constants")
    p.add_argument("--ptolemy-limit", type=int, default=60, help="skip the O(n^4) Ptolemy scan above this n")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("resolvent", parents=[common], help="Neumann series and direct solve for H")
    p.set_defaults(func=cmd_resolvent)

    p = sub.add_parser("certify", parents=[common], help="certify the two-sided bounds for H and u0")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("model", parents=[common], help="generate a model kernel file")
    p.add_argument("--kind", choices=["riesz", "green", "random"], default="random")
    p.add_argument("--domain", choices=["unit_ball", "half_space"], default="unit_ball")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--resolution", type=int, default=10)
    p.add_argument("--q", type=float, default=1.0, help="constant potential (config may give {\"radial\": [...]})")
    p.add_argument("--points", type=int, default=30, help="point count for random kernels")
    p.add_argument("--family", default="power")
    p.add_argument("--index", type=int, default=0)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("dyadic", parents=[common], help="dyadic Carleson model")
    p.add_argument("--level", type=int, default=4)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--points", type=int, default=32, help="number of atoms")
    p.add_argument("--s-rule", choices=["constant", "random", "file"], default="random")
    p.add_argument("--s-value", type=float, default=0.05)
    p.add_argument("--s-file", help="JSON list of [generation, [index...], value]")
    p.set_defaults(func=cmd_dyadic)

    p = sub.add_parser("sweep", parents=[common], help="plot-ready CSV over kernel powers and norms")
    p.add_argument("--points", type=int, default=30)
    p.add_argument("--powers", type=_float_list, default=[1.0, 1.5, 2.0])
    p.add_argument("--norms", type=_float_list, default=[0.1, 0.3, 0.5, 0.7, 0.9])
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _load_config(args)
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NotQuasiMetric as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_QM
    except (QMError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
