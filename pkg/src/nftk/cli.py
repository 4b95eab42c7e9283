"""Command-line interface: ``nftk {analyze,average,solve,verify,decompose}``.

Exit codes: 0 on pass, 2 when the input is rejected on mathematical
grounds (resonant perturbation, degenerate F0, non-symplectic field) or a
verification fails, 1 on usage, I/O or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from .averaging import (VectorFieldSample, differential, flat, hamiltonian_vector_field,
                        is_periodic_torus, orbit_average, vertical_average)
from .config import load_config, trig_field
from .errors import (CertificationError, ConfigError, MathematicalRejection, NFTKError,
                     ResonanceError)
from .geometry_decomp import (closedness_check, cycle_integrals, decompose_flow_family,
                              decompose_symplectic_field, exterior_derivative)
from .homological import nonresonance_test, orbit_average_criterion, solve_first_order
from .integrable_core import nondegeneracy_report, small_divisor_constants
from .torus_fourier import SpectralField, evaluate_field, grid_max
from .verify import halton_points, scaling_test

log = logging.getLogger("nftk")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTED = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _clean(obj):
    """Make a report JSON-safe: numpy scalars to Python, non-finite to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_report(path, report):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _threads(arg):
    if arg is None:
        env = os.environ.get("NFTK_THREADS")
        if env is None or env.strip() == "":
            return 1
        try:
            arg = int(env)
        except ValueError as exc:
            raise ConfigError(f"not an integer: {env!r}", "NFTK_THREADS") from exc
    if arg < 0:
        raise ConfigError("must be non-negative", "--threads")
    if arg == 0:
        return os.cpu_count() or 1
    return arg


def _header(cfg, command):
    return {"schema": "nftk-report v1", "command": command, "dimension": cfg.dimension,
            "box": {"lo": list(cfg.box.lo), "hi": list(cfg.box.hi),
                    "grid_points": list(cfg.box.grid_points)},
            "fourier_cutoff": cfg.fourier_cutoff, "k_max": cfg.k_max}


def _resonance_csv(report):
    d = len(report.modes[0].k) if report.modes else 1
    cols = [f"k{j + 1}" for j in range(d)] + [f"xi{j + 1}" for j in range(d)]
    lines = [",".join(cols + ["omega_k", "grad_norm", "tangential"])]
    for m in report.modes:
        for s in m.samples:
            row = [str(v) for v in m.k] + [f"{v:.17g}" for v in s.xi]
            row += [f"{s.omega_abs:.17g}", f"{s.grad_norm:.17g}", str(int(s.tangential))]
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# subcommands


def cmd_analyze(cfg, out, threads):
    F0 = cfg.build_F0()
    rep = nondegeneracy_report(F0, cfg.k_max, cfg.tol_res)
    report = _header(cfg, "analyze")
    report["nondegeneracy"] = rep.to_dict()
    status = "pass"
    if rep.weak_nondegenerate:
        try:
            cert = small_divisor_constants(F0, k_max=cfg.k_max, tol_res=cfg.tol_res, report=rep)
            report["small_divisor_certificate"] = cert.to_dict()
        except CertificationError as exc:
            report["small_divisor_certificate"] = {"error": str(exc)}
            status = "rejected"
    else:
        status = "rejected"
    if cfg.has_H1:
        H1 = cfg.build_H1()
        verdict = nonresonance_test(H1, F0, cfg.k_max, cfg.tol_res, cfg.delta_res, report=rep)
        report["nonresonance"] = verdict.to_dict()
        if not verdict.passed:
            status = "rejected"
    report["status"] = status
    write_report(os.path.join(out, cfg.report_name), report)
    _write_text(os.path.join(out, cfg.csv_name), _resonance_csv(rep))
    return EXIT_OK if status == "pass" else EXIT_REJECTED


def cmd_average(cfg, out, threads):
    F0 = cfg.build_F0()
    H1 = cfg.build_H1()
    I1 = vertical_average(H1)
    I1.save(os.path.join(out, "I1.field"))
    report = _header(cfg, "average")
    center = 0.5 * (np.asarray(cfg.box.lo) + np.asarray(cfg.box.hi))
    report["vertical_average"] = {"max_abs": I1.max_abs(),
                                  "oscillating_part_max": grid_max(H1 - I1),
                                  "at_center": evaluate_field(I1, center, np.zeros(cfg.dimension))}
    tori, entries = [], []
    for xi_b in cfg.tori:
        t = is_periodic_torus(F0, xi_b, cfg.q_max)
        if t is None:
            entries.append({"xi_b": xi_b, "periodic": False})
            continue
        avg = orbit_average(H1, F0, t, cfg.x_samples)
        tori.append(t)
        entries.append({"xi_b": xi_b, "periodic": True, "period": t.period, "m": list(t.m),
                        "orbit_average_constant": avg.constant,
                        "orbit_average_max": float(np.max(np.abs(avg.values)))})
    report["tori"] = entries
    if tori:
        crit = orbit_average_criterion(H1, F0, tori, cfg.x_samples)
        report["orbit_average_criterion"] = {"passed": crit.passed, "constant": crit.constant}
    report["status"] = "pass"
    write_report(os.path.join(out, cfg.report_name), report)
    return EXIT_OK


def _solve(cfg, threads):
    F0 = cfg.build_F0()
    H1 = cfg.build_H1()
    sol = solve_first_order(H1, F0, cfg.k_max, cfg.tol_res, cfg.delta_res, cfg.tol_div,
                            workers=threads)
    return F0, H1, sol


def _rejection_report(cfg, command, exc):
    report = _header(cfg, command)
    report["status"] = "rejected"
    report["error"] = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ResonanceError):
        report["nonresonance"] = exc.verdict.to_dict()
    return report


def cmd_solve(cfg, out, threads):
    try:
        F0, H1, sol = _solve(cfg, threads)
    except MathematicalRejection as exc:
        write_report(os.path.join(out, cfg.report_name), _rejection_report(cfg, "solve", exc))
        return EXIT_REJECTED
    sol.save(os.path.join(out, "solution"))
    report = _header(cfg, "solve")
    report["diagnostics"] = sol.diagnostics.to_dict()
    scale = max(1.0, H1.max_abs())
    report["relative_residual"] = sol.diagnostics.residual / scale
    report["status"] = "pass"
    write_report(os.path.join(out, cfg.report_name), report)
    return EXIT_OK


def cmd_verify(cfg, out, threads):
    if len(cfg.epsilon_list) < 2:
        raise ConfigError("verify needs at least two values", "epsilon_list")
    try:
        F0, H1, sol = _solve(cfg, threads)
    except MathematicalRejection as exc:
        write_report(os.path.join(out, cfg.report_name), _rejection_report(cfg, "verify", exc))
        return EXIT_REJECTED
    if cfg.generator_scale != 1.0:
        sol = sol.scaled(cfg.generator_scale)
    pts = halton_points(sol.G0.box, cfg.test_points)
    rep = scaling_test(F0, H1, sol, cfg.epsilon_list, pts, workers=threads)
    report = _header(cfg, "verify")
    report["generator_scale"] = cfg.generator_scale
    report["solve_residual"] = sol.diagnostics.residual
    report["scaling"] = rep.to_dict()
    report["status"] = "pass" if rep.passed else "fail"
    write_report(os.path.join(out, cfg.report_name), report)
    _write_text(os.path.join(out, cfg.csv_name), rep.csv())
    return EXIT_OK if rep.passed else EXIT_REJECTED


def _poly_field(box, table):
    def func(xi, x):
        total = 0.0 * xi[0] + 0.0 * x[0]
        for p, c in table.items():
            term = c
            for a, e in zip(xi, p):
                term = term * a ** e
            total = total + term
        return total
    return SpectralField.from_function(box, 0, func)


def build_decompose_field(cfg):
    """Symplectic field X = X_A + (u, grad phi) from the [decompose] section."""
    d, box, n = cfg.dimension, cfg.box, cfg.fourier_cutoff
    if cfg.decompose_field_dir is not None:
        try:
            u = tuple(SpectralField.load(os.path.join(cfg.decompose_field_dir, f"u{j + 1}.field"))
                      for j in range(d))
            v = tuple(SpectralField.load(os.path.join(cfg.decompose_field_dir, f"v{j + 1}.field"))
                      for j in range(d))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load field components: {exc}", "decompose.field_dir") from exc
        return VectorFieldSample(u, v)
    X = VectorFieldSample.zeros(box, n)
    if cfg.decompose_hamiltonian:
        X = X + hamiltonian_vector_field(trig_field(cfg.decompose_hamiltonian, box, n))
    one = _poly_field(box, {(0,) * d: 1.0})
    u = [one * c for c in (cfg.decompose_lift_u or [0.0] * d)]
    phi = _poly_field(box, cfg.decompose_lift_potential)
    v = [phi.dxi(j) for j in range(d)]
    return X + VectorFieldSample(tuple(u), tuple(v))


def cmd_decompose(cfg, out, threads):
    X = build_decompose_field(cfg)
    report = _header(cfg, "decompose")
    alpha = flat(X)
    report["closedness"] = closedness_check(alpha)
    try:
        res = decompose_symplectic_field(X)
    except MathematicalRejection as exc:
        report["status"] = "rejected"
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        write_report(os.path.join(out, cfg.report_name), report)
        return EXIT_REJECTED
    res.save(os.path.join(out, "decomposition"))
    center = 0.5 * (np.asarray(cfg.box.lo) + np.asarray(cfg.box.hi))
    alpha1 = alpha - flat(res.lift_part)
    dA = differential(res.primitive)
    report["decomposition"] = {
        "primitive_max": res.primitive.max_abs(),
        "lift_max": res.lift_part.max_abs(),
        "lift_x_independent": res.lift_part.is_x_independent(1e-14),
        "reconstruction_error": (res.hamiltonian_part + res.lift_part - X).max_abs(),
        "primitive_differential_error": max(grid_max(p - q) for p, q in
                                            zip(dA.components(), alpha1.components())),
        "cycle_integrals_lift": cycle_integrals(flat(res.lift_part), center).tolist(),
        "cycle_integrals_hamiltonian": cycle_integrals(alpha1, center).tolist(),
        "hamiltonian_part_closedness": max(
            (grid_max(c) for c in exterior_derivative(alpha1).values()), default=0.0),
    }
    if cfg.decompose_family:
        if not cfg.epsilon_list:
            raise ConfigError("family decomposition needs epsilon_list", "epsilon_list")
        fam = decompose_flow_family([(e, X * e) for e in cfg.epsilon_list])
        report["family"] = [{"epsilon": e, "base_generator_max": y.max_abs(),
                             "hamiltonian_generator_max": g.max_abs()}
                            for e, y, g in zip(fam.epsilons, fam.base_generators,
                                               fam.hamiltonian_generators)]
    report["status"] = "pass"
    write_report(os.path.join(out, cfg.report_name), report)
    return EXIT_OK


COMMANDS = {
    "analyze": (cmd_analyze, "nondegeneracy and resonance report for F0 (and H1)"),
    "average": (cmd_average, "vertical and orbit averages of H1"),
    "solve": (cmd_solve, "solve the first-order homological equation"),
    "verify": (cmd_verify, "eps^2 scaling check of the first-order normal form"),
    "decompose": (cmd_decompose, "split a symplectic field into Hamiltonian part and average"),
}


def build_parser():
    parser = _Parser(prog="nftk", description="First-order normal forms on T^d x box.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, metavar="PATH", help="TOML configuration file")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides [output].dir)")
        p.add_argument("--threads", type=int, metavar="N",
                       help="worker threads, 0 = auto (default: $NFTK_THREADS or 1)")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"nftk: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="nftk: %(message)s")
    fn = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config)
        threads = _threads(args.threads)
        out = args.out if args.out is not None else cfg.output_dir
        os.makedirs(out, exist_ok=True)
        log.info("running %s with %d thread(s)", args.command, threads)
        code = fn(cfg, out, threads)
    except ConfigError as exc:
        print(f"nftk: config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except MathematicalRejection as exc:
        print(f"nftk: rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    except (NFTKError, OSError, ValueError) as exc:
        print(f"nftk: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    status = {EXIT_OK: "pass", EXIT_REJECTED: "rejected or failed"}[code]
    print(f"nftk {args.command}: {status}")
    return code


if __name__ == "__main__":
    sys.exit(main())
