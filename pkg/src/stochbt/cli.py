"""Command-line front end.

Subcommands: ``stability``, ``gramians``, ``reduce``, ``hinf``,
``simulate``, ``bench``.  Systems come either from a file (see
:mod:`stochbt.system`) or from a builtin benchmark id: ``example1(a)``,
``example2(p)``, ``sec4a``, ``ladder(n)``, ``heat(grid)``.

Every command writes a ``manifest.txt`` with the fully resolved
configuration, reports as CSV (header row, '.' decimals, 17 significant
digits) and renders companion PNG figures next to the delimited output.

Exit codes: 0 success, 1 usage or parse failure, 2 mathematical
precondition failure, 3 numerical failure.
"""

import argparse
import os
import sys

import numpy as np

from . import __version__, balancing, gramians, hinf, lyapunov, report, simulate
from . import system as sysmod
from .errors import (
    BracketFailureError,
    DecompositionError,
    DimensionMismatchError,
    DomainError,
    InfeasibleStartError,
    LineSearchStallError,
    MaxIterationsError,
    NearZeroSigmaError,
    NotPositiveDefiniteError,
    NotStableError,
    NumericalError,
    SingularGramianError,
    SingularOperatorError,
    StabilityLostError,
    StepInstabilityError,
    SystemFormatError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PRECONDITION = 2
EXIT_NUMERICAL = 3

_USAGE_ERRORS = (SystemFormatError, DomainError, DimensionMismatchError, OSError)
_PRECONDITION_ERRORS = (
    NotStableError,
    SingularGramianError,
    NotPositiveDefiniteError,
    StabilityLostError,
)
_NUMERICAL_ERRORS = (
    SingularOperatorError,
    NumericalError,
    BracketFailureError,
    InfeasibleStartError,
    LineSearchStallError,
    MaxIterationsError,
    NearZeroSigmaError,
    DecompositionError,
    StepInstabilityError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _add_common(parser):
    parser.add_argument("--out", default=".", help="output directory (default: .)")
    parser.add_argument("--seed", type=int, default=0, help="RNG seed (u64)")
    parser.add_argument("--tol", type=float, default=None, help="override the main tolerance")


def _add_source(parser, nfiles=1):
    parser.add_argument(
        "files", nargs="*", metavar="FILE", help=f"system file(s), up to {nfiles}"
    )
    parser.add_argument(
        "--builtin", choices=sysmod.BUILTIN_IDS, help="builtin benchmark id"
    )
    parser.add_argument("--a", type=float, default=2.0, help="example1/example2 parameter a")
    parser.add_argument("--p", type=float, default=0.5, help="example2 parameter p")
    parser.add_argument("--n", type=int, default=20, help="ladder order n")
    parser.add_argument("--grid", type=int, default=10, help="heat grid size g")


def _load_single(args, parser):
    if args.builtin and args.files:
        parser.error("give either --builtin or a system file, not both")
    if args.builtin:
        return sysmod.builtin(
            args.builtin, a=args.a, p=args.p, n=args.n, grid=args.grid
        )
    if len(args.files) != 1:
        parser.error("exactly one system file (or --builtin) is required")
    return sysmod.load_system(args.files[0])


def _manifest(args, outdir, extra=None):
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    lines = [f"stochbt version = {__version__}"]
    lines += [f"{key} = {val}" for key, val in resolved.items()]
    for key, val in (extra or {}).items():
        lines.append(f"{key} = {val}")
    report.write_text(os.path.join(outdir, "manifest.txt"), "\n".join(lines) + "\n")


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _matrix_csv(path, M):
    M = np.atleast_2d(M)
    header = [f"col_{j}" for j in range(M.shape[1])]
    report.write_csv(path, header, M.tolist())


def _add_ip_params(parser):
    parser.add_argument("--ip-t0", type=float, default=1.0, help="initial barrier parameter")
    parser.add_argument("--ip-mu", type=float, default=10.0, help="barrier update factor")
    parser.add_argument("--ip-tol", type=float, default=1e-7, help="barrier gap tolerance")
    parser.add_argument("--ip-max-newton", type=int, default=50, help="Newton steps per stage")
    parser.add_argument("--ip-max-stages", type=int, default=60, help="barrier stages")


def _ip_params(args):
    return gramians.IpParams(
        t0=args.ip_t0,
        mu=args.ip_mu,
        ip_tol=args.ip_tol,
        max_newton=args.ip_max_newton,
        max_stages=args.ip_max_stages,
    )


def _type2_method(args, sys_obj):
    """Resolve the type II P strategy; 'auto' prefers a documented
    reference pair for the builtins that have one."""
    method = args.method
    if method == "auto":
        if args.builtin == "sec4a":
            return "given", sysmod.sec4a_type2_reference()[0]
        if args.builtin == "example2":
            return "given", sysmod.example2_gramian(args.p, a=args.a)
        return "optimize", None
    if method == "reference":
        if args.builtin == "sec4a":
            return "given", sysmod.sec4a_type2_reference()[0]
        if args.builtin == "example2":
            return "given", sysmod.example2_gramian(args.p, a=args.a)
        raise DomainError(f"builtin {args.builtin!r} has no reference type II pair")
    return method, None


def _compute_pair(args, sys_obj, kind):
    if kind == gramians.TYPE_I:
        return gramians.type1_gramians(sys_obj)
    method, P = _type2_method(args, sys_obj)
    return gramians.type2_pair(
        sys_obj,
        method=method,
        objective=args.objective,
        ip_params=_ip_params(args),
        P=P,
    )


# ---------------------------------------------------------------------------
# commands


def cmd_stability(args, parser):
    outdir = _outdir(args)
    sys_obj = _load_single(args, parser)
    rep = sysmod.validate(sys_obj)
    if not rep.ok:
        raise SystemFormatError("invalid system: " + "; ".join(rep.errors))
    cert = lyapunov.ms_stability_certificate(sys_obj.A, sys_obj.N_list)
    stable = cert is not None
    alpha = lyapunov.spectral_abscissa(
        sys_obj.A, sys_obj.N_list, tol=args.tol or 1e-8
    )
    lines = [
        f"system: {sys_obj.name or '(unnamed)'} "
        f"(n={sys_obj.n}, k={sys_obj.k}, m={sys_obj.m}, p={sys_obj.p})",
        f"verdict: {'mean-square stable' if stable else 'NOT mean-square stable'}",
        f"spectral abscissa: {alpha:.10g}",
    ]
    if stable:
        lines.append(f"certificate norm: {np.linalg.norm(cert):.10g}")
    text = "\n".join(lines)
    print(text)
    report.write_text(os.path.join(outdir, "stability.txt"), text + "\n")
    _manifest(args, outdir, {"stable": stable, "spectral_abscissa": alpha})
    return EXIT_OK if stable else EXIT_PRECONDITION


def cmd_gramians(args, parser):
    outdir = _outdir(args)
    sys_obj = _load_single(args, parser)
    pair = _compute_pair(args, sys_obj, args.kind)
    check = gramians.check_pair(sys_obj, pair)
    _matrix_csv(os.path.join(outdir, "P.csv"), pair.P)
    _matrix_csv(os.path.join(outdir, "Q.csv"), pair.Q)
    lines = [
        f"kind: {pair.kind}",
        f"P positive definite: {check.p_pd}",
        f"Q positive definite: {check.q_pd}",
        f"observability slack: {check.slack_q_class} (min eig {check.q_margin:.6g})",
        f"reachability slack: {check.slack_p_class} (min eig {check.p_margin:.6g})",
        f"check passed: {check.passed}",
    ]
    for msg in check.messages:
        lines.append(f"note: {msg}")
    text = "\n".join(lines)
    print(text)
    report.write_text(os.path.join(outdir, "check.txt"), text + "\n")
    _manifest(args, outdir, {"check_passed": check.passed})
    return EXIT_OK if check.passed else EXIT_PRECONDITION


def _sweep_rows(args, sys_obj, pair, r_values, tol_rel):
    rows = []
    for r_state in r_values:
        red = balancing.reduce_from_pair(sys_obj, pair, r_state=r_state)
        err = hinf.truncation_error_norm(sys_obj, red, tol_rel=tol_rel)
        tail = float(red.truncated_sigma.sum())
        two_tail = 2.0 * tail
        rows.append(
            (
                pair.kind,
                red.r_state,
                red.r_groups,
                tail,
                two_tail,
                err.hinf.gamma_lo,
                err.hinf.gamma_hi,
                "" if err.bound_satisfied is None else err.bound_satisfied,
                red.reduced_stable,
            )
        )
    return rows


def cmd_reduce(args, parser):
    outdir = _outdir(args)
    sys_obj = _load_single(args, parser)
    if args.r is None and not args.sweep:
        parser.error("--r (or --sweep) is required")
    pair = _compute_pair(args, sys_obj, args.kind)
    tol_rel = args.tol or 1e-4

    if args.sweep:
        try:
            r_values = [int(tok) for tok in args.sweep.split(",") if tok.strip()]
        except ValueError:
            parser.error("--sweep expects a comma-separated list of integers")
        if not r_values:
            parser.error("--sweep list is empty")
        rows = _sweep_rows(args, sys_obj, pair, r_values, tol_rel)
        header = [
            "kind",
            "r_state",
            "r_groups",
            "sigma_tail",
            "two_sigma_tail",
            "error_lo",
            "error_hi",
            "bound_holds",
            "stable",
        ]
        report.write_csv(os.path.join(outdir, "bounds_vs_error.csv"), header, rows)
        report.plot_sweep(
            [
                (row[0], row[1], row[4] if row[0] == gramians.TYPE_II else None, row[5], row[6])
                for row in rows
            ],
            os.path.join(outdir, "bounds_vs_error.png"),
            title=f"{sys_obj.name or 'system'}: type {pair.kind}",
        )
        form = balancing.balance(pair.P, pair.Q)
        report.write_csv(
            os.path.join(outdir, "sigma.csv"),
            ["index", "sigma"],
            [(i + 1, s) for i, s in enumerate(form.sigma)],
        )
        report.plot_sigma(form.sigma, os.path.join(outdir, "sigma.png"))
        _manifest(args, outdir, {"sweep_r": r_values})
        print(f"sweep complete: {len(rows)} reductions, results in {outdir}")
        return EXIT_OK

    if args.r < 1:
        raise DomainError(f"reduced order must be >= 1, got {args.r}")
    red = balancing.reduce_from_pair(sys_obj, pair, r_state=args.r)
    sysmod.save_system(red.reduced, os.path.join(outdir, "reduced.json"))
    report.write_csv(
        os.path.join(outdir, "sigma.csv"),
        ["index", "sigma"],
        [(i + 1, s) for i, s in enumerate(red.sigma)],
    )
    report.plot_sigma(red.sigma, os.path.join(outdir, "sigma.png"))
    lines = [
        f"system: {sys_obj.name or '(unnamed)'} (n={sys_obj.n})",
        f"kind: {pair.kind}",
        f"reduced order: {red.r_state} ({red.r_groups} sigma groups kept)",
        f"truncated sigma sum: {red.truncated_sigma.sum():.10g}",
    ]
    if red.bound is not None:
        lines.append(f"error bound (2 x truncated tail): {red.bound:.10g}")
    lines.append(f"reduced system mean-square stable: {red.reduced_stable}")
    text = "\n".join(lines)
    print(text)
    report.write_text(os.path.join(outdir, "summary.txt"), text + "\n")
    _manifest(args, outdir, {"r_state": red.r_state, "bound": red.bound})
    return EXIT_OK


def cmd_hinf(args, parser):
    outdir = _outdir(args)
    if args.builtin and args.files:
        parser.error("give either --builtin or system files, not both")
    tol_rel = args.tol or 1e-4
    if args.builtin:
        target = sysmod.builtin(
            args.builtin, a=args.a, p=args.p, n=args.n, grid=args.grid
        )
        label = f"norm of {target.name}"
    elif len(args.files) == 1:
        target = sysmod.load_system(args.files[0])
        label = f"norm of {target.name or args.files[0]}"
    elif len(args.files) == 2:
        full = sysmod.load_system(args.files[0])
        reduced = sysmod.load_system(args.files[1])
        target = hinf.build_error_system(full, reduced)
        label = "error-system norm"
    else:
        parser.error("hinf takes one system (or --builtin) or two system files")
    res = hinf.hinf_norm(target, tol_rel=tol_rel)
    lines = [
        label,
        f"gamma bracket: [{res.gamma_lo:.10g}, {res.gamma_hi:.10g}]",
        f"status: {res.status} ({res.iterations} Riccati probes)",
    ]
    text = "\n".join(lines)
    print(text)
    report.write_text(os.path.join(outdir, "hinf.txt"), text + "\n")
    _manifest(
        args, outdir, {"gamma_lo": res.gamma_lo, "gamma_hi": res.gamma_hi, "status": res.status}
    )
    return EXIT_OK


def _parse_input_spec(text, m):
    if text in (None, "ones"):
        return np.ones(m)
    if text == "zero":
        return "zero"
    try:
        vec = np.array([float(tok) for tok in text.split(",")], dtype=float)
    except ValueError:
        raise DomainError(f"cannot parse input spec {text!r}")
    return vec


def cmd_simulate(args, parser):
    outdir = _outdir(args)
    if args.builtin and args.files:
        parser.error("give either --builtin or system files, not both")
    if args.builtin:
        if args.r is None:
            parser.error("--r is required with --builtin (order of the reduced model)")
        full = sysmod.builtin(
            args.builtin, a=args.a, p=args.p, n=args.n, grid=args.grid
        )
        pair = _compute_pair(args, full, args.kind)
        red = balancing.reduce_from_pair(full, pair, r_state=args.r)
        reduced = red.reduced
        bound = red.bound
    elif len(args.files) == 2:
        full = sysmod.load_system(args.files[0])
        reduced = sysmod.load_system(args.files[1])
        bound = None
    else:
        parser.error("simulate takes --builtin with --kind/--r, or two system files")
    cfg = simulate.SimConfig(
        t_final=args.t_final,
        dt=args.dt,
        n_paths=args.paths,
        seed=args.seed,
        u=_parse_input_spec(args.input, full.m),
    )
    result = simulate.simulate_pair(full, reduced, cfg)
    report.write_csv(
        os.path.join(outdir, "trajectory.csv"),
        ["t", "mean_err", "q05", "q50", "q95"],
        list(zip(result.t, result.mean_err, result.q05, result.q50, result.q95)),
    )
    report.plot_trajectory(
        result.t,
        result.mean_err,
        result.q05,
        result.q95,
        os.path.join(outdir, "trajectory.png"),
        title=f"{full.name or 'system'} vs order {reduced.n}",
    )
    lines = [
        f"paths: {result.n_paths}, diverged: {result.n_diverged}",
        f"||u||_L2w = {result.u_l2:.10g}",
        f"||y - y_r||_L2w = {result.err_l2:.10g} (half-width {result.err_l2_halfwidth:.3g})",
    ]
    if bound is not None:
        lines.append(f"type II bound x ||u|| = {bound * result.u_l2:.10g}")
    text = "\n".join(lines)
    print(text)
    report.write_text(os.path.join(outdir, "norms.txt"), text + "\n")
    _manifest(args, outdir, {"err_l2": result.err_l2, "u_l2": result.u_l2})
    return EXIT_OK


def cmd_bench(args, parser):
    outdir = _outdir(args)
    if not args.builtin:
        parser.error("bench requires --builtin")
    tol_rel = args.tol or 1e-3
    rows = []
    if args.builtin == "sec4a":
        sys_obj = sysmod.sec4a_system()
        for kind in (gramians.TYPE_I, gramians.TYPE_II):
            pair = _compute_pair(args, sys_obj, kind)
            rows += _sweep_rows(args, sys_obj, pair, [1], tol_rel)
    elif args.builtin == "ladder":
        sys_obj = sysmod.ladder_system(args.n)
        r_values = list(range(1, args.n, 2))
        for kind in (gramians.TYPE_I, gramians.TYPE_II):
            pair = _compute_pair(args, sys_obj, kind)
            rows += _sweep_rows(args, sys_obj, pair, r_values, tol_rel)
    elif args.builtin == "heat":
        sys_obj = sysmod.heat_system(args.grid)
        pair = gramians.type1_gramians(sys_obj)
        form = balancing.balance(pair.P, pair.Q)
        for r_state in (10, 20):
            if r_state >= sys_obj.n:
                continue
            red = balancing.reduce_from_pair(sys_obj, pair, r_state=r_state)
            rows.append(
                (
                    gramians.TYPE_I,
                    red.r_state,
                    red.r_groups,
                    float(red.truncated_sigma.sum()),
                    2.0 * float(red.truncated_sigma.sum()),
                    "",
                    "",
                    "",
                    red.reduced_stable,
                )
            )
        report.plot_sigma(form.sigma, os.path.join(outdir, "sigma.png"))
        if sys_obj.n <= 50:
            pair2 = gramians.type2_pair(
                sys_obj,
                method="optimize",
                objective=args.objective,
                ip_params=_ip_params(args),
            )
            for r_state in (10, 20):
                if r_state >= sys_obj.n:
                    continue
                red = balancing.reduce_from_pair(sys_obj, pair2, r_state=r_state)
                rows.append(
                    (
                        gramians.TYPE_II,
                        red.r_state,
                        red.r_groups,
                        float(red.truncated_sigma.sum()),
                        red.bound,
                        "",
                        "",
                        "",
                        red.reduced_stable,
                    )
                )
        else:
            print(
                f"note: type II LMI solve skipped at n={sys_obj.n} "
                "(use --grid <= 7 to include it)"
            )
    else:
        parser.error(f"no benchmark scenario for builtin {args.builtin!r}")
    header = [
        "kind",
        "r_state",
        "r_groups",
        "sigma_tail",
        "two_sigma_tail",
        "error_lo",
        "error_hi",
        "bound_holds",
        "stable",
    ]
    report.write_csv(os.path.join(outdir, "bench_table.csv"), header, rows)
    if args.builtin in ("sec4a", "ladder"):
        report.plot_sweep(
            [
                (row[0], row[1], row[4] if row[0] == gramians.TYPE_II else None, row[5], row[6])
                for row in rows
            ],
            os.path.join(outdir, "bench_table.png"),
            title=f"benchmark {args.builtin}",
        )
    for row in rows:
        print(",".join(report.fmt(v) for v in row))
    _manifest(args, outdir, {"rows": len(rows)})
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="stochbt", description=__doc__)
    parser.add_argument("--version", action="version", version=f"stochbt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("stability", help="mean-square stability test")
    _add_common(sp)
    _add_source(sp)
    sp.set_defaults(func=cmd_stability)

    sp = sub.add_parser("gramians", help="compute and check a Gramian pair")
    _add_common(sp)
    _add_source(sp)
    sp.add_argument("--kind", choices=("I", "II"), default="I")
    sp.add_argument(
        "--method",
        choices=("auto", "optimize", "baseline", "reference"),
        default="auto",
        help="type II P strategy",
    )
    sp.add_argument(
        "--objective", choices=(gramians.TRACE_P, gramians.TRACE_PQ), default=gramians.TRACE_PQ
    )
    _add_ip_params(sp)
    sp.set_defaults(func=cmd_gramians)

    sp = sub.add_parser("reduce", help="balanced truncation to a reduced order")
    _add_common(sp)
    _add_source(sp)
    sp.add_argument("--kind", choices=("I", "II"), default="I")
    sp.add_argument("--r", type=int, default=None, help="reduced state dimension")
    sp.add_argument("--sweep", default=None, help="comma-separated list of reduced orders")
    sp.add_argument(
        "--method",
        choices=("auto", "optimize", "baseline", "reference"),
        default="auto",
    )
    sp.add_argument(
        "--objective", choices=(gramians.TRACE_P, gramians.TRACE_PQ), default=gramians.TRACE_PQ
    )
    _add_ip_params(sp)
    sp.set_defaults(func=cmd_reduce)

    sp = sub.add_parser("hinf", help="stochastic H-infinity norm (one or two systems)")
    _add_common(sp)
    _add_source(sp, nfiles=2)
    sp.set_defaults(func=cmd_hinf)

    sp = sub.add_parser("simulate", help="Monte-Carlo simulation of full vs reduced")
    _add_common(sp)
    _add_source(sp, nfiles=2)
    sp.add_argument("--kind", choices=("I", "II"), default="I")
    sp.add_argument("--r", type=int, default=None, help="reduced order (with --builtin)")
    sp.add_argument(
        "--method",
        choices=("auto", "optimize", "baseline", "reference"),
        default="auto",
    )
    sp.add_argument(
        "--objective", choices=(gramians.TRACE_P, gramians.TRACE_PQ), default=gramians.TRACE_PQ
    )
    sp.add_argument("--t-final", type=float, default=20.0)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--paths", type=int, default=10_000)
    sp.add_argument(
        "--input", default=None, help="'zero', 'ones', or comma-separated constants"
    )
    _add_ip_params(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("bench", help="run a builtin benchmark scenario")
    _add_common(sp)
    _add_source(sp)
    sp.add_argument(
        "--objective", choices=(gramians.TRACE_P, gramians.TRACE_PQ), default=gramians.TRACE_PQ
    )
    sp.add_argument("--kind", choices=("I", "II"), default="I")
    sp.add_argument(
        "--method",
        choices=("auto", "optimize", "baseline", "reference"),
        default="auto",
    )
    _add_ip_params(sp)
    sp.set_defaults(func=cmd_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args, parser)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _PRECONDITION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
