"""Command-line interface.

Subcommands: generate, solve, prox-table, certify, rate, certify-point,
enumerate, repro.  Every run writes a manifest (command line, configuration
echo, input hashes, outputs, timing) next to its outputs; rerunning a
command with the same flags reproduces the data files byte-for-byte.

Exit codes: 0 success, 1 usage or validation error, 2 solver hit max_iters,
3 certification or reproduction check failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analysis, experiments, optimality, problem, prox, solvers
from .errors import LpregError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_CHECK_FAILED = 3


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config: dict
    seed: int | None
    versions: dict = field(default_factory=dict)
    input_hashes: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    wall_clock_s: float = 0.0

    def write(self, out_dir: Path) -> Path:
        self.versions = {
            "lpreg": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        }
        path = out_dir / f"{self.command}-manifest.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _hash_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _say(args, message):
    if not args.quiet:
        print(message)


def _load_problem_with_overrides(args) -> problem.Problem:
    prob = problem.load_problem(args.problem)
    if getattr(args, "p", None) is not None or getattr(args, "lam", None) is not None:
        prob = problem.Problem(
            A=prob.A,
            b=prob.b,
            lam=prob.lam if args.lam is None else args.lam,
            p=prob.p if args.p is None else args.p,
            weights=prob.weights,
        )
    return prob


def _json_dump(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_generate(args) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prob, planted = problem.generate_instance(
        seed=args.seed, m=args.m, n=args.n, s=args.s,
        noise=args.noise, lam=args.lam, p=args.p,
    )
    out = out_dir / args.out
    problem.save_problem(out, prob)
    planted_path = out_dir / (out.stem + "-planted.json")
    _json_dump(planted_path, {"x": [float(f"{v:.17g}") for v in planted]})
    manifest = RunManifest(
        command="generate", argv=sys.argv[1:],
        config={k: getattr(args, k) for k in ("seed", "m", "n", "s", "noise", "lam", "p")},
        seed=args.seed,
        outputs=[str(out), str(planted_path)],
        wall_clock_s=time.perf_counter() - t0,
    )
    manifest.write(out_dir)
    _say(args, f"generate: wrote {out} (m={args.m} n={args.n} s={args.s})")
    return EXIT_OK


def _solver_config(args, prob) -> solvers.SolverConfig:
    if args.auto_v:
        v = solvers.default_stepsize(prob)
    elif args.v is not None:
        v = args.v
    else:
        v = solvers.default_stepsize(prob)
    inexact = solvers.Schedule.zero()
    if args.algo == "ipga1p" and args.tau_c is not None:
        inexact = solvers.Schedule.geometric(args.tau_c, args.tau_rho)
    if args.algo == "ipga2p" and args.t_c is not None:
        inexact = solvers.Schedule.geometric(args.t_c, args.t_rho)
    return solvers.SolverConfig(
        v=v, max_iters=args.max_iters, stop_tol=args.tol,
        inexact=inexact, knob=args.knob, seed=args.seed,
    )


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prob = _load_problem_with_overrides(args)
    config = _solver_config(args, prob)
    run = {
        "pga": solvers.run_pga,
        "ipga1p": solvers.run_ipga_1p,
        "ipga2p": solvers.run_ipga_2p,
    }[args.algo]
    trace = run(prob, config)
    trace_path = out_dir / args.trace_out
    problem.save_trace(trace_path, trace)
    manifest = RunManifest(
        command="solve", argv=sys.argv[1:],
        config={
            "algo": args.algo, "v": list(config.v),
            "max_iters": config.max_iters, "stop_tol": config.stop_tol,
            "knob": config.knob,
            "tau": [args.tau_c, args.tau_rho],
            "t": [args.t_c, args.t_rho],
        },
        seed=args.seed,
        input_hashes={args.problem: _hash_file(args.problem)},
        outputs=[str(trace_path)],
        wall_clock_s=time.perf_counter() - t0,
    )
    manifest.write(out_dir)
    status = "converged" if trace.converged else "max-iters"
    _say(args, f"solve[{args.algo}]: {status} after {len(trace) - 1} steps, "
               f"F={trace.f_values[-1]:.12g}, trace -> {trace_path}")
    return EXIT_OK if trace.converged else EXIT_NO_CONVERGENCE


def cmd_prox_table(args) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    zs = np.linspace(args.z_min, args.z_max, args.z_count)
    lines = ["z,v,lambda,p,argmin,value,tie"]
    for z in zs:
        res = prox.prox_scalar(prox.ProxQuery(z=float(z), v=args.v, lam=args.lam, p=args.p))
        lines.append(
            f"{z:.17g},{args.v:.17g},{args.lam:.17g},{args.p:.17g},"
            f"{res.selection:.17g},{res.value:.17g},{int(res.tie)}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        out = out_dir / args.out
        out.write_text(text, encoding="utf-8")
        outputs = [str(out)]
        _say(args, f"prox-table: wrote {out} ({args.z_count} rows)")
    else:
        sys.stdout.write(text)
        outputs = []
    RunManifest(
        command="prox-table", argv=sys.argv[1:],
        config={k: getattr(args, k) for k in ("z_min", "z_max", "z_count", "v", "lam", "p")},
        seed=None, outputs=outputs,
        wall_clock_s=time.perf_counter() - t0,
    ).write(out_dir)
    return EXIT_OK


def cmd_certify(args) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prob = problem.load_problem(args.problem)
    trace = problem.load_trace(args.trace)
    v_lo = args.v if args.v is not None else solvers.default_stepsize(prob)
    a_sq = problem.spectral_norm_sq(prob) + problem.SPECTRAL_TOL
    if args.alpha == "auto":
        alpha = 1.0 / (2.0 * v_lo) - a_sq
    else:
        alpha = float(args.alpha)
    if not math.isfinite(alpha) or alpha <= 0:
        print(f"error: nonpositive alpha {alpha}; stepsize too large?",
              file=sys.stderr)
        return EXIT_USAGE
    # CSV traces do not record which inexactness type produced eps_k, so by
    # default the checks run with eps = 0 (strictly conservative); the flag
    # feeds the stored column through as the eps_k^2 sequence instead.
    eps_sq = trace.eps_values if args.eps_from_trace else None
    h1 = analysis.certify_h1(trace, alpha, eps_sq=eps_sq)
    if args.beta == "auto":
        h2 = analysis.certify_h2(prob, trace, beta="auto", v_lo=v_lo)
    else:
        h2 = analysis.certify_h2(prob, trace, beta=float(args.beta), v_lo=v_lo)
    report = {"h1": h1.as_dict(), "h2": h2.as_dict(), "ok": h1.ok and h2.ok}
    out = out_dir / args.report_out
    _json_dump(out, report)
    RunManifest(
        command="certify", argv=sys.argv[1:],
        config={"alpha": args.alpha, "beta": args.beta, "v": v_lo},
        seed=None,
        input_hashes={p: _hash_file(p) for p in (args.problem, args.trace)},
        outputs=[str(out)],
        wall_clock_s=time.perf_counter() - t0,
    ).write(out_dir)
    _say(args, json.dumps(report, sort_keys=True))
    return EXIT_OK if report["ok"] else EXIT_CHECK_FAILED


def cmd_rate(args) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace = problem.load_trace(args.trace)
    if args.fstar is not None:
        f_star = args.fstar
    elif args.problem is not None:
        prob = problem.load_problem(args.problem)
        _, f_star = experiments.reference_solution(prob)
    else:
        print("error: rate needs --fstar or --problem for the reference value",
              file=sys.stderr)
        return EXIT_USAGE
    est = analysis.fit_rate(trace, "objective-gap", f_star=f_star,
                            tail_frac=args.tail_frac)
    report = {
        "eta_hat": est.eta_hat, "c_hat": est.c_hat, "r2": est.r2,
        "tail_start": est.tail_start, "n_points": est.n_points,
        "quantity": est.quantity,
        "linear_convergence_detected": est.linear_convergence_detected,
    }
    out = out_dir / args.report_out
    _json_dump(out, report)
    RunManifest(
        command="rate", argv=sys.argv[1:],
        config={"tail_frac": args.tail_frac, "fstar": args.fstar},
        seed=None,
        input_hashes={args.trace: _hash_file(args.trace)},
        outputs=[str(out)],
        wall_clock_s=time.perf_counter() - t0,
    ).write(out_dir)
    _say(args, json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_certify_point(args) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prob = problem.load_problem(args.problem)
    x = np.asarray(json.loads(args.point), dtype=np.float64)
    report = optimality.classify_point(prob, x, fo_tol=args.fo_tol,
                                       so_tol=args.so_tol)
    probe = None
    if args.probe:
        probe = optimality.growth_probe(prob, x, seed=args.seed)
    data = {
        "classification": report.classification,
        "support": list(report.support.indices),
        "first_order_residual": report.first_order_residual,
        "second_order_min_eig": report.second_order_min_eig,
    }
    if probe is not None:
        data["growth_probe"] = {
            "eps_hat": probe.eps_hat, "delta": probe.delta,
            "n_samples": probe.n_samples, "violations": probe.violations,
        }
    print(json.dumps(data, sort_keys=True))
    out = out_dir / args.report_out
    _json_dump(out, data)
    RunManifest(
        command="certify-point", argv=sys.argv[1:],
        config={"fo_tol": args.fo_tol, "so_tol": args.so_tol},
        seed=args.seed,
        input_hashes={args.problem: _hash_file(args.problem)},
        outputs=[str(out)],
        wall_clock_s=time.perf_counter() - t0,
    ).write(out_dir)
    return EXIT_OK


def cmd_enumerate(args) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prob = problem.load_problem(args.problem)
    result = optimality.enumerate_local_minima(prob, seed=args.seed)
    data = {
        "minima": [
            {
                "x": [float(f"{v:.17g}") for v in x],
                "objective": problem.objective(prob, x),
                "classification": rep.classification,
                "first_order_residual": rep.first_order_residual,
                "second_order_min_eig": rep.second_order_min_eig,
            }
            for x, rep in result.minima
        ],
        "incomplete_orthants": [
            {"support": list(s), "signs": list(g)} for s, g in result.incomplete
        ],
    }
    print(json.dumps(data, sort_keys=True))
    out = out_dir / args.report_out
    _json_dump(out, data)
    RunManifest(
        command="enumerate", argv=sys.argv[1:],
        config={}, seed=args.seed,
        input_hashes={args.problem: _hash_file(args.problem)},
        outputs=[str(out)],
        wall_clock_s=time.perf_counter() - t0,
    ).write(out_dir)
    return EXIT_OK


def cmd_repro(args) -> int:
    t0 = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.experiment not in experiments.EXPERIMENTS:
        print(f"error: unknown experiment {args.experiment!r}; "
              f"known: {sorted(experiments.EXPERIMENTS)}", file=sys.stderr)
        return EXIT_USAGE
    kwargs = {}
    if args.experiment == "prox-pin":
        kwargs["processes"] = args.threads
    result = experiments.run_experiment(args.experiment, **kwargs)
    outputs = []
    for name, text in sorted(result.files.items()):
        path = out_dir / name
        path.write_text(text, encoding="utf-8")
        outputs.append(str(path))
    RunManifest(
        command=f"repro-{args.experiment}", argv=sys.argv[1:],
        config={"experiment": args.experiment},
        seed=None, outputs=outputs,
        wall_clock_s=time.perf_counter() - t0,
    ).write(out_dir)
    if result.ok:
        _say(args, f"repro {args.experiment}: PASS ({len(outputs)} files)")
        return EXIT_OK
    _say(args, f"repro {args.experiment}: FAIL")
    for f in result.failures:
        print(f"  {f}", file=sys.stderr)
    return EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpreg",
        description="Solvers and certification tools for lp-regularized "
                    "least squares (0 < p < 1).",
    )
    parser.add_argument("--threads", type=int, default=1,
                        help="worker count for parallelizable stages")
    parser.add_argument("--quiet", action="store_true")
    parser.add_argument("--out-dir", default=".")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random planted instance")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--m", type=int, default=20)
    g.add_argument("--n", type=int, default=50)
    g.add_argument("--s", type=int, default=5)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--lambda", dest="lam", type=float, default=0.1)
    g.add_argument("--p", type=float, default=0.5)
    g.add_argument("--out", default="problem.json")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run a solver and write its trace")
    s.add_argument("--algo", choices=("pga", "ipga1p", "ipga2p"), default="pga")
    s.add_argument("--problem", required=True)
    s.add_argument("--p", type=float, default=None, help="override problem p")
    s.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="override problem lambda")
    s.add_argument("--v", type=float, default=None)
    s.add_argument("--auto-v", action="store_true",
                   help="use the default stepsize rule (also the fallback)")
    s.add_argument("--tau-c", type=float, default=None)
    s.add_argument("--tau-rho", type=float, default=0.5)
    s.add_argument("--t-c", type=float, default=None)
    s.add_argument("--t-rho", type=float, default=0.7)
    s.add_argument("--max-iters", type=int, default=100_000)
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--knob", type=float, default=0.9)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trace-out", default="trace.csv")
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("prox-table", help="pin the scalar prox on a z grid")
    t.add_argument("--z-min", type=float, default=-10.0)
    t.add_argument("--z-max", type=float, default=10.0)
    t.add_argument("--z-count", type=int, default=101)
    t.add_argument("--v", type=float, default=1.0)
    t.add_argument("--lambda", dest="lam", type=float, default=1.0)
    t.add_argument("--p", type=float, default=0.5)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_prox_table)

    c = sub.add_parser("certify", help="check descent conditions on a trace")
    c.add_argument("--trace", required=True)
    c.add_argument("--problem", required=True)
    c.add_argument("--alpha", default="auto")
    c.add_argument("--beta", default="auto")
    c.add_argument("--v", type=float, default=None,
                   help="stepsize used by the traced run (default rule if omitted)")
    c.add_argument("--eps-from-trace", action="store_true",
                   help="use the trace's eps_k column as the eps^2 sequence "
                        "of the sufficient-decrease check")
    c.add_argument("--report-out", default="certify-report.json")
    c.set_defaults(func=cmd_certify)

    r = sub.add_parser("rate", help="fit a geometric rate on a trace")
    r.add_argument("--trace", required=True)
    r.add_argument("--problem", default=None)
    r.add_argument("--fstar", type=float, default=None)
    r.add_argument("--tail-frac", type=float, default=0.5)
    r.add_argument("--report-out", default="rate-report.json")
    r.set_defaults(func=cmd_rate)

    cp = sub.add_parser("certify-point", help="classify a point")
    cp.add_argument("--problem", required=True)
    cp.add_argument("--point", required=True, help="JSON array of length n")
    cp.add_argument("--fo-tol", type=float, default=1e-8)
    cp.add_argument("--so-tol", type=float, default=1e-10)
    cp.add_argument("--probe", action="store_true",
                    help="attach a growth probe to the report")
    cp.add_argument("--seed", type=int, default=0)
    cp.add_argument("--report-out", default="point-report.json")
    cp.set_defaults(func=cmd_certify_point)

    e = sub.add_parser("enumerate", help="enumerate local minima (n <= 12)")
    e.add_argument("--problem", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--report-out", default="enumerate-report.json")
    e.set_defaults(func=cmd_enumerate)

    rp = sub.add_parser("repro", help="run a canned certification experiment")
    rp.add_argument("experiment")
    rp.set_defaults(func=cmd_repro)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except LpregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
