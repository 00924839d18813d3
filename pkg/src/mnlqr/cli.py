"""Command-line front end.

Exit codes: 0 success, 1 invalid input, 2 non-convergence or not mean-square
stabilizing, 3 bound violation or failed check.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import compute_bounds, compute_constants
from .checks import run_checks
from .covariance import DEFAULT_BETA, DEFAULT_EPSILON, DEFAULT_SIGMA_SQ, estimate_covariance, tightest_band
from .errors import InvalidInputError, MnlqrError
from .harness import (
    NOISE_KINDS,
    load_config,
    monte_carlo_cost,
    run_sweep,
    simulate_trajectory,
    summary_path,
)
from .io import format_matrix, load_system, read_matrix, rows_to_csv, write_matrix
from .lyapunov import closed_loop_cost
from .riccati import DEFAULT_MAX_ITER, DEFAULT_TOL, mss_spectral_radius, solve_riccati

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_VIOLATION = 0, 1, 2, 3

log = logging.getLogger("mnlqr")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(";", ",").split(",") if v.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated vector: {text!r}")


def _emit(args, rows, fieldnames=None) -> None:
    """One-row or multi-row CSV to ``--out`` (if given) or stdout."""
    text = rows_to_csv(rows, fieldnames)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _solve(args, system, Sigma_bar=None):
    return solve_riccati(system, Sigma_bar, tol=args.tol, max_iter=args.max_iter)


def cmd_synth(args) -> int:
    system = load_system(args.system)
    sol = _solve(args, system)
    row = {"n_x": system.n_x, "n_u": system.n_u, "n_w": system.n_w, "iterations": sol.iterations,
           "residual": sol.residual, "mss_radius": sol.mss_radius}
    if args.format == "text":
        print(f"iterations {sol.iterations}  residual {sol.residual:.3e}  mss_radius {sol.mss_radius:.6g}")
        print("P =")
        print(format_matrix(sol.P), end="")
        print("K =")
        print(format_matrix(sol.K), end="")
        return EXIT_OK
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_matrix(out / "P.csv", sol.P)
        write_matrix(out / "K.csv", sol.K)
        (out / "synth.csv").write_text(rows_to_csv([row]))
    else:
        sys.stdout.write(rows_to_csv([row]))
        print("# P")
        sys.stdout.write(format_matrix(sol.P))
        print("# K")
        sys.stdout.write(format_matrix(sol.K))
    return EXIT_OK


def cmd_constants(args) -> int:
    system = load_system(args.system)
    c = compute_constants(system, _solve(args, system))
    _emit(args, [c.as_row()])
    return EXIT_OK


def cmd_bounds(args) -> int:
    system = load_system(args.system)
    c = compute_constants(system, _solve(args, system))
    x0_norm = None
    if args.x0 is not None:
        if args.x0.size != system.n_x:
            raise InvalidInputError(f"x0 has {args.x0.size} entries, system has n_x = {system.n_x}")
        x0_norm = float(np.linalg.norm(args.x0))
    rep = compute_bounds(c, args.sigma_m, min(system.n_x, system.n_u), x0_norm)
    # valid also needs a suboptimality bound, which only exists when x0 is given
    gates_ok = rep.cond_ricpcond_ok and rep.cond_muP_ok and rep.cond_stab_ok and rep.mss_gate_ok
    _emit(args, [{**rep.as_row(), "gates_ok": gates_ok, "valid": rep.valid}])
    return EXIT_OK


def cmd_estimate(args) -> int:
    samples = read_matrix(args.samples)
    est = estimate_covariance(samples, args.beta, args.epsilon, args.sigma_sq)
    row = {"N": est.sample_count, "n_w": samples.shape[1], "t_sig": est.t_sig,
           "beta": est.beta, "epsilon": est.epsilon, "sigma_sq": est.sigma_sq}
    if args.sigma:
        band = tightest_band(read_matrix(args.sigma), est.Sigma_hat)
        row.update(delta_lower=band.delta_lower, delta_upper=band.delta_upper, sigma_m=band.sigma_m,
                   covered=band.sigma_m <= est.t_sig)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_matrix(out / "Sigma_hat.csv", est.Sigma_hat)
        (out / "estimate.csv").write_text(rows_to_csv([row]))
    else:
        sys.stdout.write(rows_to_csv([row]))
        print("# Sigma_hat")
        sys.stdout.write(format_matrix(est.Sigma_hat))
    return EXIT_OK


def cmd_simulate(args) -> int:
    system = load_system(args.system)
    K = read_matrix(args.gain) if args.gain else _solve(args, system).K
    if K.shape != (system.n_u, system.n_x):
        raise InvalidInputError(f"gain must be {system.n_u}x{system.n_x}, got {K.shape[0]}x{K.shape[1]}")
    x0 = args.x0 if args.x0 is not None else np.ones(system.n_x)
    if x0.size != system.n_x:
        raise InvalidInputError(f"x0 has {x0.size} entries, system has n_x = {system.n_x}")
    rng = np.random.default_rng(args.seed)
    radius = mss_spectral_radius(system, system.Sigma_bar, K)
    exact = closed_loop_cost(system, system.Sigma_bar, K, x0) if radius < 1 else math.inf
    if args.trajectories == 1:
        if args.horizon is None:
            raise InvalidInputError("--horizon is required for a single trajectory")
        traj = simulate_trajectory(system, K, x0, args.horizon, rng, args.noise)
        row = {"cost": traj.cost, "diverged": traj.diverged, "horizon": args.horizon,
               "mss_radius": radius, "exact_cost": exact}
    else:
        mc = monte_carlo_cost(system, K, x0, args.trajectories, rng, args.horizon, args.noise)
        row = {"cost": mc.mean, "stderr": mc.stderr, "trajectories": mc.n_trajectories,
               "diverged": mc.n_diverged, "horizon": mc.horizon, "mss_radius": radius,
               "exact_cost": exact}
    _emit(args, [row])
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    cfg.tol, cfg.max_iter = args.tol, args.max_iter
    if not cfg.out:
        raise InvalidInputError("sweep needs an output path (config key 'out' or --out)")
    result = run_sweep(cfg)
    s = result.summary
    log.info("wrote %s and %s", cfg.out, summary_path(cfg.out))
    print(f"trials={len(result.records)} violations={result.n_violations} "
          f"bound_slope={s['bound_slope']} actual_slope={s['actual_slope']} status={s['status']}")
    return EXIT_VIOLATION if result.n_violations else EXIT_OK


def cmd_check(args) -> int:
    system = load_system(args.system)
    x0 = args.x0
    if x0 is not None and x0.size != system.n_x:
        raise InvalidInputError(f"x0 has {x0.size} entries, system has n_x = {system.n_x}")
    results = run_checks(system, seed=args.seed or 0, x0=x0, tol=args.tol, max_iter=args.max_iter)
    _emit(args, [r.as_row() for r in results])
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="Riccati stopping tolerance (relative)")
    common.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("--format", choices=("csv", "text"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="mnlqr", description="LQR synthesis and perturbation certificates "
                                          "for systems with multiplicative noise.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="solve the Riccati equation")
    s.add_argument("system")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("constants", parents=[common], help="sensitivity constants at the optimum")
    s.add_argument("system")
    s.set_defaults(func=cmd_constants)

    s = sub.add_parser("bounds", parents=[common], help="perturbation bounds for a covariance band")
    s.add_argument("system")
    s.add_argument("--sigma-m", type=float, required=True, help="relative covariance band size")
    s.add_argument("--x0", type=_vector, default=None)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("estimate", parents=[common], help="sample covariance and confidence radius")
    s.add_argument("samples", help="CSV, one sample per row")
    s.add_argument("--beta", type=float, default=DEFAULT_BETA)
    s.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    s.add_argument("--sigma-sq", type=float, default=DEFAULT_SIGMA_SQ)
    s.add_argument("--sigma", default=None, help="true covariance CSV, enables the band columns")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", parents=[common], help="closed-loop rollouts")
    s.add_argument("system")
    s.add_argument("--gain", default=None, help="gain CSV (default: optimal gain)")
    s.add_argument("--x0", type=_vector, default=None)
    s.add_argument("--horizon", type=int, default=None, help="steps (default: adaptive)")
    s.add_argument("--trajectories", type=int, default=1)
    s.add_argument("--noise", choices=NOISE_KINDS, default="gaussian")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", parents=[common], help="sample-size sweep from a config file")
    s.add_argument("config")
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("check", parents=[common], help="run the diagnostic suite on a system")
    s.add_argument("system")
    s.add_argument("--x0", type=_vector, default=None)
    s.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MnlqrError as exc:
        print(f"mnlqr {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"mnlqr {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
