"""Command-line front end producing reproducible CSV/JSON artifacts.

Commands: solve, asymptotics, rate-curve, verify, torus-rate.  Kernels are
specified inline as ``family:key=value,...`` (constant-one, pure-escape,
two-state, poly-tail, difference-walk) or loaded from JSON files (ctmc,
tabulated).  Exit codes: 0 ok, 2 precondition violation, 3 numerical failure,
4 statistical mismatch.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import asymptotics, montecarlo, renewal
from .errors import NumericalError, PreconditionError
from .kernels import (
    CLOSED_FORM_FAMILIES,
    CtmcKernel,
    GeneratorMatrix,
    build_difference_walk,
    load_generator,
    load_tabulated,
)

__all__ = ["main", "parse_kernel_spec"]

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_NUMERICAL = 3
EXIT_MISMATCH = 4


# ---------------------------------------------------------------------------
# Kernel spec grammar
# ---------------------------------------------------------------------------

def _parse_kv(body):
    out = {}
    if not body:
        return out
    for item in body.split(","):
        if "=" not in item:
            raise PreconditionError("kernel option %r is not key=value" % item)
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_kernel_spec(spec):
    """Build (kernel, generator-or-None) from an inline kernel spec string."""
    family, _, body = spec.partition(":")
    family = family.strip()
    opts = _parse_kv(body)
    if family == "constant-one":
        gen = GeneratorMatrix(states=(0,), rates=[[0.0]], origin=0)
        return CLOSED_FORM_FAMILIES[family](), gen
    if family == "pure-escape":
        q = float(opts.pop("q"))
        _reject_extras(family, opts)
        gen = GeneratorMatrix(states=(0, 1), rates=[[-q, q], [0.0, 0.0]], origin=0)
        return CLOSED_FORM_FAMILIES[family](q), gen
    if family == "two-state":
        a = float(opts.pop("a"))
        b = float(opts.pop("b"))
        _reject_extras(family, opts)
        gen = GeneratorMatrix(states=(0, 1), rates=[[-a, a], [b, -b]], origin=0)
        return CLOSED_FORM_FAMILIES[family](a, b), gen
    if family == "poly-tail":
        alpha = float(opts.pop("alpha"))
        t0 = float(opts.pop("t0", 1.0))
        _reject_extras(family, opts)
        return CLOSED_FORM_FAMILIES[family](alpha, t0), None
    if family == "difference-walk":
        d = int(opts.pop("d"))
        radius = int(opts.pop("radius"))
        boundary = opts.pop("boundary", "reflecting")
        _reject_extras(family, opts)
        gen = build_difference_walk(d, radius, boundary=boundary)
        return CtmcKernel(gen), gen
    if family == "ctmc":
        path = opts.pop("file")
        _reject_extras(family, opts)
        gen = load_generator(path)
        return CtmcKernel(gen), gen
    if family == "tabulated":
        path = opts.pop("file")
        _reject_extras(family, opts)
        return load_tabulated(path), None
    raise PreconditionError("unknown kernel family %r" % family)


def _reject_extras(family, opts):
    if opts:
        raise PreconditionError("unknown options for %s: %s" % (family, ", ".join(sorted(opts))))


def _parse_gammas(text):
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise PreconditionError("bad gamma grid %r" % text) from exc
    if not values:
        raise PreconditionError("gamma grid is empty")
    return np.asarray(values)


def _grid_step(horizons, target_points=2048):
    """A step that divides every horizon exactly, close to max/target_points."""
    fracs = [Fraction(h).limit_denominator(10**6) for h in horizons]
    g = fracs[0]
    for f in fracs[1:]:
        g = Fraction(math.gcd(g.numerator * f.denominator, f.numerator * g.denominator),
                     g.denominator * f.denominator)
    target = max(horizons) / target_points
    m = max(1, math.ceil(g / Fraction(target).limit_denominator(10**9)))
    return float(g / m)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _outdir(args):
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config_dict(args, command):
    cfg = {"command": command}
    for key, value in sorted(vars(args).items()):
        if key in ("func",):
            continue
        cfg[key.replace("_", "-")] = value
    return cfg


def cmd_solve(args):
    kernel, _ = parse_kernel_spec(args.kernel)
    step = args.step if args.step is not None else args.horizon / 64.0
    problem = renewal.RenewalProblem(kernel, args.gamma, args.horizon, step)
    solution = renewal.refine(problem, args.target)
    out = _outdir(args)
    renewal.write_solution_csv(solution, out / "solution.csv", config=_config_dict(args, "solve"))
    print("solve: Z(%g) = %.12g (err_est %.3g, step %.3g)%s"
          % (solution.horizon, solution.values[-1], solution.error_estimate,
             solution.step, " flags=" + ";".join(solution.flags) if solution.flags else ""))
    return EXIT_OK


def cmd_asymptotics(args):
    kernel, _ = parse_kernel_spec(args.kernel)
    report = asymptotics.classify(kernel, args.gamma)
    extra = None
    if args.solution is not None:
        sol = renewal.read_solution_csv(args.solution)
        if report.regime == "supercritical":
            traj = np.exp(-report.rate * sol.grid) * sol.values
            extra = {"observed_prefactor_trajectory":
                     {"t": sol.grid.tolist(), "exp_rate_t_Z": traj.tolist()}}
        else:
            extra = {"observed_values": {"t": sol.grid.tolist(), "Z": sol.values.tolist()}}
    out = _outdir(args)
    cfg = _config_dict(args, "asymptotics")
    asymptotics.write_report(report, out / "report.json", out / "report.csv",
                             config=cfg, extra=extra)
    detail = {"supercritical": lambda: "rate=%.12g prefactor=%.12g" % (report.rate, report.prefactor),
              "critical": lambda: "H_infinity=%s" % report.h_infinity,
              "subcritical": lambda: "limit=%.12g" % report.limit}[report.regime]()
    print("asymptotics: regime=%s green=%s %s" % (report.regime, report.green, detail))
    return EXIT_OK


def cmd_rate_curve(args):
    kernel, _ = parse_kernel_spec(args.kernel)
    gammas = _parse_gammas(args.gammas)
    curve = asymptotics.rate_curve(kernel, gammas, threads=args.threads)
    out = _outdir(args)
    asymptotics.write_rate_curve_csv(curve, out / "rate_curve.csv", include_identity=True,
                                     config=_config_dict(args, "rate-curve"))
    print("rate-curve: gamma_c=%.6g convex=%s threshold=%s r(max)/max=%.6g"
          % (curve.gamma_c, curve.convexity_ok, curve.threshold_ok, curve.slope_ratio))
    return EXIT_OK


def cmd_verify(args):
    kernel, gen = parse_kernel_spec(args.kernel)
    if gen is None:
        raise PreconditionError("verify needs a generator-backed kernel "
                                "(constant-one, pure-escape, two-state, ctmc, difference-walk)")
    horizons = tuple(float(x) for x in args.horizons.split(","))
    step = args.step if args.step is not None else _grid_step(horizons)
    horizon = max(horizons)
    problem = renewal.RenewalProblem(kernel, args.solver_gamma if args.solver_gamma is not None
                                     else args.gamma, horizon, step)
    solution = renewal.solve(problem)
    config = montecarlo.McConfig(generator=gen, start=gen.origin, gamma=args.gamma,
                                 horizons=horizons, replicas=args.replicas,
                                 base_seed=args.seed)
    mc = montecarlo.estimate(config)
    result = montecarlo.compare(config, solution, mc=mc)
    out = _outdir(args)
    montecarlo.write_estimate_csv(mc, out / "verify.csv", comparison=result,
                                  config=_config_dict(args, "verify"))
    # solution invariants: Z(0) = 1, nondecreasing, 1 <= Z <= e^{gamma t} up to solver error
    slack = 1.0 + 2.0 * solution.error_estimate + 1e-9
    bounds_ok = (solution.values[0] == 1.0
                 and bool(np.all(np.diff(solution.values) >= -1e-12 * solution.values[:-1]))
                 and bool(np.all(solution.values >= 1.0 - 1e-12))
                 and bool(np.all(solution.values
                                 <= np.exp(problem.gamma * solution.grid) * slack)))
    zmax = float(np.max(np.abs(result.z_scores))) if result.z_scores.size else 0.0
    print("verify: max|z|=%.3g invariants=%s heavy_tail=%s"
          % (zmax, "ok" if bounds_ok else "violated", mc.heavy_tail_warning))
    if not bounds_ok:
        return EXIT_NUMERICAL
    if not result.passed:
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_torus_rate(args):
    rate = asymptotics.srw_torus_rate(args.d, args.gamma, jump_rate=args.jump_rate)
    out = _outdir(args)
    lines = ["# config: %s" % json.dumps(_config_dict(args, "torus-rate"), sort_keys=True),
             "d,gamma,jump_rate,r",
             "%d,%.17g,%.17g,%.17g" % (args.d, args.gamma, args.jump_rate, rate)]
    (out / "torus_rate.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("torus-rate: d=%d gamma=%g r=%.12g" % (args.d, args.gamma, rate))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ltmoments",
        description="Exponential moments of Markov-chain local times via renewal equations")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output-dir", default=".", help="directory for output files")
        p.add_argument("--threads", type=int, default=1,
                       help="cap on module parallelism (default 1)")

    p = sub.add_parser("solve", help="solve the renewal equation to a target error")
    p.add_argument("--kernel", required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--step", type=float, default=None, help="initial grid step")
    p.add_argument("--target", type=float, default=1e-6, help="target relative error")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("asymptotics", help="classify the growth regime of gamma")
    p.add_argument("--kernel", required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--solution", default=None,
                   help="solution.csv to embed an observed trajectory")
    common(p)
    p.set_defaults(func=cmd_asymptotics)

    p = sub.add_parser("rate-curve", help="sample the growth-rate curve")
    p.add_argument("--kernel", required=True)
    p.add_argument("--gammas", required=True, help="comma-separated gamma grid")
    common(p)
    p.set_defaults(func=cmd_rate_curve)

    p = sub.add_parser("verify", help="cross-check solver against Monte Carlo")
    p.add_argument("--kernel", required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--horizons", default="1,2,3", help="comma-separated horizons")
    p.add_argument("--replicas", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--solver-gamma", type=float, default=None,
                   help="override the solver's gamma (negative-control runs)")
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("torus-rate", help="simple-random-walk rate from the torus integral")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--jump-rate", type=float, default=2.0,
                   help="total jump rate of the difference walk (default 2)")
    common(p)
    p.set_defaults(func=cmd_torus_rate)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PreconditionError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_PRECONDITION
    except NumericalError as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
