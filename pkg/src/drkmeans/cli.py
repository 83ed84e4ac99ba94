"""Command-line entry point: ``python -m drkmeans <command> ...``.

Exit codes: 0 on success, 1 for usage errors, 2 for runtime or solver
errors. Every failure prints a single ``drkmeans: error: ...`` line.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import sys

import numpy as np

from . import bench, io
from .core import RobustConfig
from .risk import RadiusConfig, calibrate_radius, calibrate_radius_contaminated, dual_curve, radius_caveats, wc_risk
from .seeding import lloyd_fit, make_rng, seed_kmeanspp, seed_random
from .solver import fit


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def _add_fit_io(p):
    p.add_argument("--input", required=True, help="CSV of points, one per row")
    p.add_argument("--header", action="store_true", help="skip the first CSV row")
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=_positive_int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=("kmeanspp", "random", "file"), default="kmeanspp")
    p.add_argument("--init-centroids", help="CSV of K initial centers, with --init file")
    p.add_argument("--standardize", action="store_true", help="z-score each feature first")
    p.add_argument("--output", required=True, help="result JSON path")
    p.add_argument("--soft", action="store_true", help="store the soft assignment")
    p.add_argument("--worst-case", action="store_true", help="store the worst-case points")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="drkmeans", description="Distributionally robust k-means.")
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help="cap BLAS threads; results do not depend on it")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="robust fit")
    _add_fit_io(p)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--gamma", type=float)
    mode.add_argument("--radius", type=float)
    p.add_argument("--entropy-lambda", type=float, default=0.0)

    p = sub.add_parser("baseline", help="Lloyd k-means")
    _add_fit_io(p)

    p = sub.add_parser("wc-risk", help="worst-case risk of given centers")
    p.add_argument("--input", required=True)
    p.add_argument("--header", action="store_true")
    p.add_argument("--centroids", required=True, help="result JSON or CSV of centers")
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--curve", help="write (gamma, D(gamma)) pairs to this CSV")
    p.add_argument("--curve-points", type=_positive_int, default=61)

    p = sub.add_parser("outliers", help="score points by distance to their center")
    p.add_argument("--input", required=True)
    p.add_argument("--header", action="store_true")
    p.add_argument("--fit", required=True, help="result JSON from fit or baseline")
    p.add_argument("--z", type=_positive_int, required=True)
    p.add_argument("--truth", help="file of 0-based outlier indices, one per line")
    p.add_argument("--output", help="scores CSV path")

    p = sub.add_parser("calibrate-radius", help="high-confidence W2 radius")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--eps", type=float, default=math.exp(-1.0))
    p.add_argument("--dim", type=_positive_int, required=True)
    p.add_argument("--alpha", type=float, default=4.0)
    p.add_argument("--fg-C", dest="fg_C", type=float, default=1.0)
    p.add_argument("--fg-c", dest="fg_c", type=float, default=1.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--n2", type=int, default=None, help="number of outliers")
    p.add_argument("--sep-D", dest="sep_D", type=float, default=0.0,
                   help="W2 distance between inlier and outlier laws")

    p = sub.add_parser("synth", help="sample a Gaussian mixture to CSV")
    p.add_argument("--spec", required=True, help="mixture JSON")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)

    p = sub.add_parser("bench", help="run a benchmark experiment")
    p.add_argument("--experiment", choices=("1", "2"), required=True)
    p.add_argument("--trials", type=_positive_int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="results CSV path (default stdout)")
    return parser


def _print_json(obj):
    sys.stdout.write(json.dumps(io._floats(obj), allow_nan=False) + "\n")


def _initial_centers(args, data):
    if args.init == "file":
        if not args.init_centroids:
            raise UsageError("--init file needs --init-centroids")
        centers = io.load_csv(args.init_centroids)
        if centers.shape != (args.k, data.shape[1]):
            raise ValueError(f"initial centers have shape {centers.shape}, "
                             f"expected ({args.k}, {data.shape[1]})")
        return centers
    if args.init_centroids:
        raise UsageError("--init-centroids needs --init file")
    rng = make_rng(args.seed)
    if args.init == "random":
        return seed_random(data, args.k, rng)
    return seed_kmeanspp(data, args.k, rng)


def _load_input(args):
    data = io.load_csv(args.input, args.header)
    transform = None
    if getattr(args, "standardize", False):
        transform = io.Standardizer.fit(data)
        data = transform.transform(data)
    return data, transform


def cmd_fit(args):
    if args.entropy_lambda < 0.0:
        raise UsageError("--entropy-lambda must be >= 0")
    if args.entropy_lambda > 0.0 and args.gamma is None:
        raise UsageError("--entropy-lambda needs --gamma")
    data, transform = _load_input(args)
    if args.standardize and args.init == "file":
        raise UsageError("--standardize cannot be combined with --init file")
    init = _initial_centers(args, data)
    cfg = RobustConfig(gamma=args.gamma, radius=args.radius, tol=args.tol,
                       max_iter=args.max_iter, entropy_lambda=args.entropy_lambda,
                       seed=args.seed)
    result = fit(data, args.k, cfg, init=init)
    config = {"command": "fit", "k": args.k, "gamma": args.gamma, "radius": args.radius,
              "entropy_lambda": args.entropy_lambda, "tol": args.tol,
              "max_iter": args.max_iter, "seed": args.seed, "init": args.init,
              "standardize": args.standardize}
    io.save_result(result, args.output, config, args.soft, args.worst_case, transform)


def cmd_baseline(args):
    data, transform = _load_input(args)
    if args.standardize and args.init == "file":
        raise UsageError("--standardize cannot be combined with --init file")
    init = _initial_centers(args, data)
    result = lloyd_fit(data, init, tol=args.tol, max_iter=args.max_iter)
    config = {"command": "baseline", "k": args.k, "tol": args.tol, "max_iter": args.max_iter,
              "seed": args.seed, "init": args.init, "standardize": args.standardize}
    io.save_result(result, args.output, config, args.soft, args.worst_case, transform)


def cmd_wc_risk(args):
    data = io.load_csv(args.input, args.header)
    centers = io.load_centroids(args.centroids)
    res = wc_risk(data, centers, args.radius)
    _print_json({"wc_risk": res.value, "gamma_star": res.gamma_star,
                 "boundary": res.boundary, "radius": args.radius})
    if args.curve:
        # log-spaced in gamma - 1, three decades either side of the minimiser
        mid = math.log10(res.gamma_star - 1.0)
        gammas = 1.0 + np.logspace(mid - 3.0, mid + 3.0, args.curve_points)
        curve = dual_curve(data, centers, args.radius, gammas)
        io.write_csv(args.curve, zip(curve.gammas.tolist(), curve.values.tolist()),
                     header=["gamma", "dual_value"])


def cmd_outliers(args):
    data = io.load_csv(args.input, args.header)
    result = io.load_result(args.fit)
    truth = None
    if args.truth:
        truth = io.load_csv(args.truth).ravel()
        if np.any(truth != np.round(truth)):
            raise ValueError(f"{args.truth}: indices must be integers")
        truth = truth.astype(np.int64)
    report = bench.outlier_report(data, result, args.z, truth)
    flagged = set(report.flagged.tolist())
    if args.output:
        io.write_csv(args.output,
                     ((i, float(s), int(i in flagged)) for i, s in enumerate(report.scores)),
                     header=["index", "score", "flagged"])
    _print_json({"z": report.z, "flagged": report.flagged.tolist(), "recall": report.recall})


def cmd_calibrate(args):
    cfg = RadiusConfig(confidence_eps=args.eps, fg_C=args.fg_C, fg_c=args.fg_c,
                       alpha=args.alpha, dim=args.dim, separation_D=args.sep_D, scale=args.scale)
    out = {"n": args.n, "eps": args.eps, "dim": args.dim}
    if args.n2 is None:
        out["radius"] = calibrate_radius(args.n, cfg)
        out["caveats"] = radius_caveats(args.n, cfg)
    else:
        if args.n2 < 0:
            raise UsageError("--n2 must be >= 0")
        out["n2"] = args.n2
        out["radius"] = calibrate_radius_contaminated(args.n, args.n2, cfg)
        out["caveats"] = radius_caveats(args.n, cfg, args.eps / 2.0)
    _print_json(out)


def cmd_synth(args):
    with open(args.spec) as fh:
        spec = bench.GmmSpec.from_dict(json.load(fh))
    data = bench.sample_gmm(spec, args.n, make_rng(args.seed))
    io.write_csv(args.output, data.tolist())


def cmd_bench(args):
    if args.experiment == "1":
        rows = bench.run_experiment1(trials=args.trials, seed=args.seed)
    else:
        rows = bench.run_experiment2(args.trials, seed=args.seed)
    header = list(rows[0])
    io.write_csv(args.output, ([r[h] for h in header] for r in rows), header=header)


COMMANDS = {
    "fit": cmd_fit,
    "baseline": cmd_baseline,
    "wc-risk": cmd_wc_risk,
    "outliers": cmd_outliers,
    "calibrate-radius": cmd_calibrate,
    "synth": cmd_synth,
    "bench": cmd_bench,
}


def _thread_limit(n):
    if n is None:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return contextlib.nullcontext()
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        with _thread_limit(args.threads):
            COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"drkmeans: usage error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        reason = " ".join(str(exc).split()) or type(exc).__name__
        print(f"drkmeans: error: {type(exc).__name__}: {reason}", file=sys.stderr)
        return 2
    return 0
