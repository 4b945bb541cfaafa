"""Command-line entry point (``nubesim``)."""
import argparse
import json
from pathlib import Path
import sys

from . import harness
from .stein import JumpPointError, stein_eval


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _common(p, samples=100_000):
    p.add_argument("--samples", type=int, default=samples, help="Monte Carlo sample size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=_int_list, default=[1, 2, 3], help="weight orders, e.g. 1,2,3")
    p.add_argument("--replicas", type=int, default=8, help="replica streams the samples are split into")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("--out", default="report.csv", help="report path (.csv or .json)")


def build_parser():
    parser = argparse.ArgumentParser(prog="nubesim", description="Non-uniform normal approximation experiments.")
    parser.add_argument("--config", help="flat key = value experiment file, read by the run subcommand")
    sub = parser.add_subparsers(dest="command", required=True)

    st = sub.add_parser("stein", help="evaluate the Stein solution")
    st_sub = st.add_subparsers(dest="action", required=True)
    ev = st_sub.add_parser("eval")
    ev.add_argument("--z", type=float, required=True)
    ev.add_argument("--w", type=float, required=True)
    ev.add_argument("--side", choices=["left", "right"])

    fb = sub.add_parser("fbm", help="quadratic variation of fractional Gaussian noise")
    fb.add_argument("--hurst", type=float, required=True)
    fb.add_argument("--n", type=_int_list, required=True, help="one size or a comma list")
    fb.add_argument("--method", choices=["spectral", "cholesky", "circulant", "auto"], default="spectral")
    fb.add_argument("--c-h", dest="c_H", type=float, default=1.0)
    _common(fb)

    rg = sub.add_parser("rgg", help="subgraph counts in a random geometric graph")
    rg.add_argument("--t", type=_float_list, required=True, help="intensity, or a comma list")
    rg.add_argument("--r", type=float, required=True)
    rg.add_argument("--dim", type=int, default=2)
    rg.add_argument("--pattern", default="edge")
    rg.add_argument("--outer", type=int, default=2000)
    rg.add_argument("--inner", type=int, default=200)
    rg.add_argument("--pilot", type=int, default=100_000)
    rg.add_argument("--v", type=float, default=1.0)
    _common(rg)

    r2 = sub.add_parser("runs2", help="weighted 2-runs on Rademacher bits")
    src = r2.add_mutually_exclusive_group(required=True)
    src.add_argument("--weights", help="file of weights (whitespace or comma separated)")
    src.add_argument("--uniform", type=_int_list, help="number of unit weights, or a comma list")
    r2.add_argument("--mode", choices=["enumerate", "mc"], default="enumerate")
    _common(r2)

    er = sub.add_parser("er", help="subgraph counts in an Erdos-Renyi graph")
    er.add_argument("--n", type=_int_list, required=True)
    er.add_argument("--p", type=float, required=True)
    er.add_argument("--pattern", default="triangle")
    er.add_argument("--mode", choices=["enumerate", "mc"], default="mc")
    _common(er)

    rp = sub.add_parser("report", help="summarize or fit a saved report")
    rp.add_argument("--in", dest="inp", required=True)
    rp.add_argument("--fit-rate", action="store_true")
    rp.add_argument("--exponent", type=float)
    rp.add_argument("--tolerance", type=float, default=0.15)

    run = sub.add_parser("run", help="run the experiment described by --config")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--out")
    return parser


def _specs(args):
    base = dict(n_samples=args.samples, weights_k=args.k, seed=args.seed, replicas=args.replicas,
                output_path=args.out)
    if args.command == "fbm":
        return [harness.ExperimentSpec("fbm", {"hurst": args.hurst, "n": n, "c_H": args.c_H,
                                               "method": args.method}, **base) for n in args.n]
    if args.command == "rgg":
        common = {"r": args.r, "dim": args.dim, "pattern": args.pattern, "outer": args.outer,
                  "inner": args.inner, "pilot": args.pilot, "v": args.v}
        return [harness.ExperimentSpec("rgg", {"t": t, **common}, **base) for t in args.t]
    if args.command == "runs2":
        if args.weights:
            return [harness.ExperimentSpec("two_runs", {"weights": str(Path(args.weights).resolve()),
                                                        "mode": args.mode}, **base)]
        return [harness.ExperimentSpec("two_runs", {"uniform": m, "mode": args.mode}, **base)
                for m in args.uniform]
    if args.command == "er":
        return [harness.ExperimentSpec("er", {"n": n, "p": args.p, "pattern": args.pattern,
                                              "mode": args.mode}, **base) for n in args.n]
    raise AssertionError(args.command)


def _print_rows(rows):
    for r in harness.sort_rows(rows):
        print(f"{r.model:9s} size={r.size:<10g} ks={r.ks_uniform:.5f} ks_w3={r.ks_w3:.5f} "
              f"{r.bound_kind}={r.bound_value:.5g} ratio={r.ratio:.4g}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "stein":
            try:
                res = stein_eval(args.z, args.w, side=args.side)
            except JumpPointError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2
            print(json.dumps({"z": res.z, "w": res.w, "f": res.f, "f_prime": res.f_prime}))
            return 0
        if args.command == "report":
            rows = harness.read_report(args.inp)
            _print_rows(rows)
            if args.fit_rate:
                if args.exponent is None:
                    parser.error("--fit-rate needs --exponent")
                v = harness.rate_report(rows, args.exponent, args.tolerance)
                print(f"slope={v.fit.slope:.4f} intercept={v.fit.intercept:.4f} r2={v.fit.r_squared:.4f} "
                      f"target={v.exponent:g} tol={v.tolerance:g} -> {'PASS' if v.passed else 'FAIL'}")
                return 0 if v.passed else 1
            return 0
        if args.command == "run":
            if not args.config:
                parser.error("run needs --config")
            spec = harness.spec_from_mapping(harness.parse_config(Path(args.config).read_text()))
            out = args.out or spec.output_path or "report.csv"
            rows = [harness.run_experiment(spec, workers=args.workers)]
        else:
            specs = _specs(args)
            rows = [harness.run_experiment(s, workers=args.workers) for s in specs]
            out = args.out
        harness.emit_report(rows, out)
        _print_rows(rows)
        print(f"wrote {out}")
        return 0
    except harness.ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
