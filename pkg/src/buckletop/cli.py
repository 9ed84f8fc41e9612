"""Command line interface.

    buckletop optimize      --config FILE [--out DIR] [--element q4|q6] [--threads N]
    buckletop analyze       --config FILE --density FILE [--p P] [--out DIR]
    buckletop verify-column [--element q4|q6]
    buckletop fdcheck       --config FILE [--out DIR]

BUCKLETOP_THREADS and BUCKLETOP_OUT provide environment defaults for
--threads and --out; explicit flags win.
"""

import argparse
import os
import sys


def _build_parser():
    ap = argparse.ArgumentParser(prog="buckletop",
                                 description="Buckling-constrained topology optimization")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--element", choices=["q4", "q6"], default=None,
                       help="override the element kind")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for the linear algebra backend")

    common(sub.add_parser("optimize", help="run a full optimization"))
    pa = sub.add_parser("analyze", help="analyze a stored density field")
    common(pa)
    pa.add_argument("--density", required=True, help="physical density CSV")
    pa.add_argument("--p", type=float, default=None,
                    help="single penalization exponent (default: report p=1 and p=3)")
    pv = sub.add_parser("verify-column", help="column accuracy ladder")
    pv.add_argument("--element", choices=["q4", "q6", "both"], default="both")
    pv.add_argument("--threads", type=int, default=None)
    pf = sub.add_parser("fdcheck", help="finite-difference gradient check")
    common(pf)
    return ap


def _apply_threads(n):
    if n is None:
        n = os.environ.get("BUCKLETOP_THREADS")
    if n is None:
        return
    n = str(int(n))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = n


def _resolve_out(args, cfg):
    if getattr(args, "out", None):
        return args.out
    env = os.environ.get("BUCKLETOP_OUT")
    if env:
        return env
    return cfg.output.dir if cfg is not None else "out"


def main(argv=None):
    args = _build_parser().parse_args(argv)
    _apply_threads(getattr(args, "threads", None))

    # heavy imports only after the thread environment is pinned
    from . import driver
    from .config import ConfigError, RunConfig

    if args.command == "verify-column":
        kinds = ["q4", "q6"] if args.element == "both" else [args.element]
        Pc = driver.euler_column_load()
        print(f"closed-form critical load: {Pc:.6g}")
        for kind in kinds:
            print(f"-- {kind}")
            print(f"{'mesh':>10} {'lambda_1':>12} {'load':>14} {'rel_error':>12}")
            for row in driver.verify_column(kind):
                print(f"{row.nelx:>5}x{row.nely:<4} {row.lam1:>12.6g} "
                      f"{row.critical_load:>14.8g} {row.rel_error:>+12.4e}")
        return 0

    try:
        cfg = RunConfig.load(args.config)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.element:
        cfg.element = args.element
    outdir = _resolve_out(args, cfg)

    try:
        if args.command == "optimize":
            result, diag = driver.run_optimize(cfg, outdir=outdir)
            print(f"finished {len(result.history)} iterations: "
                  f"J = {result.Jf:.6g}, Jn = {result.Jn:.4f}, "
                  f"lambda_1 = {diag['lambda'][0] if diag['lambda'] else float('nan'):.4f}")
            print(f"artifacts written to {outdir}")
            return 0
        if args.command == "analyze":
            p_values = (args.p,) if args.p is not None else (1.0, 3.0)
            diag = driver.run_analyze(cfg, args.density, p_values=p_values,
                                      outdir=outdir)
            for key, entry in diag.items():
                if key.startswith("p="):
                    lam1 = entry["lambda"][0] if entry["lambda"] else float("nan")
                    print(f"{key}: J = {entry['Jf']:.6g}, lambda_1 = {lam1:.4f}")
            print(f"artifacts written to {outdir}")
            return 0
        if args.command == "fdcheck":
            rows, summary = driver.run_fdcheck(cfg, outdir=outdir)
            ok = driver.fdcheck_passes(summary)
            for name, tol in driver.FD_TOLERANCES.items():
                mark = "PASS" if summary[name] < tol else "FAIL"
                print(f"{name:>12}: max rel err {summary[name]:.3e} "
                      f"(tol {tol:.0e}) {mark}")
            return 0 if ok else 1
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
