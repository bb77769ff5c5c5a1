"""Command-line front end: solve, bench, decay and verify.

Only the standard library is imported at module level so ``--threads``
(default 1) can pin the BLAS thread count in the environment before numpy
loads; the numerical modules are imported inside the handlers.  Every
output file embeds the full run configuration: JSON documents under a
``config`` key, CSV and Matrix Market files as comment lines.

Exit codes: 0 success (solve: converged), 2 iteration budget exhausted
(solve), 1 any error.  ``verify`` exits 0 only when every property suite
passes; setting ``QBDCR_CORRUPT_ORACLE`` in the environment deliberately
breaks the checked bounds, which must flip verify to a nonzero exit.
"""

import argparse
import json
import math
import os
import statistics
import sys
from dataclasses import asdict, dataclass

__all__ = ["RunConfig", "main"]

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "BLIS_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


@dataclass(frozen=True)
class RunConfig:
    """Validated flag set for one subcommand invocation."""

    subcommand: str
    m: int = 100
    band: int = 1
    seed: int = 0
    backend: str = "dense"
    tol: float = 1e-12
    iters: int = 50
    split: tuple = None
    out: str = "."
    threads: int = 1
    grid: str = None
    trials: int = 1000
    in_dir: str = None
    runs: int = 3

    def __post_init__(self):
        if self.subcommand not in ("solve", "bench", "decay", "verify"):
            raise ValueError(f"unknown subcommand {self.subcommand!r}")
        if self.backend not in ("dense", "hodlr"):
            raise ValueError(f"backend must be dense or hodlr, got "
                             f"{self.backend!r}")
        if self.m < 1 or self.band < 0 or self.iters < 0 or self.threads < 1 \
                or self.trials < 1 or self.runs < 1 or self.tol < 0:
            raise ValueError("RunConfig: out-of-range field")

    def to_dict(self):
        d = asdict(self)
        d["split"] = None if self.split is None else list(self.split)
        return d


def _parse_split(text):
    if text is None:
        return None
    parts = [int(x) for x in text.split(",")]
    if len(parts) == 1:
        parts = [parts[0], parts[0]]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(
            "--split takes one index or a comma pair, e.g. 800,800")
    return tuple(parts)


def build_parser():
    ap = argparse.ArgumentParser(
        prog="qbdcr",
        description="Cyclic-reduction solver for QBD quadratic matrix "
                    "equations with rank-structured (HODLR) arithmetic.",
        epilog="Outputs embed the run configuration; JSON carries a "
               "schema_version field. QBDCR_CORRUPT_ORACLE=1 breaks the "
               "verify bounds on purpose (negative control).")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common(p, iters_default, iters_help):
        p.add_argument("--size", type=int, default=100, metavar="M",
                       help="block size m (default 100)")
        p.add_argument("--band", type=int, default=1,
                       help="half bandwidth of the generated blocks "
                            "(default 1: tridiagonal)")
        p.add_argument("--seed", type=int, default=0,
                       help="generator seed (default 0)")
        p.add_argument("--backend", choices=("dense", "hodlr"),
                       default="dense", help="arithmetic backend")
        p.add_argument("--tol", type=float, default=1e-12, metavar="EPS",
                       help="truncation tolerance for the hodlr backend "
                            "(default 1e-12)")
        p.add_argument("--iters", type=int, default=iters_default,
                       help=iters_help)
        p.add_argument("--out", default=".", metavar="DIR",
                       help="output directory (default .)")
        p.add_argument("--threads", type=int, default=1,
                       help="BLAS thread count, set before numpy loads "
                            "(default 1)")

    ps = sub.add_parser("solve", help="solve for the minimal nonnegative G")
    common(ps, 50, "iteration budget (default 50)")
    ps.add_argument("--in", dest="in_dir", metavar="DIR",
                    help="read the instance from a problem directory "
                         "instead of generating one")

    pb = sub.add_parser("bench", help="timing table over a parameter grid")
    common(pb, 15, "pinned CR iteration count per cell (default 15)")
    pb.add_argument("--grid", metavar="SPEC",
                    help="semicolon-separated comma lists, e.g. "
                         "'size=100,200;backend=dense,hodlr;tol=1e-12'; "
                         "omitted keys fall back to the scalar flags")
    pb.add_argument("--runs", type=int, default=3,
                    help="timed repetitions per cell, median reported "
                         "(default 3)")

    pd = sub.add_parser("decay", help="off-diagonal singular values per step")
    common(pd, 20, "number of CR steps to profile (default 20)")
    pd.add_argument("--split", type=_parse_split, default=None,
                    help="probed block corner as 'i,j' (default m/2,m/2)")
    pd.add_argument("--in", dest="in_dir", metavar="DIR",
                    help="read the instance from a problem directory")

    pv = sub.add_parser("verify", help="run the property suites")
    common(pv, 50, "unused for verify")
    pv.add_argument("--trials", type=int, default=1000,
                    help="randomized trials per suite (default 1000)")
    return ap


def _config_from(args):
    kw = {
        "subcommand": args.subcommand,
        "m": args.size,
        "band": args.band,
        "seed": args.seed,
        "backend": args.backend,
        "tol": args.tol,
        "iters": args.iters,
        "out": args.out,
        "threads": args.threads,
    }
    for opt in ("split", "grid", "trials", "in_dir", "runs"):
        if hasattr(args, opt) and getattr(args, opt) is not None:
            kw[opt] = getattr(args, opt)
    return RunConfig(**kw)


def _arithmetic(cfg):
    from .hodlr import ArithmeticConfig
    return ArithmeticConfig(tol=cfg.tol) if cfg.backend == "hodlr" else None


def _load_or_generate(cfg):
    from . import io as qio
    from .qbd import random_qbd
    if cfg.in_dir is not None:
        if not os.path.isdir(cfg.in_dir):
            raise FileNotFoundError(f"problem directory not found: "
                                    f"{cfg.in_dir}")
        return qio.load_problem(cfg.in_dir)
    return random_qbd(cfg.m, band=cfg.band, seed=cfg.seed)


# ------------------------------------------------------------- handlers

def cmd_solve(cfg):
    from . import io as qio
    from .cr import cr_solve_G
    p = _load_or_generate(cfg)
    g, report = cr_solve_G(p, backend=cfg.backend, cfg=_arithmetic(cfg),
                           max_iter=cfg.iters)
    os.makedirs(cfg.out, exist_ok=True)
    conf = cfg.to_dict()
    qio.save_matrix(os.path.join(cfg.out, "G.mtx"), g,
                    comment="config: " + json.dumps(conf, sort_keys=True))
    qio.save_json(os.path.join(cfg.out, "report.json"), report.to_dict(),
                  config=conf)
    print(f"{report.stop_reason}: {report.iterations} iterations, "
          f"residual {report.residual:.3e}, G -> "
          f"{os.path.join(cfg.out, 'G.mtx')}")
    return 0 if report.stop_reason == "converged" else 2


def _parse_grid(cfg):
    axes = {
        "size": [cfg.m],
        "band": [cfg.band],
        "backend": [cfg.backend],
        "tol": [cfg.tol],
    }
    if cfg.grid:
        for part in cfg.grid.split(";"):
            part = part.strip()
            if not part:
                continue
            key, _, values = part.partition("=")
            key = key.strip()
            if key not in axes or not values:
                raise ValueError(f"bench grid: bad axis {part!r} (expected "
                                 "size=, band=, backend= or tol= lists)")
            cast = {"size": int, "band": int, "backend": str,
                    "tol": float}[key]
            axes[key] = [cast(v.strip()) for v in values.split(",")]
    cells = [(s, b, bk, tl) for s in axes["size"] for b in axes["band"]
             for bk in axes["backend"] for tl in axes["tol"]]
    if not cells:
        raise ValueError("bench grid: empty")
    return sorted(cells)


def cmd_bench(cfg):
    from . import io as qio
    from .cr import cr_solve_G
    from .hodlr import ArithmeticConfig
    from .qbd import random_qbd
    rows = []
    for size, band, backend, tol in _parse_grid(cfg):
        try:
            p = random_qbd(size, band=band, seed=cfg.seed)
            arith = ArithmeticConfig(tol=tol) if backend == "hodlr" else None
            times = []
            for _ in range(cfg.runs):
                g, report = cr_solve_G(p, backend=backend, cfg=arith,
                                       tol=0.0, max_iter=cfg.iters)
                times.append(report.time_seconds)
            rows.append((size, band, backend, tol,
                         statistics.median(times), report.residual, "ok"))
        except Exception as exc:  # keep the sweep going, record the cell
            rows.append((size, band, backend, tol, math.nan, math.nan,
                         f"error: {exc}"))
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "bench.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# config: " + json.dumps(cfg.to_dict(), sort_keys=True)
                 + "\n")
        fh.write("size,band,backend,tol,time_seconds,residual,status\n")
        for size, band, backend, tol, secs, resid, status in rows:
            fh.write(f"{size},{band},{backend},{tol:.17g},{secs:.6f},"
                     f"{resid:.6e},{status}\n")
    print(f"{len(rows)} cells -> {path}")
    return 0


_GNUPLOT = """\
# gnuplot script for the decay profile written alongside this file
set datafile separator ","
set logscale y
set xlabel "s"
set ylabel "sigma_s"
set key outside
threshold = 2.220446049250313e-16
plot for [h=0:{steps}] "{csv}" using ($1==h?$2:1/0):3 \\
         with linespoints pointsize 0.4 title sprintf("h=%d", h), \\
     "{csv}" using ($1=={steps}?$2:1/0):4 with lines lw 2 \\
         title "envelope (rank form)", \\
     "{csv}" using ($1=={steps}?$2:1/0):5 with lines lw 2 \\
         title "envelope (tridiagonal form)", \\
     threshold with lines dashtype 2 lc "gray" title "machine precision"
"""


def cmd_decay(cfg):
    from . import analysis as an
    from . import io as qio
    from .qbd import spectral_annulus
    p = _load_or_generate(cfg)
    si = spectral_annulus(p)
    profile = an.decay_profile(p, cfg.iters, split=cfg.split,
                               backend=cfg.backend,
                               tol=cfg.tol if cfg.backend == "hodlr" else None)
    bounds = None
    delta = None
    note = None
    try:
        delta = an.delta_estimate(p, si)
        bounds = an.decay_bounds(si, p, range(cfg.iters + 1), delta=delta,
                                 L=profile.rescaled_coefficient_bound(si.theta))
    except ValueError as exc:
        note = str(exc)  # null recurrent: profile only, envelopes undefined
    os.makedirs(cfg.out, exist_ok=True)
    conf = cfg.to_dict()
    csv_path = os.path.join(cfg.out, "decay.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(an.decay_csv(profile, bounds,
                              comment="config: "
                              + json.dumps(conf, sort_keys=True)))
    gp_path = os.path.join(cfg.out, "decay.gp")
    with open(gp_path, "w", encoding="utf-8") as fh:
        fh.write(_GNUPLOT.format(steps=profile.steps,
                                 csv=os.path.basename(csv_path)))
    doc = {
        "profile": profile.to_dict(),
        "annulus": si.to_dict(),
        "threshold_counts": profile.threshold_counts(),
        "delta": None if delta is None else delta.to_dict(),
        "bounds": None if bounds is None else
        [bounds[h].to_dict() for h in sorted(bounds)],
        "note": note,
    }
    qio.save_json(os.path.join(cfg.out, "decay.json"), doc, config=conf)
    counts = doc["threshold_counts"]
    print(f"{si.chain_class}: {profile.steps} steps, max count above "
          f"machine precision {max(counts)}, profile -> {csv_path}")
    if note:
        print(f"note: {note}")
    return 0


def cmd_verify(cfg):
    from . import analysis as an
    from . import io as qio
    from .qbd import random_qbd
    report = an.lemma_oracles(seed=cfg.seed, trials=cfg.trials)
    res = an.halving_residuals(random_qbd(30, band=1, seed=cfg.seed))
    halving = {"max_residual": float(res.max()), "tolerance": 1e-10,
               "passed": bool(res.max() <= 1e-10)}
    ok = bool(report["passed"] and halving["passed"])
    os.makedirs(cfg.out, exist_ok=True)
    doc = {"lemma_suites": report, "halving_identity": halving, "passed": ok}
    path = os.path.join(cfg.out, "verify.json")
    qio.save_json(path, doc, config=cfg.to_dict())
    for suite in report["suites"]:
        print(f"{suite['name']}: {suite['violations']} violations in "
              f"{suite['trials']} trials (max ratio "
              f"{suite['max_ratio']:.3g})")
    print(f"halving identity: max residual {halving['max_residual']:.3e}")
    print(("PASS" if ok else "FAIL") + f" -> {path}")
    return 0 if ok else 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    for var in _THREAD_VARS:
        os.environ[var] = str(args.threads)
    try:
        cfg = _config_from(args)
    except ValueError as exc:
        print(f"argument error: {exc}", file=sys.stderr)
        return 1
    handler = {"solve": cmd_solve, "bench": cmd_bench,
               "decay": cmd_decay, "verify": cmd_verify}[cfg.subcommand]
    from .linalg import SingularBlockError  # after the env vars are set
    try:
        return handler(cfg)
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    except SingularBlockError as exc:
        print(f"numerical error: singular block at {exc.location}: {exc}",
              file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 1
    finally:
        sys.stdout.flush()


if __name__ == "__main__":
    sys.exit(main())
