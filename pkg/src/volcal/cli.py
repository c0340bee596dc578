"""Command line interface: ``volcal <subcommand> ...``.

Tables go to stdout only when ``--out -`` is given; diagnostics go to stderr.
Exit status is 0 on success, 1 when ``verify-bound`` finds a violation and 2
on invalid input.
"""

import argparse
import logging
import sys

from . import __version__, pipeline
from .exceptions import VolcalError

logger = logging.getLogger("volcal")


def _common(parser, out_help="output path, '-' for stdout"):
    parser.add_argument("--bins", type=int, default=20, help="number of ECE bins (default 20)")
    parser.add_argument("--seed", type=int, default=None, help="random seed")
    parser.add_argument("--out", default="-", help=out_help)
    parser.add_argument("--jobs", type=int, default=1, help="parallel subject workers")
    parser.add_argument("--threshold", type=float, default=0.5, help="Dice threshold")


def build_parser():
    parser = argparse.ArgumentParser(prog="volcal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="per-subject ECE, bias, volumes and Dice")
    p.add_argument("manifest")
    p.add_argument("--curves-dir", default=None, help="write per-subject reliability curves here")
    _common(p)

    p = sub.add_parser("verify-bound", help="check exact CE >= binned ECE >= |bias|")
    p.add_argument("manifest")
    _common(p)

    p = sub.add_parser("calibrate", help="fit Platt scaling and recalibrate a cohort")
    p.add_argument("train_manifest")
    p.add_argument("apply_manifest")
    p.add_argument("--input-kind", choices=["auto", "probability", "logit"], default="auto",
                   help="how prediction containers are interpreted (checked against headers)")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--label-smoothing", action="store_true")
    _common(p, out_help="output directory")

    p = sub.add_parser("correlate", help="Pearson, Spearman and Kendall between report columns")
    p.add_argument("report")
    p.add_argument("x")
    p.add_argument("y")
    p.add_argument("--group-tag", default=None, help="group by key=value tags with this key")
    p.add_argument("--manifest", default=None, help="manifest supplying subject tags")
    _common(p)

    p = sub.add_parser("pareto", help="Pareto front over model reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--objectives", default="ece,abs_bias")
    p.add_argument("--directions", default=None, help="comma list of min/max (default all min)")
    _common(p)

    p = sub.add_parser("simulate", help="write a synthetic phantom cohort")
    p.add_argument("spec_file")
    _common(p, out_help="output directory")

    p = sub.add_parser("counterexample", help="write the averaging counterexample")
    _common(p, out_help="output directory")

    p = sub.add_parser("curve", help="reliability curve of one prediction")
    p.add_argument("prob")
    p.add_argument("label")
    p.add_argument("--mask", default=None)
    _common(p)
    return parser


def _emit(text, out):
    if out == "-":
        sys.stdout.write(text)


def _require_dir(args):
    if args.out == "-":
        raise VolcalError(f"{args.command} needs --out DIRECTORY")
    return args.out


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    out_file = None if args.out == "-" else args.out
    try:
        if args.command == "analyze":
            text = pipeline.run_analyze(
                args.manifest, args.bins, args.threshold, out_file, args.curves_dir, args.jobs
            )
            _emit(text, args.out)
        elif args.command == "verify-bound":
            ok, text = pipeline.run_verify_bound(args.manifest, args.bins, out_file, args.jobs)
            _emit(text, args.out)
            return 0 if ok else 1
        elif args.command == "calibrate":
            params = pipeline.run_calibrate(
                args.train_manifest, args.apply_manifest, _require_dir(args), args.input_kind,
                args.max_iter, args.tol, args.label_smoothing,
            )
            logger.info("fitted %s", params)
        elif args.command == "correlate":
            text = pipeline.run_correlate(
                args.report, args.x, args.y, args.group_tag, args.manifest, out_file
            )
            _emit(text, args.out)
        elif args.command == "pareto":
            objectives = args.objectives.split(",")
            directions = args.directions.split(",") if args.directions else None
            text = pipeline.run_pareto(args.reports, objectives, directions, out_file)
            _emit(text, args.out)
        elif args.command == "simulate":
            pipeline.run_simulate(args.spec_file, _require_dir(args), args.seed)
        elif args.command == "counterexample":
            pipeline.run_counterexample(_require_dir(args), args.bins)
        elif args.command == "curve":
            text = pipeline.run_curve(args.prob, args.label, args.mask, args.bins, out_file)
            _emit(text, args.out)
    except (VolcalError, ValueError, OSError) as exc:
        print(f"volcal {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
