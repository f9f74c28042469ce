"""Command-line interface.

    cvodcssp run --input a.pmat --algorithm adapt-cvod --k 4 --r 16 \\
        --selector deim --epsilon 1e-8 --seed 7 --report out.json
    cvodcssp generate --kind clustered --clusters 3 --dim 2 --output a.pmat
    cvodcssp verify --input a.pmat --report out.json

Exit codes: 0 success, 1 error, 2 a bound was falsified. Tolerances can be
overridden through ``CVODCSSP_TOL_<NAME>`` environment variables.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .exceptions import CSSPError, ParameterError
from .generators import KINDS, generate
from .matrix_io import save_matrix
from .numkernel import Tolerances
from .partitioner import InitKind
from .pipeline import Algorithm
from .runner import EXIT_ERROR, EXIT_OK, RunConfig, render_text, run, verify
from .selectors import SelectorSpec

log = logging.getLogger("cvodcssp")


def _selector(text: str, seed: int) -> SelectorSpec:
    name = text.partition(":")[0].strip().lower()
    if name in ("norm", "norm_sampling", "leverage", "leverage_sampling") and "seed=" not in text:
        text = f"{text}{',' if ':' in text else ':'}seed={seed}"
    return SelectorSpec.parse(text)


def _dims(text: str | None):
    if text is None:
        return None
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise ParameterError(f"--dims must be comma separated integers, got {text!r}") from None


def _emit(report, path: str | None, fmt: str) -> None:
    text = report.to_json() if fmt == "json" else render_text(report)
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")
        if fmt == "json":
            sys.stdout.write(render_text(report))


def cmd_run(args) -> int:
    config = RunConfig(
        selector=_selector(args.selector, args.seed),
        r=args.r,
        k=args.k,
        algorithm=Algorithm.parse(args.algorithm),
        input=args.input,
        generator=args.generate,
        epsilon=args.epsilon,
        max_iters=args.max_iters,
        seed=args.seed,
        dims=_dims(args.dims),
        init=InitKind(args.init),
        report=args.report,
        report_format=args.format,
        strict=args.strict,
        cur=args.cur,
        threads=args.threads,
        relative=args.relative,
    )
    report = run(config, Tolerances.from_env())
    _emit(report, args.report, args.format)
    return report.exit_code


def cmd_verify(args) -> int:
    report = verify(args.input, args.report, Tolerances.from_env())
    _emit(report, args.output, args.format)
    return report.exit_code


def cmd_generate(args) -> int:
    params = {}
    if args.kind == "lowrank_noise":
        params = {"m": args.m, "n": args.n, "true_rank": args.rank, "noise_sigma": args.noise}
    elif args.kind == "clustered":
        params = {"clusters": args.clusters, "dim": args.dim, "angle": args.angle,
                  "per_cluster": args.per_cluster, "m": args.m, "noise_sigma": args.noise}
    else:
        if args.sigma is None:
            raise ParameterError("--sigma is required for the spectrum generator")
        try:
            sigma = [float(x) for x in args.sigma.split(",")]
        except ValueError:
            raise ParameterError("--sigma must be comma separated numbers") from None
        params = {"sigma": sigma, "m": args.m, "n": args.n}
    if args.kind == "lowrank_noise" and None in (args.m, args.n, args.rank):
        raise ParameterError("lowrank_noise needs --m, --n and --rank")
    a = generate(args.kind, params, seed=args.seed)
    save_matrix(args.output, a)
    log.info("wrote %dx%d matrix to %s", a.shape[0], a.shape[1], args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvodcssp", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="partition, select columns, check bounds")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="matrix file (.csv or PMAT1 binary)")
    src.add_argument("--generate", metavar="KIND:K=V,...",
                     help="synthetic input, e.g. clustered:clusters=3,dim=2,angle=90")
    p.add_argument("--algorithm", default="cvod", help="cvod, adapt-cvod or none")
    p.add_argument("--selector", default="cpqr",
                   help="deim, cpqr, lupp, norm[:seed=S] or leverage[:seed=S,k=K]")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--dims", help="comma separated per-set dimensions (cvod only)")
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--relative", action="store_true", help="compare relative energy improvement")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--init", default="random_balanced", choices=["random_balanced", "random_uniform"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cur", action="store_true", help="also build a CUR factorization")
    p.add_argument("--strict", action="store_true", help="abort on rank-deficient projected blocks")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--report", help="report path (stdout when omitted)")
    p.add_argument("--format", default="json", choices=["json", "text"])
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="re-check bounds from a saved run report")
    p.add_argument("--input", required=True)
    p.add_argument("--report", required=True, help="saved JSON report of a previous run")
    p.add_argument("--output", help="where to write the verification report")
    p.add_argument("--format", default="json", choices=["json", "text"])
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("generate", help="write a synthetic matrix")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--rank", type=int)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--angle", type=float, default=90.0)
    p.add_argument("--per-cluster", type=int, default=10)
    p.add_argument("--sigma", help="comma separated singular values")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CSSPError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
