"""Command-line entry point: ``hmflab {run,sweep,predict,equilibrium}``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .config import ConfigError, load_config
from . import experiments as ex

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hmflab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, metavar="PATH")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides [outputs] directory)")
        p.add_argument("--seed", type=_u64, metavar="U64", help="overrides [init] seed")
        p.add_argument("--threads", type=int, default=1, metavar="K",
                       help="parallel runs for sweeps (0 = all cores)")

    common(sub.add_parser("run", help="integrate one trajectory and write its series"))
    common(sub.add_parser("sweep", help="scaling sweep over N or delta"))
    common(sub.add_parser("predict", help="analytic escape curve"))
    p = sub.add_parser("equilibrium", help="print the canonical solution for beta (and N)")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--N", type=int)
    p.add_argument("--derivative", choices=("partial", "total"), default="partial")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "equilibrium":
        try:
            print(json.dumps(ex._jsonable(ex.cmd_equilibrium(args.beta, args.N, args.derivative)),
                             indent=2, sort_keys=True))
        except (ValueError, ArithmeticError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.out:
            cfg = replace(cfg, out_dir=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "run":
            art = ex.cmd_run(cfg)
            s = art.summary
            print(f"wrote {art.out_dir}: {s.n_steps} steps, {s.wall_seconds:.1f} s")
        elif args.command == "sweep":
            rep = ex.cmd_sweep(cfg, threads=ex.worker_count(args.threads))
            print(f"wrote {cfg.out_dir}/sweep.json" + (" (partial data)" if rep["partial"] else ""))
        else:
            pred = ex.cmd_predict(cfg)
            print(f"wrote {cfg.out_dir}/prediction.csv: lam={pred.lam:.6g} D={pred.D:.6g}")
    except (ValueError, ArithmeticError, FloatingPointError, RuntimeError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
