"""Command-line entry point ``mfident``.

Every verb reads a config (``--config``, or a built-in ``--example``), writes
its CSV artifacts to ``--out`` and finishes with ``manifest.json``.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import EXAMPLES, ExperimentConfig, example_config
from .experiment import Pipeline, StageError, run_experiment
from .grid import InvalidInputError


def _verb_solve(p: Pipeline):
    p.write_data()


def _verb_assemble(p: Pipeline):
    p.write_measure()
    p.write_system()


def _verb_estimate(p: Pipeline):
    p.write_system()
    p.write_estimates()
    p.write_recovery()


def _verb_spectra(p: Pipeline):
    p.write_spectra()


def _verb_picard(p: Pipeline):
    p.write_picard()


def _verb_sweep(p: Pipeline):
    p.write_sweep()


VERBS = {
    "solve": (_verb_solve, "solve the mean-field equation and write data.csv"),
    "assemble": (_verb_assemble, "build rho and the normal system (A, b, P)"),
    "estimate": (_verb_estimate, "estimate the kernel (plain, Tikhonov, TSVD) and score it"),
    "spectra": (_verb_spectra, "weighted and unweighted eigenvalues"),
    "picard": (_verb_picard, "discrete Picard tables for both SVDs"),
    "sweep": (_verb_sweep, "smallest eigenvalue of A over the basis-size sweep"),
    "report": (None, "full pipeline with SVD comparison report"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfident", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True, metavar="VERB")
    for name, (_, help_) in VERBS.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="INI experiment config")
        sp.add_argument("--example", choices=sorted(EXAMPLES), default="cubic",
                        help="built-in defaults used when --config is absent")
        sp.add_argument("--out", help="output directory (default: [run] output)")
        sp.add_argument("--seed", type=int, help="override [run] seed")
        sp.add_argument("--data", help="field CSV (t,x,u) used instead of solving")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = example_config(args.example)
    return cfg.with_overrides(seed=args.seed, data=args.data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except (InvalidInputError, OSError) as exc:
        print(f"mfident: error [config]: {exc}", file=sys.stderr)
        return 2
    try:
        if args.verb == "report":
            manifest = run_experiment(cfg, args.out)
            n = len(manifest["artifacts"])
        else:
            pipe = Pipeline(cfg, args.out)
            VERBS[args.verb][0](pipe)
            pipe.write_manifest()
            n = len(pipe.written)
    except StageError as exc:
        print(f"mfident: error {exc}", file=sys.stderr)
        return 1
    out = args.out or cfg.resolve(cfg.output)
    print(f"{args.verb}: wrote {n} artifacts to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
