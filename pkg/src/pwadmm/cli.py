"""Command line entry point.

    pwadmm run <spec-file | preset> [--out DIR] [--jobs K]
    pwadmm summarize <DIR>
    pwadmm presets [--show NAME]

Exit codes: 0 success, 1 spec error, 2 runtime failure. The default output
directory is ``$PWADMM_OUT`` or ``./runs``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from pwadmm import experiment

EXIT_OK, EXIT_SPEC, EXIT_RUNTIME = 0, 1, 2
OUT_ENV = "PWADMM_OUT"


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pwadmm", description="Parallel random-walk ADMM experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec or a named preset")
    r.add_argument("spec", help="path to an INI spec file, or a preset name")
    r.add_argument("--out", default=None,
                   help=f"output directory (default: ${OUT_ENV}/<name> or ./runs/<name>)")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    s = sub.add_parser("summarize", help="rebuild summary.csv from a directory of traces")
    s.add_argument("directory")

    pr = sub.add_parser("presets", help="list figure presets")
    pr.add_argument("--show", metavar="NAME", help="print the spec text of one preset")
    return p


def _load(spec_arg: str) -> experiment.ExperimentSpec:
    path = Path(spec_arg)
    if path.is_file():
        return experiment.load_spec(path)
    if spec_arg in experiment.PRESETS:
        return experiment.parse_spec(experiment.PRESETS[spec_arg], source=f"preset:{spec_arg}")
    raise experiment.SpecError("no such spec file or preset", None, spec_arg)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)

    if args.command == "presets":
        if args.show:
            if args.show not in experiment.PRESETS:
                print(f"unknown preset {args.show!r}", file=sys.stderr)
                return EXIT_SPEC
            sys.stdout.write(experiment.PRESETS[args.show])
            return EXIT_OK
        for name in experiment.PRESETS:
            print(f"{name}\t{experiment.preset_description(name)}")
        return EXIT_OK

    if args.command == "summarize":
        directory = Path(args.directory)
        if not directory.is_dir():
            print(f"{directory}: not a directory", file=sys.stderr)
            return EXIT_RUNTIME
        print(experiment.summarize(directory))
        return EXIT_OK

    try:
        spec = _load(args.spec)
    except experiment.SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    if args.jobs < 1:
        print("--jobs must be at least 1", file=sys.stderr)
        return EXIT_SPEC
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV) or "runs") / spec.name
    try:
        summary = experiment.run_experiment(spec, out, jobs=args.jobs)
    except Exception as exc:  # noqa: BLE001
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
