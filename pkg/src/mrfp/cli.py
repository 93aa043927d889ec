"""Command-line entry point: ``mrfp run|compare|gen-data|inspect``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import config as cfgmod
from . import experiment
from .harness.data import DomainSpec, generate_dataset, save_dataset
from .harness.train import TrainingDiverged

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mrfp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train and evaluate one experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, help="override every seed in the config")
    r.add_argument("--iterations", type=int, help="override train.max_iter")
    r.add_argument("--out", help="override run.output_dir")
    r.add_argument("--device", default="cpu", help="device hint (only cpu is supported)")

    c = sub.add_parser("compare", help="tabulate mIoU across run reports")
    c.add_argument("reports", nargs="+")
    c.add_argument("--json", action="store_true", help="machine-readable output")

    g = sub.add_parser("gen-data", help="generate and save one synthetic domain")
    g.add_argument("domain", help="typed key-value file with a single [domain] section")
    g.add_argument("--out", required=True)
    g.add_argument("-n", type=int, default=64)
    g.add_argument("--size", type=int, nargs=2, default=(64, 64))
    g.add_argument("--seed", type=int)

    i = sub.add_parser("inspect", help="summarise a run report")
    i.add_argument("report")
    return p


def _read_domain(path, seed=None) -> DomainSpec:
    with open(path) as fh:
        text = fh.read()
    fields = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            section = line.strip("[]")
            continue
        m = cfgmod._ENTRY.match(line)
        if not m or section != "domain":
            raise cfgmod.ConfigError("expected 'key: type = value' inside [domain]", lineno)
        key, typ, value = m.groups()
        fields[key] = cfgmod._decode(value, typ, lineno, f"domain.{key}")
    if seed is not None:
        fields["seed"] = seed
    try:
        return DomainSpec(**fields)
    except (TypeError, ValueError) as exc:
        raise cfgmod.ConfigError(str(exc), key="domain") from None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "run":
            if args.device != "cpu":
                logging.warning("device %r requested; running on cpu", args.device)
            out = experiment.run(args.config, args.seed, args.iterations, args.out)
            print(out)
        elif args.command == "compare":
            table = experiment.compare([experiment.load_report(p) for p in args.reports])
            print(json.dumps(table, indent=2) if args.json else experiment.format_table(table))
        elif args.command == "gen-data":
            spec = _read_domain(args.domain, args.seed)
            save_dataset(generate_dataset(spec, args.n, tuple(args.size)), spec, args.out)
            print(args.out)
        elif args.command == "inspect":
            print(experiment.inspect(experiment.load_report(args.report)))
    except (cfgmod.ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
