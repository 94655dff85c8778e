"""
Command-line front end.

    vmm-limits gig {pdf,cdf,sample,moment} --config PATH [--seed N] [--out DIR]
    vmm-limits gh {pdf,sample} --config PATH [--seed N] [--out DIR]
    vmm-limits simulate --config PATH [--seed N] [--workers K] [--out DIR]
    vmm-limits verify [--config PATH] [--seed N] [--workers K] [--list]

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numeric failure.
"""

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import acceptance, config, schema
from .convlab import ExperimentConfig, run_experiment
from .errors import BesselOverflowError, ConfigError, DomainError, MomentDivergenceError, QuadratureError
from .gig import gig_cdf, gig_moment, gig_pdf, gig_sample
from .mixtures import gh_pdf, gh_sample
from .streams import make_stream

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

NUMERIC_ERRORS = (QuadratureError, BesselOverflowError, MomentDivergenceError, ArithmeticError, DomainError)

# stream key for the sample subcommands
SAMPLE_KEY = 4


def fmt(v):
    return format(float(v), ".7g")


def _write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _emit(text, out_dir, filename):
    """Write to DIR/filename when --out is given, otherwise to standard output."""
    if out_dir is None:
        sys.stdout.write(text)
    else:
        _write_atomic(os.path.join(out_dir, filename), text)


def load_document(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    schema.validate(doc)
    return doc


def _require(params, key, command):
    if key not in params:
        raise ConfigError(f"'{command}' needs command_params.{key}")
    return params[key]


def _seed(args, doc):
    seed = args.seed if args.seed is not None else doc.get("seed")
    if seed is None:
        raise ConfigError("a master seed is required (config 'seed' or --seed)")
    return int(seed)


# -- commands -----------------------------------------------------------------------


def prepare_gig(args, doc):
    params = doc.get("command_params", {})
    p = config.gig_from_dict(_require(params, "gig", "gig"))
    action = args.action
    if action in ("pdf", "cdf"):
        x = np.asarray(_require(params, "x", f"gig {action}"), dtype=float)
        if x.ndim != 1:
            raise ConfigError("gig x must be a list of numbers")

        def run():
            values = gig_pdf(x, p) if action == "pdf" else gig_cdf(x, p)
            lines = [f"x,{action}"] + [f"{fmt(a)},{fmt(b)}" for a, b in zip(x, np.atleast_1d(values))]
            _emit("\n".join(lines) + "\n", args.out, f"gig_{action}.csv")

    elif action == "sample":
        count = _require(params, "count", "gig sample")
        seed = _seed(args, doc)

        def run():
            draws = gig_sample(p, count, make_stream(seed, SAMPLE_KEY))
            _emit("".join(f"{fmt(v)}\n" for v in draws), args.out, "gig_sample.csv")

    else:
        order = _require(params, "order", "gig moment")

        def run():
            _emit(f"{fmt(gig_moment(order, p))}\n", args.out, "gig_moment.txt")

    return run


def prepare_gh(args, doc):
    params = doc.get("command_params", {})
    p = config.gh_from_dict(_require(params, "gh", "gh"))
    if args.action == "pdf":
        x = np.asarray(_require(params, "x", "gh pdf"), dtype=float)
        if x.ndim != 2 or x.shape[1] != p.dim:
            raise ConfigError(f"gh x must be a list of {p.dim}-vectors")

        def run():
            values = np.atleast_1d(gh_pdf(x, p))
            lines = ["x,pdf"] + [f"\"{','.join(fmt(c) for c in xi)}\",{fmt(v)}" for xi, v in zip(x, values)]
            _emit("\n".join(lines) + "\n", args.out, "gh_pdf.csv")

    else:
        count = _require(params, "count", "gh sample")
        seed = _seed(args, doc)

        def run():
            draws = gh_sample(p, count, make_stream(seed, SAMPLE_KEY))
            _emit("".join(",".join(fmt(c) for c in row) + "\n" for row in draws), args.out, "gh_sample.csv")

    return run


def prepare_simulate(args, doc):
    if "experiment" not in doc:
        raise ConfigError("'simulate' needs an 'experiment' section")
    exp = ExperimentConfig.from_dict(doc["experiment"], _seed(args, doc))
    out_dir = args.out or "."

    def run():
        log = lambda line: print(line, file=sys.stderr)  # noqa: E731
        report = run_experiment(exp, workers=args.workers, log=log)
        json_text = report.to_json() + "\n"
        csv_text = report.to_csv()
        _write_atomic(os.path.join(out_dir, "report.json"), json_text)
        _write_atomic(os.path.join(out_dir, "report.csv"), csv_text)
        print(f"config fingerprint {report.fingerprint}, seed {report.seed}")
        print(f"target: {report.target['kind']}")
        print(f"{'n':>8} {'ks_proj_max':>12} {'ks_mixing':>10} {'cf_gap':>10} {'coherency':>10}")
        for r in report.rows:
            coh = "-" if r.coherency is None else fmt(r.coherency)
            print(f"{r.n:>8} {fmt(r.ks_proj_max):>12} {fmt(r.ks_mixing):>10} {fmt(r.cf_gap):>10} {coh:>10}")
        print(f"wrote {os.path.join(out_dir, 'report.json')} and report.csv")

    return run


def prepare_verify(args, doc):
    if args.list:
        return lambda: print("\n".join(f"{cid} {title}" for cid, (title, _) in acceptance.CRITERIA.items()))
    tolerances = doc.get("tolerances", {})
    unknown = set(tolerances) - set(acceptance.DEFAULT_TOLERANCES)
    if unknown:
        raise ConfigError(f"unknown tolerance names: {sorted(unknown)}")
    if args.config is not None:
        seed = _seed(args, doc)
    else:
        seed = acceptance.ACCEPTANCE_SEED if args.seed is None else args.seed
    suite = acceptance.Suite(tolerances, seed=seed, workers=args.workers)

    def run():
        results = acceptance.run_all(suite)
        failed = [r.cid for r in results if not r.passed]
        print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
        return EXIT_VERIFY if failed else EXIT_OK

    return run


def build_parser():
    parser = argparse.ArgumentParser(prog="vmm-limits", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workers=False):
        p.add_argument("--config", help="JSON configuration document")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory (default: standard output / current directory)")
        if workers:
            p.add_argument("--workers", type=int, default=1, help="worker processes (no effect on results)")

    p = sub.add_parser("gig", help="GIG density, CDF, samples and moments")
    p.add_argument("action", choices=["pdf", "cdf", "sample", "moment"])
    common(p)
    p = sub.add_parser("gh", help="GH density and samples")
    p.add_argument("action", choices=["pdf", "sample"])
    common(p)
    p = sub.add_parser("simulate", help="run a convergence experiment")
    common(p, workers=True)
    p = sub.add_parser("verify", help="run the acceptance suite")
    common(p, workers=True)
    p.add_argument("--list", action="store_true", help="list criterion identifiers and exit")
    return parser


PREPARE = {"gig": prepare_gig, "gh": prepare_gh, "simulate": prepare_simulate, "verify": prepare_verify}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command != "verify" and args.config is None:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return EXIT_CONFIG
    # everything that can be wrong with the configuration fails here,
    # before any computation or output
    try:
        doc = load_document(args.config)
        run = PREPARE[args.command](args, doc)
    except (ConfigError, DomainError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        status = run()
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if status is None else status


if __name__ == "__main__":
    sys.exit(main())
