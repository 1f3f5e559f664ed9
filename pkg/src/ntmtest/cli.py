"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bitstream import read_file, write_file
from .errors import DataError, NumericError, NtmError
from .experiments import (
    ExperimentConfig,
    dumps,
    run_battery,
    run_joint_histogram,
    run_rejection_experiment,
    run_rejection_histogram,
)
from .generators import GeneratorSpec, generate, seed_for_index
from .jointdist import JointParams, cell_grid, joint_cdf_series
from .matching import ShortBlockWarning, run_test
from .templates import (
    Template,
    correlation,
    correlation_exact,
    correlation_matrix,
    default_battery,
    enumerate_aperiodic,
)
from .whitening import WhiteningTransform, build_transform, eigendecompose, rank_analysis

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _resolve_templates(spec: str | None, default: str) -> list[Template]:
    spec = spec or default
    if spec == "default":
        return default_battery()
    if spec == "all":
        return enumerate_aperiodic(9)
    if spec.startswith("@"):
        text = Path(spec[1:]).read_text()
        return [Template(p) for p in text.replace(",", " ").split()]
    return [Template(p) for p in spec.split(",") if p]


def _read_input(args):
    seq = read_file(args.input, args.format, args.bit_order)
    M = len(seq) // args.blocks
    dropped = len(seq) - args.blocks * M
    if dropped and M:
        print(f"note: {dropped} trailing bit(s) beyond N*M = {args.blocks * M} discarded", file=sys.stderr)
    return seq


# --- gen ---------------------------------------------------------------------------

def cmd_gen(args):
    if args.base_seed is not None:
        spec = seed_for_index(args.base_seed, args.index, args.generator)
    elif args.generator == "mt19937":
        spec = GeneratorSpec("mt19937", seed=args.seed if args.seed is not None else 5489)
    else:
        if args.key is None:
            raise UsageError("aes128_ctr needs --key (or --base-seed)")
        spec = GeneratorSpec("aes128_ctr", key=bytes.fromhex(args.key), counter=int(args.counter or "0", 16))
    write_file(generate(spec, args.bits), args.out, args.out_format, args.bit_order)
    print(json.dumps({"spec": spec.to_dict(), "bits": args.bits, "out": args.out}), file=sys.stderr)


# --- templates ----------------------------------------------------------------

def cmd_templates_enumerate(args):
    ts = enumerate_aperiodic(args.m)
    if args.output_format == "json":
        _emit(json.dumps([t.pattern for t in ts]), args.out)
    else:
        _emit("\n".join(t.pattern for t in ts), args.out)


def cmd_templates_rho(args):
    r = correlation_exact(args.t1, args.t2)
    _emit(json.dumps({"t1": args.t1, "t2": args.t2, "rho": float(r), "exact": f"{r.numerator}/{r.denominator}"}), args.out)


def _matrix_text(cm, fmt: str) -> str:
    names = [t.pattern for t in cm.templates]
    if fmt == "json":
        return json.dumps({"templates": names, "matrix": cm.entries.tolist()})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + names)
    for name, row in zip(names, cm.entries):
        w.writerow([name] + [repr(float(x)) for x in row])
    return buf.getvalue()


def cmd_templates_matrix(args):
    cm = correlation_matrix(_resolve_templates(args.templates, "all"))
    _emit(_matrix_text(cm, args.output_format), args.out)


# --- test / battery ---------------------------------------------------------------

def cmd_test_run(args):
    seq = _read_input(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore" if args.quiet else "default", ShortBlockWarning)
        outcome = run_test(seq, args.template, args.blocks)
    _emit(json.dumps(outcome.to_dict()), args.out)


def cmd_battery_run(args):
    seq = _read_input(args)
    transform = None
    if args.transform:
        transform = WhiteningTransform.from_json(Path(args.transform).read_text())
    templates = _resolve_templates(args.templates, "default") if args.templates else None
    report = run_battery(seq, args.blocks, templates, args.orthogonalize or transform is not None,
                         args.alpha, transform)
    _emit(dumps(report), args.out)


# --- whitening ---------------------------------------------------------------------

def cmd_whitening_build(args):
    ts = _resolve_templates(args.templates, "default")
    removed = [t for t in enumerate_aperiodic(ts[0].m) if t not in set(ts)] if ts[0].m == 9 else []
    transform = build_transform(correlation_matrix(ts), args.tol, removed)
    _emit(transform.to_json(), args.out)
    print(f"transform sha256 {transform.digest()}", file=sys.stderr)


def cmd_whitening_inspect(args):
    if args.transform:
        tr = WhiteningTransform.from_json(Path(args.transform).read_text())
        ts = list(tr.templates)
    else:
        tr = None
        ts = _resolve_templates(args.templates, "all")
    cm = correlation_matrix(ts)
    dec = eigendecompose(cm)
    rank, groups = rank_analysis(cm, args.tol)
    info = {
        "templates": len(ts),
        "rank": rank,
        "tolerance": args.tol,
        "eigenvalues": dec.eigenvalues.tolist(),
        "dependent_groups": [[t.pattern for t in g] for g in groups],
    }
    if tr is not None:
        F = tr.forward
        info["transform_sha256"] = tr.digest()
        info["removed"] = [t.pattern for t in tr.removed]
        info["whitening_error"] = float(np.max(np.abs(F @ cm.entries @ F.T - np.eye(len(ts)))))
    _emit(json.dumps(info, indent=2), args.out)


# --- jointdist ---------------------------------------------------------------------

def cmd_jointdist_eval(args):
    params = JointParams(args.N, args.rho, args.eps, args.max_terms)
    F, terms = joint_cdf_series(params, args.x, args.y)
    _emit(json.dumps({"N": args.N, "rho": args.rho, "X": args.x, "Y": args.y, "F": F, "terms_used": terms}), args.out)


def cmd_jointdist_grid(args):
    rho = args.rho if args.rho is not None else correlation(args.t1, args.t2)
    grid = cell_grid(JointParams(args.N, rho, args.eps, args.max_terms), args.G)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p1_lo", "p1_hi", "p2_lo", "p2_hi", "probability"])
    G = args.G
    for i in range(G):
        for j in range(G):
            w.writerow([i / G, (i + 1) / G, j / G, (j + 1) / G, repr(float(grid[i, j]))])
    _emit(buf.getvalue(), args.out)


# --- experiments ---------------------------------------------------------------------

_CONFIG_FLAGS = ("generator", "K", "n", "N", "G", "alpha", "base_seed", "workers", "batch")


def _experiment_config(args) -> ExperimentConfig:
    """Defaults, overridden by the config file, overridden by flags."""
    values = {}
    if args.config:
        values.update(json.loads(Path(args.config).read_text()))
    for name in _CONFIG_FLAGS:
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    if getattr(args, "templates", None):
        values["templates"] = [t.pattern for t in _resolve_templates(args.templates, "default")]
    return ExperimentConfig.from_mapping(values)


def _write_csv(path: str, matrix) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(np.asarray(matrix).tolist())


def cmd_experiment_fig1(args):
    config = _experiment_config(args)
    report = run_joint_histogram(config, args.t1, args.t2)
    if args.csv_prefix:
        _write_csv(f"{args.csv_prefix}_empirical.csv", report.counts)
        _write_csv(f"{args.csv_prefix}_theory.csv", report.expected)
    _emit(dumps(report.to_dict()), args.out)


def cmd_experiment_fig3(args):
    config = _experiment_config(args)
    if args.mode == "both":
        plain, orth = run_rejection_experiment(config)
        out = {"plain": plain.to_dict(), "orthogonalized": orth.to_dict()}
    else:
        out = run_rejection_histogram(config, args.mode == "orthogonalized").to_dict()
    _emit(dumps(out), args.out)


# --- parser --------------------------------------------------------------------------

def _add_input(p):
    p.add_argument("input", help="bit file")
    p.add_argument("--format", choices=("ascii", "raw"), default="ascii", help="input file format")
    p.add_argument("--bit-order", choices=("msb_first", "lsb_first"), default="msb_first")
    p.add_argument("-N", "--blocks", type=int, default=8, help="number of blocks N (default 8)")


def _add_experiment(p):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--generator", choices=("mt19937", "aes128_ctr"))
    p.add_argument("-K", type=int, dest="K", help="number of sequences")
    p.add_argument("-n", type=int, dest="n", help="bits per sequence")
    p.add_argument("-N", type=int, dest="N", help="blocks per sequence")
    p.add_argument("-G", type=int, dest="G", help="histogram grid resolution")
    p.add_argument("--alpha", type=float)
    p.add_argument("--base-seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("-o", "--out")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ntmtest", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write generator output to a bit file")
    p.add_argument("--generator", choices=("mt19937", "aes128_ctr"), default="mt19937")
    p.add_argument("--seed", type=int, help="MT19937 seed (default 5489)")
    p.add_argument("--key", help="AES-128 key, 32 hex digits")
    p.add_argument("--counter", help="initial AES counter block, hex")
    p.add_argument("--base-seed", type=int, help="derive the generator from (base seed, index)")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--out-format", choices=("ascii", "raw"), default="raw")
    p.add_argument("--bit-order", choices=("msb_first", "lsb_first"), default="msb_first")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    tp = sub.add_parser("templates", help="template utilities").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = tp.add_parser("enumerate", help="list aperiodic templates")
    p.add_argument("-m", type=int, default=9)
    p.add_argument("--output-format", choices=("text", "json"), default="text")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_templates_enumerate)
    p = tp.add_parser("rho", help="correlation between two templates")
    p.add_argument("t1")
    p.add_argument("t2")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_templates_rho)
    p = tp.add_parser("matrix", help="correlation matrix")
    p.add_argument("--templates", help="'all' (148), 'default' (145), a comma list, or @file")
    p.add_argument("--output-format", choices=("csv", "json"), default="csv")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_templates_matrix)

    p = sub.add_parser("test", help="single-template test").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = p.add_parser("run", help="run the test on a bit file")
    _add_input(p)
    p.add_argument("-t", "--template", default="000000001")
    p.add_argument("-q", "--quiet", action="store_true", help="silence the short-block warning")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_test_run)

    p = sub.add_parser("battery", help="template battery").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = p.add_parser("run", help="run a battery on a bit file")
    _add_input(p)
    p.add_argument("--templates", help="'all', 'default', a comma list, or @file")
    p.add_argument("--orthogonalize", action="store_true")
    p.add_argument("--transform", help="whitening transform JSON (implies --orthogonalize)")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_battery_run)

    wp = sub.add_parser("whitening", help="whitening transforms").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = wp.add_parser("build", help="build and serialize a transform")
    p.add_argument("--templates", help="'default' (145), a comma list, or @file")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_whitening_build)
    p = wp.add_parser("inspect", help="eigenvalues, rank and dependent groups")
    p.add_argument("transform", nargs="?", help="transform JSON to check")
    p.add_argument("--templates", help="'all' (148), 'default', a comma list, or @file")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_whitening_inspect)

    jp = sub.add_parser("jointdist", help="joint distribution of two p-values").add_subparsers(dest="action", required=True, parser_class=_Parser)
    for name, func in (("eval", cmd_jointdist_eval), ("grid", cmd_jointdist_grid)):
        p = jp.add_parser(name)
        p.add_argument("-N", type=int, default=8)
        p.add_argument("--eps", type=float, default=1e-12)
        p.add_argument("--max-terms", type=int, default=10000)
        p.add_argument("-o", "--out")
        p.set_defaults(func=func)
        if name == "eval":
            p.add_argument("--rho", type=float, required=True)
            p.add_argument("-x", type=float, required=True)
            p.add_argument("-y", type=float, required=True)
        else:
            p.add_argument("--rho", type=float)
            p.add_argument("--t1", default="001010101")
            p.add_argument("--t2", default="010101011")
            p.add_argument("-G", type=int, default=10)

    ep = sub.add_parser("experiment", help="scaled-down statistical experiments").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = ep.add_parser("fig1", help="joint p-value histogram for a template pair")
    p.add_argument("--t1", default="001010101")
    p.add_argument("--t2", default="010101011")
    p.add_argument("--csv-prefix", help="also write <prefix>_empirical.csv and <prefix>_theory.csv")
    _add_experiment(p)
    p.set_defaults(func=cmd_experiment_fig1)
    p = ep.add_parser("fig3", help="rejection-count histogram of the battery")
    p.add_argument("--mode", choices=("plain", "orthogonalized", "both"), default="both")
    p.add_argument("--templates", help="'default' (145), a comma list, or @file")
    _add_experiment(p)
    p.set_defaults(func=cmd_experiment_fig3)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"ntmtest: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, UnicodeDecodeError) as exc:
        print(f"ntmtest: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"ntmtest: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (NtmError, ValueError) as exc:
        print(f"ntmtest: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
