"""Command-line interface.

Subcommands: ``learn``, ``impute``, ``sample``, ``inject``, ``sax``, ``bench``
and ``wilcoxon``. Data goes to files (or standard output where noted), logs
and the resolved configuration go to standard error.

Exit codes: 0 success, 2 invalid input or arguments, 3 enumeration cap
exceeded, 4 internal error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import formats
from .bench import (
    DEFAULT_LEVELS,
    BenchConfig,
    MissingnessSpec,
    SyntheticSpec,
    inject_missing,
    run_benchmark,
    sample_dataset,
    write_bench_outputs,
)
from .discretize import SaxConfig, sax_discretize
from .errors import DatasetError, EnumerationCapError
from .imputation import METHODS, count_errors, impute
from .learning import LearnConfig, learn_dbn, random_dbn
from .model import AttributeSpec, Dataset
from .stats import wilcoxon_signed_rank

log = logging.getLogger("dbnimpute")

EXIT_OK, EXIT_INVALID, EXIT_CAP, EXIT_INTERNAL = 0, 2, 3, 4

DEFAULT_BENCH_VARS = (3, 5, 10)
DEFAULT_BENCH_SUBJECTS = (20, 100, 500)


# -- argument helpers -------------------------------------------------------------

def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not a fraction in [0, 1]")
    return v


def _fractions(text: str) -> tuple[float, ...]:
    return tuple(_fraction(x) for x in text.split(",") if x)


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated integer list")


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} must be >= 1")
    return v


def _log_base(text: str) -> float:
    if text == "2":
        return 2.0
    if text == "e":
        return float(np.e)
    raise argparse.ArgumentTypeError("log base must be '2' or 'e'")


def _add_learn_flags(p: argparse.ArgumentParser, seed: bool = True) -> None:
    g = p.add_argument_group("learning")
    d = LearnConfig()
    g.add_argument("--max-inter-parents", type=int, default=d.max_inter_parents, metavar="P",
                   help="inter-slice parents per node (default: %(default)s)")
    g.add_argument("--em-max-iters", type=_positive, default=d.em_max_iters,
                   help="parameter EM iterations per SEM step (default: %(default)s)")
    g.add_argument("--em-rel-tol", type=float, default=d.em_rel_tol,
                   help="relative improvement below which EM/SEM stop (default: %(default)s)")
    g.add_argument("--sem-max-iters", type=_positive, default=d.sem_max_iters,
                   help="Structural EM iterations (default: %(default)s)")
    g.add_argument("--alpha", type=float, default=d.smoothing_alpha,
                   help="Dirichlet smoothing pseudo-count per CPT cell (default: %(default)s)")
    g.add_argument("--enumeration-cap", type=_positive, default=d.enumeration_cap,
                   help="max joint completions per window (default: %(default)s)")
    g.add_argument("--score-log-base", type=_log_base, default=d.penalty_log_base,
                   metavar="{2,e}", help="log base of the MDL penalty (default: 2)")
    g.add_argument("--init", choices=("random", "empty"), default=d.init_structure,
                   help="initial structure for Structural EM (default: %(default)s)")
    g.add_argument("--no-parameter-em", action="store_true",
                   help="skip the inner parameter EM loop of Structural EM")
    if seed:
        g.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")


def _learn_config(args, seed=None) -> LearnConfig:
    return LearnConfig(
        max_inter_parents=args.max_inter_parents,
        em_max_iters=args.em_max_iters,
        em_rel_tol=args.em_rel_tol,
        sem_max_iters=args.sem_max_iters,
        smoothing_alpha=args.alpha,
        seed=args.seed if seed is None else seed,
        enumeration_cap=args.enumeration_cap,
        penalty_log_base=args.score_log_base,
        init_structure=args.init,
        parameter_em=not args.no_parameter_em,
    )


def _add_domain_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alphabet", metavar="L1,L2,...",
                   help="value labels shared by every attribute, in index order "
                        "(default: the sorted observed symbols of each column)")


def _read_input(path, args) -> Dataset:
    attributes = None
    if getattr(args, "alphabet", None):
        labels = tuple(x for x in args.alphabet.split(",") if x)
        with open(path, encoding="utf-8", newline="") as fh:
            header = next(csv.reader(fh), None) or []
        names = list(dict.fromkeys(h.rsplit("__", 1)[0] for h in header[1:]))
        attributes = [AttributeSpec(name, labels) for name in names]
    return formats.read_dataset(path, attributes)


def _log_config(command: str, config: dict) -> None:
    def plain(v):
        if dataclasses.is_dataclass(v):
            return dataclasses.asdict(v)
        if isinstance(v, Path):
            return str(v)
        if isinstance(v, tuple):
            return list(v)
        return v

    skip = {"func", "command", "verbose", "quiet"}
    resolved = {k: plain(v) for k, v in config.items() if k not in skip}
    log.info("config %s %s", command, json.dumps(resolved, sort_keys=True, default=str))


# -- subcommands ----------------------------------------------------------------

def cmd_learn(args) -> int:
    dataset = _read_input(args.input, args)
    config = _learn_config(args)
    _log_config("learn", {"input": args.input, "out": args.out, "trace": args.trace,
                          "learn": config})
    result = learn_dbn(dataset, config)
    formats.write_dbn(result.dbn, args.out)
    trace_path = args.trace or Path(str(args.out) + ".trace.csv")
    with open(trace_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "log_likelihood", "mdl"])
        for step in result.trace:
            w.writerow([step.iteration, repr(step.log_likelihood), repr(step.score)])
    if args.figure:
        from .plotting import plot_sem_trace

        plot_sem_trace(result.trace, args.figure)
    log.info("learned DBN after %d SEM iteration(s), score %.6f",
             len(result.trace), result.trace[-1].score)
    return EXIT_OK


def cmd_impute(args) -> int:
    dataset = _read_input(args.input, args)
    config = _learn_config(args)
    _log_config("impute", {"input": args.input, "out": args.out, "method": args.method,
                           "original": args.original, "learn": config})
    original = None
    if args.original:
        original = formats.read_dataset(args.original, dataset.attributes)
    result = impute(dataset, args.method, config)
    formats.write_dataset(result.dataset, args.out)
    if args.model_out and result.model is not None:
        formats.write_dbn(result.model, args.model_out)
    diagnostics = dict(result.diagnostics)
    if original is not None:
        diagnostics["errors"] = count_errors(original, result.dataset, result.imputed)
        print(f"errors,{diagnostics['errors']}", file=sys.stderr)
    provenance = {
        "method": result.method,
        "seed": config.seed,
        "diagnostics": diagnostics,
        "imputed_cells": [
            [dataset.subject_ids[s], int(t), dataset.attributes[i].name]
            for s, t, i in np.argwhere(result.imputed)
        ],
    }
    side = args.provenance or Path(str(args.out) + ".provenance.json")
    with open(side, "w", encoding="utf-8") as fh:
        json.dump(provenance, fh, indent=1, sort_keys=True, default=int)
        fh.write("\n")
    return EXIT_OK


def cmd_sample(args) -> int:
    _log_config("sample", vars(args))
    if args.dbn:
        dbn = formats.read_dbn(args.dbn)
    else:
        dbn = random_dbn(args.n_vars, args.cardinality, args.max_inter_parents, args.seed)
    dataset = sample_dataset(dbn, args.num_subjects, args.num_slices, args.seed)
    formats.write_dataset(dataset, args.out)
    if args.dbn_out:
        formats.write_dbn(dbn, args.dbn_out)
    return EXIT_OK


def cmd_inject(args) -> int:
    spec = MissingnessSpec(args.pct_subjects, args.pct_cells, args.seed)
    _log_config("inject", {"input": args.input, "out": args.out, "mask": args.mask,
                           "missingness": spec})
    dataset = _read_input(args.input, args)
    masked, mask = inject_missing(dataset, spec)
    formats.write_dataset(masked, args.out)
    if args.mask:
        formats.write_mask(dataset, mask, args.mask)
    log.info("masked %d cell(s)", int(mask.sum()))
    return EXIT_OK


def cmd_sax(args) -> int:
    config = SaxConfig(args.alphabet_size, args.max_length, args.truncate)
    _log_config("sax", {"input": args.input, "out": args.out, "sax": config})
    names, ids, values = formats.parse_real_series(Path(args.input))
    result = sax_discretize(list(values), config, names, ids)
    formats.write_dataset(result.dataset, args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    learn = _learn_config(args, seed=args.seed)
    seeds = tuple(range(args.seed, args.seed + args.num_seeds))
    datasets = [(Path(p).stem, _read_input(p, args)) for p in args.dataset]
    if datasets and not args.synthetic:
        synthetic = []
    else:
        synthetic = [
            SyntheticSpec(n, args.cardinality, N, args.num_slices, args.max_inter_parents)
            for n in args.n_vars for N in args.num_subjects
        ]
    config = BenchConfig(
        synthetic=synthetic, datasets=datasets, pct_subjects=args.pct_subjects,
        pct_cells=args.pct_cells, methods=args.methods, seeds=seeds, learn=learn,
        threads=args.threads,
    )
    _log_config("bench", {
        "out_dir": args.out_dir, "synthetic": [dataclasses.asdict(s) for s in synthetic],
        "datasets": [name for name, _ in datasets], "pct_subjects": args.pct_subjects,
        "pct_cells": args.pct_cells, "methods": args.methods, "seeds": seeds,
        "learn": learn, "threads": args.threads,
    })
    report = run_benchmark(config)
    paths = write_bench_outputs(report, args.out_dir, figures=not args.no_figures)
    for kind, path in paths.items():
        log.info("wrote %s: %s", kind, path)
    failed = sum(r.errors is None for r in report.records)
    if failed:
        log.warning("%d method run(s) failed; see the empty errors cells", failed)
    return EXIT_OK


def _read_pairs(path) -> list[tuple[float, float]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DatasetError(f"{path}: empty pairs file")
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]  # header
    pairs = []
    for r in rows:
        if len(r) != 2:
            raise DatasetError(f"{path}: expected two columns, got {r}")
        try:
            pairs.append((float(r[0]), float(r[1])))
        except ValueError:
            raise DatasetError(f"{path}: non-numeric pair {r}") from None
    return pairs


def cmd_wilcoxon(args) -> int:
    _log_config("wilcoxon", vars(args))
    pairs = _read_pairs(args.input)
    try:
        res = wilcoxon_signed_rank(pairs, exact_max_n=args.exact_max_n)
    except ValueError as exc:
        raise DatasetError(str(exc)) from None
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["w_plus", "w_minus", "statistic", "p_value", "n", "method"])
        w.writerow([repr(res.w_plus), repr(res.w_minus), repr(res.statistic),
                    repr(res.p_value), res.n, res.method])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def _add_common_flags(p: argparse.ArgumentParser, top_level: bool) -> None:
    # Accepted before and after the subcommand. The subcommand copies have no
    # defaults (argument_default=SUPPRESS) so they never mask a top-level value.
    v_default = {"default": 0} if top_level else {}
    t_default = {"default": os.cpu_count() or 1} if top_level else {}
    p.add_argument("-v", "--verbose", action="count", help="debug logging on stderr",
                   **v_default)
    p.add_argument("-q", "--quiet", action="store_true",
                   help="only warnings and errors on stderr")
    p.add_argument("--threads", type=_positive,
                   help="worker processes for bench (default: available cores)", **t_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dbnimpute",
        description="Categorical time-series imputation with tree-augmented DBNs "
                    "learned by Structural EM.",
        epilog="exit codes: 0 ok, 2 invalid input, 3 enumeration cap exceeded, 4 internal error",
    )
    _add_common_flags(parser, top_level=True)
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    _add_common_flags(common, top_level=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("learn", parents=[common], help="learn a DBN with Structural EM")
    p.add_argument("input", help="dataset CSV")
    p.add_argument("-o", "--out", required=True, help="output DBN file")
    p.add_argument("--trace", help="score trace CSV (default: OUT.trace.csv)")
    p.add_argument("--figure", help="also plot the SEM score trace to this image file")
    _add_domain_flag(p)
    _add_learn_flags(p)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("impute", parents=[common], help="fill missing cells")
    p.add_argument("input", help="dataset CSV with missing cells")
    p.add_argument("-o", "--out", required=True, help="completed dataset CSV")
    p.add_argument("--method", choices=METHODS, default="dbn",
                   help="imputation method (default: %(default)s)")
    p.add_argument("--provenance", help="sidecar JSON (default: OUT.provenance.json)")
    p.add_argument("--model-out", help="write the fitted DBN here (dbn and em methods)")
    p.add_argument("--original", help="complete dataset; report errors on the imputed cells")
    _add_domain_flag(p)
    _add_learn_flags(p)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("sample", parents=[common],
                       help="sample a dataset from a DBN (given or random)")
    p.add_argument("-o", "--out", required=True, help="output dataset CSV")
    p.add_argument("--dbn", help="DBN file to sample from (default: a random tDBN)")
    p.add_argument("--dbn-out", help="write the generating DBN here")
    p.add_argument("--n-vars", type=_positive, default=5,
                   help="random DBN: attributes (default: 5)")
    p.add_argument("--cardinality", type=int, default=2,
                   help="random DBN: values per attribute (default: 2)")
    p.add_argument("--max-inter-parents", type=int, default=1,
                   help="random DBN: inter-slice parents per node (default: 1)")
    p.add_argument("--num-subjects", type=_positive, default=100, help="default: 100")
    p.add_argument("--num-slices", type=int, default=11, help="slices T+1 (default: 11)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("inject", parents=[common], help="hide cells of a complete dataset (MCAR)")
    p.add_argument("input", help="complete dataset CSV")
    p.add_argument("-o", "--out", required=True, help="masked dataset CSV")
    p.add_argument("--pct-subjects", type=_fraction, required=True,
                   help="fraction of subjects with missing cells")
    p.add_argument("--pct-cells", type=_fraction, required=True,
                   help="fraction of cells hidden in each selected subject")
    p.add_argument("--mask", help="write the hidden cells as subject_id,slice,attribute rows")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    _add_domain_flag(p)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("sax", parents=[common], help="discretise real-valued series with SAX")
    p.add_argument("input", help="real-valued series CSV")
    p.add_argument("-o", "--out", required=True, help="categorical dataset CSV")
    p.add_argument("--alphabet-size", type=int, default=4, help="symbols a.. (default: 4)")
    p.add_argument("--max-length", type=int, default=100,
                   help="maximum output length (default: 100)")
    p.add_argument("--truncate", action="store_true",
                   help="keep the first max-length points instead of PAA compression")
    p.set_defaults(func=cmd_sax)

    p = sub.add_parser("bench", parents=[common],
                       help="imputation benchmark over a missingness grid")
    p.add_argument("--out-dir", required=True,
                   help="directory for report.csv, wilcoxon.csv and the figures")
    p.add_argument("--dataset", action="append", default=[],
                   help="complete dataset CSV to include (repeatable)")
    p.add_argument("--synthetic", action="store_true",
                   help="also run the synthetic grid when --dataset is given")
    p.add_argument("--n-vars", type=_ints, default=DEFAULT_BENCH_VARS,
                   help="synthetic attributes, comma list (default: 3,5,10)")
    p.add_argument("--num-subjects", type=_ints, default=DEFAULT_BENCH_SUBJECTS,
                   help="synthetic subjects, comma list (default: 20,100,500)")
    p.add_argument("--cardinality", type=int, default=2, help="synthetic values per attribute")
    p.add_argument("--num-slices", type=int, default=11, help="synthetic slices T+1 (default: 11)")
    p.add_argument("--pct-subjects", type=_fractions, default=DEFAULT_LEVELS,
                   help="comma list (default: 0.1,0.2,0.3,0.4)")
    p.add_argument("--pct-cells", type=_fractions, default=DEFAULT_LEVELS,
                   help="comma list (default: 0.1,0.2,0.3,0.4)")
    p.add_argument("--methods", type=lambda s: tuple(x for x in s.split(",") if x),
                   default=METHODS, help="comma list (default: dbn,locf,mode,em)")
    p.add_argument("--num-seeds", type=_positive, default=10,
                   help="grid seeds are SEED .. SEED+NUM_SEEDS-1 (default: 10)")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    _add_domain_flag(p)
    _add_learn_flags(p, seed=False)
    p.add_argument("--seed", type=int, default=1, help="first grid seed (default: 1)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("wilcoxon", parents=[common],
                       help="Wilcoxon signed-rank test on paired values")
    p.add_argument("input", help="CSV with two numeric columns (optional header)")
    p.add_argument("-o", "--out", help="result CSV (default: stdout)")
    p.add_argument("--exact-max-n", type=int, default=25,
                   help="largest n using the exact null distribution (default: 25)")
    p.set_defaults(func=cmd_wilcoxon)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return args.func(args)
    except EnumerationCapError as exc:
        log.error("%s", exc)
        return EXIT_CAP
    except (DatasetError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
