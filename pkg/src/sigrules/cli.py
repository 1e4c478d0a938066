"""Command-line interface: ``sigrules {synth,mine,correct,eval,bench}``."""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .corrections import (
    Method,
    SplitMode,
    bh_outcome,
    bonferroni_select,
    holdout_run,
    make_split,
    no_correction,
)
from .dataset import DatasetError, load_csv, write_csv
from .evaluate import metrics_document, parse_methods, run_trials
from .fisher import DEFAULT_STATIC_BYTES
from .miner import mine_closed
from .permutation import (
    DIFFSETS_DYNAMIC,
    DYNAMIC_BUFFER,
    FULL_OPTIMIZATION,
    NO_OPTIMIZATION,
    RNG_ALGORITHM,
    EngineConfig,
    perm_fdr_select,
    perm_fwer_select,
    run_permutations,
)
from .rules import make_scorer, score_rules, sort_by_p, write_rules_tsv
from .synth import SynthError, SynthParams, generate, generate_split_pair

BENCH_CONFIGS = {
    "no-optimization": NO_OPTIMIZATION,
    "dynamic-buffer": DYNAMIC_BUFFER,
    "diffsets+dynamic": DIFFSETS_DYNAMIC,
    "static+diffsets+dynamic": FULL_OPTIMIZATION,
}


class _Outputs:
    """Files written by one command; all are removed if the command fails."""

    def __init__(self):
        self.pending: list[tuple[str, str]] = []

    @contextlib.contextmanager
    def open(self, path, default=None):
        if path in (None, "-"):
            yield default or sys.stdout
            return
        d = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".sigrules-", suffix=".part")
        self.pending.append((tmp, path))
        with os.fdopen(fd, "w", newline="") as fh:
            yield fh

    def json(self, path, doc, default=None):
        with self.open(path, default) as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def commit(self):
        for tmp, path in self.pending:
            os.replace(tmp, path)
        self.pending = []

    def discard(self):
        for tmp, _ in self.pending:
            with contextlib.suppress(FileNotFoundError):
                os.remove(tmp)
        self.pending = []


def _alpha(text):
    a = float(text)
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return a


def _conf(text):
    c = float(text)
    if not 0 <= c <= 1:
        raise argparse.ArgumentTypeError("min-conf must lie in [0, 1]")
    return c


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _add_data_args(p):
    p.add_argument("--data", required=True, help="categorical CSV file")
    p.add_argument("--class-col", default="class", help="name of the class column")
    p.add_argument("--delimiter", default=",", help="CSV field delimiter")
    p.add_argument("--no-header", action="store_true",
                   help="file has no header row; columns are named 0, 1, ...")
    p.add_argument("--min-sup", type=_positive, required=True, help="minimum pattern support (records)")
    p.add_argument("--min-conf", type=_conf, default=0.0, help="confidence pre-filter")
    p.add_argument("--static-buffer-bytes", type=int, default=DEFAULT_STATIC_BYTES,
                   help="byte budget of the static p-value buffer")


def _add_synth_args(p):
    g = p.add_argument_group("generator")
    g.add_argument("--N", type=_positive, default=2000, help="number of records")
    g.add_argument("--A", type=_positive, default=40, help="number of attributes")
    g.add_argument("--classes", type=_positive, default=2, help="number of classes")
    g.add_argument("--min-v", type=_positive, default=2, help="minimum attribute cardinality")
    g.add_argument("--max-v", type=_positive, default=8, help="maximum attribute cardinality")
    g.add_argument("--rules", type=int, default=0, help="number of embedded rules")
    g.add_argument("--min-l", type=_positive, default=2, help="minimum embedded rule length")
    g.add_argument("--max-l", type=_positive, default=16, help="maximum embedded rule length")
    g.add_argument("--min-s", type=_positive, default=400, help="minimum embedded rule coverage")
    g.add_argument("--max-s", type=_positive, default=400, help="maximum embedded rule coverage")
    g.add_argument("--min-c", type=float, default=0.6, help="minimum embedded rule confidence")
    g.add_argument("--max-c", type=float, default=0.6, help="maximum embedded rule confidence")


def _params(args, seed=None):
    return SynthParams(
        n_records=args.N, n_classes=args.classes, n_attributes=args.A,
        min_v=args.min_v, max_v=args.max_v, n_rules=args.rules,
        min_l=args.min_l, max_l=args.max_l, min_s=args.min_s, max_s=args.max_s,
        min_c=args.min_c, max_c=args.max_c, seed=seed,
    )


def _load(args):
    return load_csv(args.data, args.class_col, header=not args.no_header, delimiter=args.delimiter)


def _dataset_summary(data):
    return {
        "n": data.n,
        "class_counts": {name: int(c) for name, c in zip(data.class_names, data.class_counts)},
    }


def cmd_synth(args, out: _Outputs):
    params = _params(args, args.seed)
    if args.split_pair:
        data, truth, half = generate_split_pair(params)
    else:
        (data, truth), half = generate(params), None
    with out.open(args.out) as fh:
        write_csv(data, fh)
    doc = {
        "params": params.to_dict(),
        "split_point": half,
        "class_counts": [int(c) for c in data.class_counts],
        "rules": [t.to_dict(data) for t in truth],
    }
    out.json(args.truth, doc)


def cmd_mine(args, out: _Outputs):
    data = _load(args)
    mined = mine_closed(data, args.min_sup)
    scorer = make_scorer(data, args.min_sup, args.static_buffer_bytes)
    rules = score_rules(mined, data, scorer, args.min_conf)
    with out.open(args.out) as fh:
        write_rules_tsv(sort_by_p(rules), mined, data, fh)
    summary = _dataset_summary(data)
    summary.update(n_patterns=len(mined), n_tests=len(rules), min_sup=args.min_sup,
                   min_conf=args.min_conf)
    out.json(args.summary, summary, sys.stderr)


def correct(data, method: Method, alpha, min_sup, min_conf=0.0, n_perms=1000, seed=0, workers=1,
            static_bytes=DEFAULT_STATIC_BYTES, split_point=None):
    """Run one correction on a loaded dataset.

    Returns ``(outcome, rules, patterns, decided_on)`` where
    ``patterns[r.pattern_index]`` holds each rule's items and ``decided_on``
    is the dataset the final p-values refer to (the evaluation half for
    holdout methods).
    """
    if method.is_holdout:
        if method.value.startswith("hd-"):
            split = make_split(data, SplitMode.CONCATENATED, split_point=split_point)
        else:
            split = make_split(data, SplitMode.RANDOM, np.random.Generator(np.random.PCG64(seed)))
        hr = holdout_run(data, split, alpha, min_sup, "fdr" if method.controls_fdr else "fwer",
                         min_conf, static_bytes)
        patterns = [hr.mined[hr.exploratory_rules[i].pattern_index].items for i in hr.survivors]
        return hr.outcome, hr.evaluation_rules, patterns, hr.evaluation
    mined = mine_closed(data, min_sup)
    rules = score_rules(mined, data, make_scorer(data, min_sup, static_bytes), min_conf)
    patterns = [m.items for m in mined]
    if method is Method.NONE:
        outcome = no_correction(rules, alpha)
    elif method is Method.BC:
        outcome = bonferroni_select(rules, alpha, len(rules))
    elif method is Method.BH:
        outcome = bh_outcome(rules, alpha)
    else:
        config = EngineConfig(static_bytes=static_bytes)
        run = run_permutations(mined, data, n_perms, seed, rules, config, workers)
        if method is Method.PERM_FWER:
            outcome = perm_fwer_select(rules, run, alpha)
        else:
            outcome = perm_fdr_select(rules, run, alpha)
        outcome.info["rng"] = RNG_ALGORITHM
        outcome.info["seed"] = seed
    return outcome, rules, patterns, data


def cmd_correct(args, out: _Outputs):
    data = _load(args)
    method = Method(args.method)
    outcome, rules, patterns, decided = correct(
        data, method, args.alpha, args.min_sup, args.min_conf, args.n_perms, args.seed,
        args.workers, args.static_buffer_bytes, args.split_point,
    )
    sig = sorted(outcome.significant, key=lambda i: (rules[i].p_value, i))
    with out.open(args.out) as fh:
        write_rules_tsv([rules[i] for i in sig], patterns, decided, fh)
    summary = outcome.summary()
    summary.update(_dataset_summary(data))
    out.json(args.summary, summary, sys.stderr)


def cmd_eval(args, out: _Outputs):
    params = _params(args)
    methods = parse_methods([m for arg in args.method for m in arg.split(",") if m])
    split_pair = {"auto": None, "yes": True, "no": False}[args.split_pair]
    result = run_trials(params, methods, args.alpha, args.min_sup, args.trials, args.seed,
                        n_perms=args.n_perms, min_conf=args.min_conf,
                        static_bytes=args.static_buffer_bytes, workers=args.workers,
                        split_pair=split_pair)
    doc = metrics_document(result, params, args.alpha, args.min_sup, args.trials, args.seed, args.n_perms)
    out.json(args.out, doc)


def bench(data, min_sup, n_perms, seed, alpha=0.05, configs=None):
    """Stage timings of the permutation approach under each optimisation set."""
    configs = configs or list(BENCH_CONFIGS)
    report = {"n": data.n, "n_perms": n_perms, "seed": seed, "alpha": alpha, "min_sup": min_sup,
              "rng": RNG_ALGORITHM, "configs": {}}
    decisions = []
    for name in configs:
        cfg = BENCH_CONFIGS[name]
        t0 = time.perf_counter()
        mined = mine_closed(data, min_sup)
        rules = score_rules(mined, data, make_scorer(data, min_sup, cfg.static_bytes, cfg.dynamic))
        t1 = time.perf_counter()
        run = run_permutations(mined, data, n_perms, seed, rules, cfg)
        t2 = time.perf_counter()
        fwer = perm_fwer_select(rules, run, alpha) if alpha * n_perms >= 1 else None
        fdr = perm_fdr_select(rules, run, alpha)
        t3 = time.perf_counter()
        decisions.append((fwer.significant if fwer else None, fdr.significant))
        report["configs"][name] = {
            "mining_s": t1 - t0,
            "permutations_s": t2 - t1,
            "corrections_s": t3 - t2,
            "total_s": t3 - t0,
            "n_tests": len(rules),
            "perm_fwer_cutoff": fwer.cutoff if fwer else None,
            "n_significant_perm_fwer": fwer.n_significant if fwer else None,
            "n_significant_perm_fdr": fdr.n_significant,
        }
    report["identical_decisions"] = all(d == decisions[0] for d in decisions)
    return report


def cmd_bench(args, out: _Outputs):
    data = _load(args)
    report = bench(data, args.min_sup, args.n_perms, args.seed, args.alpha, args.configs)
    out.json(args.out, report)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="sigrules", formatter_class=fmt,
                                     description="Class association rules with false-positive control.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", formatter_class=fmt, help="generate a synthetic dataset")
    _add_synth_args(p)
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--split-pair", action="store_true",
                   help="build two half datasets with half-coverage rules and concatenate them")
    p.add_argument("--out", required=True, help="CSV output path ('-' for stdout)")
    p.add_argument("--truth", required=True, help="ground-truth JSON output path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("mine", formatter_class=fmt, help="mine and test rules")
    _add_data_args(p)
    p.add_argument("--out", default="-", help="rule TSV output ('-' for stdout)")
    p.add_argument("--summary", default=None, help="JSON summary path, stderr when omitted")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("correct", formatter_class=fmt, help="apply a multiple-testing correction")
    _add_data_args(p)
    p.add_argument("--method", choices=[m.value for m in Method], required=True)
    p.add_argument("--alpha", type=_alpha, default=0.05, help="FWER or FDR level")
    p.add_argument("--n-perms", type=_positive, default=1000, help="number of permutations")
    p.add_argument("--seed", type=int, default=0, help="permutation / random split seed")
    p.add_argument("--workers", type=_positive, default=1, help="worker processes for permutations")
    p.add_argument("--split-point", type=_positive, default=None,
                   help="first evaluation record for hd-*, n/2 when omitted")
    p.add_argument("--out", default="-", help="TSV of significant rules ('-' for stdout)")
    p.add_argument("--summary", default=None, help="JSON summary path, stderr when omitted")
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("eval", formatter_class=fmt, help="power/FWER/FDR over synthetic trials")
    _add_synth_args(p)
    p.add_argument("--method", action="append", required=True,
                   help="method(s), repeatable or comma-separated: " + ",".join(m.value for m in Method))
    p.add_argument("--alpha", type=_alpha, default=0.05, help="FWER or FDR level")
    p.add_argument("--trials", type=_positive, default=100, help="number of synthetic datasets")
    p.add_argument("--min-sup", type=_positive, required=True, help="minimum support on the whole dataset")
    p.add_argument("--min-conf", type=_conf, default=0.0, help="confidence pre-filter")
    p.add_argument("--n-perms", type=_positive, default=1000, help="permutations for perm-* methods")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--workers", type=_positive, default=1, help="worker processes for trials")
    p.add_argument("--split-pair", choices=["auto", "yes", "no"], default="auto",
                   help="generate split-pair datasets (auto: when an hd-* method is requested)")
    p.add_argument("--static-buffer-bytes", type=int, default=DEFAULT_STATIC_BYTES,
                   help="byte budget of the static p-value buffer")
    p.add_argument("--out", required=True, help="metrics JSON output path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", formatter_class=fmt, help="time the permutation optimisations")
    _add_data_args(p)
    p.add_argument("--alpha", type=_alpha, default=0.05, help="FWER or FDR level")
    p.add_argument("--n-perms", type=_positive, default=1000, help="number of permutations")
    p.add_argument("--seed", type=int, default=0, help="permutation seed")
    p.add_argument("--configs", nargs="+", choices=list(BENCH_CONFIGS), default=list(BENCH_CONFIGS),
                   help="optimisation sets to time")
    p.add_argument("--out", default="-", help="timing JSON output ('-' for stdout)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = _Outputs()
    try:
        args.func(args, out)
        out.commit()
    except (DatasetError, SynthError, ValueError, RuntimeError, OSError) as exc:
        out.discard()
        print(f"sigrules {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        out.discard()
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
