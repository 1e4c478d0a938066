"""Scoring correction methods against embedded ground truth.

A significant rule that is not an embedded rule is a false positive when
its records are disjoint from the embedded rule's, or when it stays
significant after the embedded rule's effect is removed from the overlap
(its *adjusted* p-value).  Rules explained away by the embedded rule are
by-products and are not counted either way.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .corrections import (
    CorrectionOutcome,
    Method,
    SplitMode,
    bh_outcome,
    bonferroni_select,
    holdout_run,
    make_split,
    no_correction,
)
from .dataset import CategoricalDataset
from .fisher import DEFAULT_STATIC_BYTES, RuleScorer, support_bounds
from .miner import mine_closed
from .permutation import RNG_ALGORITHM, perm_fdr_select, perm_fwer_select, run_permutations
from .rules import TestedRule, make_scorer, score_rules
from .synth import EmbeddedRule, SynthParams, generate, generate_split_pair


@dataclass(frozen=True)
class TruthView:
    """An embedded rule as seen from the dataset a rule was tested on."""

    items: tuple[int, ...]
    class_index: int
    tids: np.ndarray
    closure: tuple[int, ...]


def closure_of(items: Sequence[int], dataset: CategoricalDataset) -> tuple[tuple[int, ...], np.ndarray]:
    """Closed pattern with the same records as ``items`` in ``dataset``, and those records."""
    tids = dataset.tids_of(items)
    if len(tids) == 0:
        return tuple(sorted(items)), tids
    rows = dataset.records[tids]
    shared = np.all(rows == rows[0], axis=0)
    return tuple(sorted(int(i) for i in rows[0][shared])), tids


def truth_view(rule: EmbeddedRule, dataset: CategoricalDataset) -> TruthView:
    closure, tids = closure_of(rule.items, dataset)
    return TruthView(tuple(rule.items), rule.class_index, tids, closure)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def adjusted_support(
    rule: TestedRule, rule_tids: np.ndarray, truth: TruthView, dataset: CategoricalDataset
) -> tuple[int, int]:
    """Support of ``rule`` had the embedded rule not existed, and the class it refers to.

    The embedded class's count inside the overlap is replaced by its expected
    share ``|overlap| * n_ct / n``.  With two classes the rule is first
    restated for the embedded class, which tests the same hypothesis.
    """
    overlap = np.intersect1d(rule_tids, truth.tids, assume_unique=True)
    if overlap.size == 0:
        raise ValueError("rule and embedded rule share no records")
    c, supp = rule.class_index, rule.support
    if dataset.n_classes == 2 and c != truth.class_index:
        c, supp = truth.class_index, rule.coverage - rule.support
    n = dataset.n
    n_ct = int(dataset.class_counts[truth.class_index])
    overlap_c = int(np.count_nonzero(dataset.labels[overlap] == c))
    adj = _round_half_up(overlap.size * n_ct / n) + (supp - overlap_c)
    lo, hi = support_bounds(n, int(dataset.class_counts[c]), rule.coverage)
    return min(max(adj, lo), hi), c


def adjusted_p(
    rule: TestedRule,
    rule_tids: np.ndarray,
    truth: TruthView,
    dataset: CategoricalDataset,
    scorer: RuleScorer | None = None,
) -> float:
    """p-value of ``rule`` with the embedded rule's effect removed from the overlap."""
    if scorer is None:
        scorer = make_scorer(dataset)
    k, c = adjusted_support(rule, rule_tids, truth, dataset)
    return scorer.p_value(c, k, rule.coverage)


def is_embedded(items: Sequence[int], class_index: int, truth: TruthView) -> bool:
    return tuple(sorted(items)) == truth.closure and class_index == truth.class_index


def classify_false_positive(
    rule: TestedRule,
    items: Sequence[int],
    rule_tids: np.ndarray,
    truths: Sequence[TruthView],
    outcome: CorrectionOutcome,
    dataset: CategoricalDataset,
    scorer: RuleScorer | None = None,
) -> bool:
    """Whether a significant ``rule`` counts as a false positive.

    An embedded rule never does.  Otherwise the rule must be a false positive
    against every embedded rule: disjoint records, or an adjusted p-value
    that still passes the method's cutoff.
    """
    if any(is_embedded(items, rule.class_index, t) for t in truths):
        return False
    for t in truths:
        if np.intersect1d(rule_tids, t.tids, assume_unique=True).size == 0:
            continue
        if not outcome.passes(adjusted_p(rule, rule_tids, t, dataset, scorer)):
            return False
    return True


@dataclass
class TrialMetrics:
    power: float
    fwer: float
    fdr: float
    n_trials: int
    mean_n_significant: float
    mean_n_false: float
    mean_n_tests: float


def aggregate(rows: Sequence[dict]) -> TrialMetrics:
    k = len(rows)
    return TrialMetrics(
        power=sum(r["power"] for r in rows) / k,
        fwer=sum(1 for r in rows if r["n_false"] > 0) / k,
        fdr=sum(r["fdr"] for r in rows) / k,
        n_trials=k,
        mean_n_significant=sum(r["n_significant"] for r in rows) / k,
        mean_n_false=sum(r["n_false"] for r in rows) / k,
        mean_n_tests=sum(r["n_tests"] for r in rows) / k,
    )


def score_outcome(outcome, rules, patterns, dataset, truth_rules, mined_on=None, scorer=None) -> dict:
    """Per-trial counts for one method.

    ``patterns[i]`` are the items of ``rules[i]``; ``mined_on`` is the
    dataset the patterns were mined from (for matching embedded closures)
    when it differs from ``dataset``, the one the decision was made on.
    """
    mined_on = dataset if mined_on is None else mined_on
    decide_views = [truth_view(t, dataset) for t in truth_rules]
    mined_views = [truth_view(t, mined_on) for t in truth_rules]
    detected = [False] * len(truth_rules)
    n_false = 0
    for i in sorted(outcome.significant):
        r = rules[i]
        items = patterns[i]
        hits = [j for j, v in enumerate(mined_views) if is_embedded(items, r.class_index, v)]
        for j in hits:
            detected[j] = True
        if hits:
            continue
        tids = dataset.tids_of(items)
        if classify_false_positive(r, items, tids, decide_views, outcome, dataset, scorer):
            n_false += 1
    n_sig = outcome.n_significant
    return {
        "n_tests": outcome.n_tests,
        "cutoff": outcome.cutoff,
        "n_significant": n_sig,
        "n_false": n_false,
        "fdr": n_false / n_sig if n_sig else 0.0,
        "power": sum(detected) / len(detected) if detected else 0.0,
        "detected": detected,
    }


def trial_seeds(master_seed: int, trial: int) -> tuple[int, int, int]:
    """(data, permutation, split) seeds of one trial."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(trial,))
    a, b, c = ss.generate_state(3, dtype=np.uint32)
    return int(a), int(b), int(c)


def parse_methods(methods) -> list[Method]:
    if isinstance(methods, (str, Method)):
        methods = [methods]
    return [m if isinstance(m, Method) else Method(m) for m in methods]


def run_trial(
    trial: int,
    params: SynthParams,
    methods: Sequence[Method],
    alpha: float,
    min_sup: int,
    master_seed: int,
    n_perms: int = 1000,
    min_conf: float = 0.0,
    static_bytes: int = DEFAULT_STATIC_BYTES,
    split_pair: bool | None = None,
) -> dict:
    """Generate one dataset, apply every method, and score each against the truth."""
    methods = parse_methods(methods)
    if split_pair is None:
        split_pair = any(m.is_holdout for m in methods)
    data_seed, perm_seed, split_seed = trial_seeds(master_seed, trial)
    try:
        if split_pair:
            data, truth, half = generate_split_pair(params, data_seed)
        else:
            data, truth = generate(params, data_seed)
            half = data.n // 2
        if any(m is Method.HD_BC or m is Method.HD_BH for m in methods) and not split_pair:
            raise ValueError("hd-* methods need split-pair datasets")
        row = {"trial": trial, "n": data.n, "class_counts": [int(c) for c in data.class_counts],
               "methods": {}}
        direct = [m for m in methods if not m.is_holdout]
        if direct:
            mined = mine_closed(data, min_sup)
            scorer = make_scorer(data, min_sup, static_bytes)
            rules = score_rules(mined, data, scorer, min_conf)
            patterns = [mined[r.pattern_index].items for r in rules]
            run = None
            if any(m.is_permutation for m in direct):
                run = run_permutations(mined, data, n_perms, perm_seed, rules)
            for m in direct:
                if m is Method.NONE:
                    out = no_correction(rules, alpha)
                elif m is Method.BC:
                    out = bonferroni_select(rules, alpha, len(rules))
                elif m is Method.BH:
                    out = bh_outcome(rules, alpha)
                elif m is Method.PERM_FWER:
                    out = perm_fwer_select(rules, run, alpha)
                else:
                    out = perm_fdr_select(rules, run, alpha)
                row["methods"][m.value] = score_outcome(out, rules, patterns, data, truth, scorer=scorer)
        for m in methods:
            if not m.is_holdout:
                continue
            target = "fdr" if m.controls_fdr else "fwer"
            if m.value.startswith("hd-"):
                split = make_split(data, SplitMode.CONCATENATED, split_point=half)
            else:
                split = make_split(data, SplitMode.RANDOM, np.random.Generator(np.random.PCG64(split_seed)))
            hr = holdout_run(data, split, alpha, min_sup, target, min_conf, static_bytes)
            patterns = [hr.mined[hr.exploratory_rules[i].pattern_index].items for i in hr.survivors]
            # embedded rules are matched against closures in the exploratory
            # half, false positives are judged on the evaluation half
            res = score_outcome(hr.outcome, hr.evaluation_rules, patterns, hr.evaluation, truth,
                                mined_on=hr.exploratory)
            row["methods"][m.value] = res
        return row
    except Exception as exc:
        raise RuntimeError(f"trial {trial} failed: {exc}") from exc


def _trial_star(args):
    return run_trial(*args)


def run_trials(
    params: SynthParams,
    methods,
    alpha: float,
    min_sup: int,
    n_trials: int,
    master_seed: int,
    n_perms: int = 1000,
    min_conf: float = 0.0,
    static_bytes: int = DEFAULT_STATIC_BYTES,
    workers: int = 1,
    split_pair: bool | None = None,
) -> dict:
    """Repeat generate-mine-test-correct ``n_trials`` times and aggregate.

    Returns ``{"metrics": {method: TrialMetrics}, "trials": [per-trial rows]}``.
    Trials are seeded from ``master_seed`` and the trial index only, so the
    result does not depend on ``workers``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    methods = parse_methods(methods)
    args = [(t, params, methods, alpha, min_sup, master_seed, n_perms, min_conf, static_bytes, split_pair)
            for t in range(n_trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_trial_star, args))
    else:
        rows = [run_trial(*a) for a in args]
    metrics = {m.value: aggregate([r["methods"][m.value] for r in rows]) for m in methods}
    return {"metrics": metrics, "trials": rows}


def metrics_document(result: dict, params: SynthParams, alpha: float, min_sup: int,
                     n_trials: int, master_seed: int, n_perms: int) -> dict:
    """JSON-ready summary; contains no timing so repeated runs are byte-identical."""
    return {
        "params": params.to_dict(),
        "alpha": alpha,
        "min_sup": min_sup,
        "n_trials": n_trials,
        "n_perms": n_perms,
        "seed": master_seed,
        "rng": RNG_ALGORITHM,
        "metrics": {k: asdict(v) for k, v in result["metrics"].items()},
        "trials": result["trials"],
    }
