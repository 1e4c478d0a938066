import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bh_reference, exact_pvalue
from sigrules.corrections import (
    Method,
    SplitMode,
    bh_outcome,
    bh_select,
    bh_threshold,
    bonferroni_select,
    count_tests,
    evaluate_patterns,
    holdout_run,
    make_split,
    no_correction,
)
from sigrules.dataset import from_columns
from sigrules.evaluate import closure_of
from sigrules.miner import mine_closed
from sigrules.rules import TestedRule, score_rules
from sigrules.synth import SynthParams, generate, generate_split_pair


def _rules(ps):
    return [TestedRule(i, 0, 10, 5, p) for i, p in enumerate(ps)]


pvals = st.lists(st.floats(1e-12, 1.0), min_size=0, max_size=20)
pvals_tied = st.lists(st.sampled_from([1e-4, 0.001, 0.0025, 0.01, 0.02, 0.05, 0.3, 1.0]), max_size=20)
alphas = st.floats(0.001, 0.5)


@pytest.mark.parametrize("patterns, classes, expected", [(100, 2, 100), (100, 3, 300), (0, 2, 0)])
def test_count_tests(patterns, classes, expected):
    assert count_tests(patterns, classes) == expected


def test_count_tests_one_class():
    with pytest.raises(ValueError):
        count_tests(10, 1)


def test_bonferroni_examples():
    assert bonferroni_select(_rules([0.04]), 0.05, 1).significant == {0}
    out = bonferroni_select(_rules([6e-5]), 0.05, 1000)
    assert out.cutoff == pytest.approx(5e-5)
    assert out.significant == frozenset()
    with pytest.raises(ValueError):
        bonferroni_select(_rules([0.1]), 0.05, 0)
    empty = bonferroni_select([], 0.05, 0)
    assert empty.n_tests == 0 and not empty.significant


@settings(max_examples=200, deadline=None)
@given(pvals, alphas, st.integers(1, 50))
def test_bonferroni_definition(ps, alpha, extra):
    n_t = len(ps) + extra
    out = bonferroni_select(_rules(ps), alpha, n_t)
    assert out.significant == {i for i, p in enumerate(ps) if p <= alpha / n_t}
    assert all(out.passes(ps[i]) for i in out.significant)


def test_bh_examples():
    assert bh_select([0.001, 0.02, 0.04, 0.5], 0.05) == {0, 1}
    assert bh_select([0.05], 0.05) == {0}
    assert bh_select([1.0, 1.0, 1.0], 0.05) == set()
    assert bh_select([], 0.05) == set()
    assert bh_threshold([0.001, 0.02, 0.04, 0.5], 0.05) == (2, pytest.approx(0.025))


def test_bh_ties_at_boundary():
    # k = 2; the tied third value equals the boundary p-value and is kept
    assert bh_select([0.01, 0.02, 0.02, 0.9], 0.05) == {0, 1, 2}
    assert bh_select([0.03, 0.03, 0.03], 0.05) == {0, 1, 2}


def test_bh_zero_pvalue_first():
    assert bh_select([0.0, 0.9, 0.8], 0.05) == {0}


@settings(max_examples=300, deadline=None)
@given(st.one_of(pvals, pvals_tied), alphas)
def test_bh_matches_rank_scan(ps, alpha):
    assert bh_select(ps, alpha) == bh_reference(ps, alpha)


@settings(max_examples=200, deadline=None)
@given(pvals, alphas, st.randoms(use_true_random=False))
def test_bh_order_invariant(ps, alpha, rnd):
    perm = list(range(len(ps)))
    rnd.shuffle(perm)
    shuffled = [ps[i] for i in perm]
    back = {perm[j] for j in bh_select(shuffled, alpha)}
    assert back == bh_select(ps, alpha)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from([0.001, 0.004, 0.01, 0.03, 0.2, 0.6]), min_size=1, max_size=20),
       st.sampled_from([0.01, 0.05, 0.1]), st.sampled_from([0.5, 0.25, 0.125]))
def test_bh_scale_invariant(ps, alpha, factor):
    # power-of-two factors keep the scaled thresholds exactly representable
    assert bh_select([p * factor for p in ps], alpha * factor) == bh_select(ps, alpha)


@settings(max_examples=200, deadline=None)
@given(st.one_of(pvals, pvals_tied), alphas)
def test_bonferroni_within_bh(ps, alpha):
    if not ps:
        return
    assert bonferroni_select(_rules(ps), alpha, len(ps)).significant <= bh_select(ps, alpha)


def test_bh_outcome_cutoff():
    out = bh_outcome(_rules([0.001, 0.02, 0.04, 0.5]), 0.05)
    assert out.method is Method.BH
    assert out.cutoff == pytest.approx(2 * 0.05 / 4)
    assert out.significant == {0, 1}
    assert out.n_tests == 4
    none = bh_outcome(_rules([0.9]), 0.05)
    assert none.cutoff == 0.0 and not none.significant


def test_no_correction():
    out = no_correction(_rules([0.01, 0.05, 0.051]), 0.05)
    assert out.cutoff == 0.05 and out.significant == {0, 1}


def test_method_names():
    assert [m.value for m in Method] == ["none", "bc", "bh", "perm-fwer", "perm-fdr",
                                         "hd-bc", "hd-bh", "rh-bc", "rh-bh"]
    assert Method.HD_BH.is_holdout and Method.HD_BH.controls_fdr
    assert Method.PERM_FWER.is_permutation and not Method.PERM_FWER.controls_fdr


def _plain(n):
    return from_columns({"A": [str(i % 3) for i in range(n)]}, [str(i % 2) for i in range(n)])


def test_make_split_concatenated():
    s = make_split(_plain(10), SplitMode.CONCATENATED)
    assert s.exploratory.tolist() == [0, 1, 2, 3, 4]
    assert s.evaluation.tolist() == [5, 6, 7, 8, 9]


def test_make_split_random_reproducible():
    d = _plain(11)
    a = make_split(d, SplitMode.RANDOM, np.random.default_rng(3))
    b = make_split(d, SplitMode.RANDOM, np.random.default_rng(3))
    assert len(a.exploratory) == 5 and len(a.evaluation) == 6
    np.testing.assert_array_equal(a.exploratory, b.exploratory)
    assert sorted(np.concatenate([a.exploratory, a.evaluation]).tolist()) == list(range(11))


def test_make_split_frequency():
    d = _plain(100)
    rng = np.random.default_rng(2024)
    hits = np.zeros(100, dtype=int)
    for _ in range(100):
        hits[make_split(d, SplitMode.RANDOM, rng).exploratory] += 1
    # Binomial(100, 1/2) has sd 5; +-22 per record keeps the family-wise miss rate tiny
    assert hits.min() >= 50 - 22 and hits.max() <= 50 + 22
    assert hits.sum() == 100 * 50


def test_make_split_errors():
    with pytest.raises(ValueError):
        make_split(_plain(1), SplitMode.CONCATENATED)
    with pytest.raises(ValueError):
        make_split(_plain(10), SplitMode.RANDOM)


def test_holdout_no_survivors():
    d, _ = generate(SynthParams(n_records=200, n_attributes=6, n_rules=0), seed=5)
    split = make_split(d, SplitMode.CONCATENATED)
    hr = holdout_run(d, split, 1e-12, 20)
    assert hr.outcome.n_tests == 0 and not hr.outcome.significant
    assert hr.survivors == []


def test_absent_pattern_gets_p_one():
    d = from_columns({"A": ["a", "b", "b"]}, ["0", "1", "0"])
    (r,) = evaluate_patterns([(0,)], [0], d.subset([1, 2]))
    assert (r.coverage, r.support, r.p_value) == (0, 0, 1.0)


def _embedded(seed=0):
    params = SynthParams(n_records=200, n_attributes=6, min_v=2, max_v=4, n_rules=1,
                         min_l=2, max_l=3, min_s=80, max_s=80, min_c=0.9, max_c=0.9)
    return generate_split_pair(params, seed=seed)


def test_holdout_trace():
    d, truth, half = _embedded()
    alpha, min_sup = 0.05, 20
    hr = holdout_run(d, make_split(d, SplitMode.CONCATENATED, split_point=half), alpha, min_sup)
    # stage 1: exploratory half at ceil(min_sup / 2)
    explo, evalu = d.subset(range(half)), d.subset(range(half, d.n))
    mined = mine_closed(explo, math.ceil(min_sup / 2))
    assert [m.items for m in hr.mined] == [m.items for m in mined]
    # stage 2: survivors are exploratory rules with p <= alpha
    rules = score_rules(mined, explo)
    surv = [r for r in rules if r.p_value <= alpha]
    assert len(hr.survivors) == len(surv)
    # stage 3: re-test on the evaluation half with its own margins
    stepped = []
    for r in surv:
        tids = evalu.tids_of(mined[r.pattern_index].items)
        k = int(np.count_nonzero(evalu.labels[tids] == r.class_index))
        n_c = int(evalu.class_counts[r.class_index])
        stepped.append(exact_pvalue(k, evalu.n, n_c, len(tids)) if len(tids) else 1.0)
    np.testing.assert_allclose([r.p_value for r in hr.evaluation_rules], stepped, rtol=1e-9)
    # stage 4: Bonferroni over the survivor count
    assert hr.outcome.n_tests == len(surv)
    assert hr.outcome.cutoff == pytest.approx(alpha / len(surv))
    assert hr.outcome.significant == {i for i, p in enumerate(stepped) if p <= alpha / len(surv)}
    # the embedded rule is among the selected ones
    closure, _ = closure_of(truth[0].items, explo)
    picked = {(hr.mined[hr.exploratory_rules[hr.survivors[i]].pattern_index].items,
               hr.evaluation_rules[i].class_index) for i in hr.outcome.significant}
    assert (closure, truth[0].class_index) in picked
    assert hr.outcome.method is Method.HD_BC


def test_holdout_fdr_and_random():
    d, _, half = _embedded(seed=1)
    hr = holdout_run(d, make_split(d, SplitMode.RANDOM, np.random.default_rng(0)), 0.05, 20, "fdr")
    assert hr.outcome.method is Method.RH_BH
    ps = [r.p_value for r in hr.evaluation_rules]
    assert hr.outcome.significant == bh_select(ps, 0.05)


@pytest.mark.parametrize("seed", range(4))
def test_holdout_never_selects_eval_p_above_alpha(seed):
    d, _, half = _embedded(seed)
    for target in ("fwer", "fdr"):
        hr = holdout_run(d, make_split(d, SplitMode.CONCATENATED, split_point=half), 0.05, 16, target)
        assert all(hr.evaluation_rules[i].p_value <= 0.05 for i in hr.outcome.significant)


def test_holdout_rejects_empty_half():
    d = _plain(10)
    from sigrules.corrections import SplitSpec
    with pytest.raises(ValueError):
        holdout_run(d, SplitSpec(np.arange(10), np.arange(0), SplitMode.RANDOM), 0.05, 2)
