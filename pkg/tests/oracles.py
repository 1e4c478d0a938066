"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

import bisect
import itertools
import math

import numpy as np

from sigrules.fisher import RuleScorer
from sigrules.permutation import permutation_rng


def exact_pvalues(n, n_c, sx):
    """Two-tailed p-values for every support in [L, U], computed with integers.

    The pmf of support j is ``C(n_c, j) C(n - n_c, sx - j) / C(n, sx)``; all
    terms share the denominator, so "no more likely than" compares integers
    exactly.  Returns ``(L, [p_L, ..., p_U])``.
    """
    lo, hi = max(0, n_c + sx - n), min(n_c, sx)
    nums = [math.comb(n_c, j) * math.comb(n - n_c, sx - j) for j in range(lo, hi + 1)]
    total = math.comb(n, sx)
    order = sorted(nums)
    prefix = list(itertools.accumulate(order))
    out = []
    for v in nums:
        i = bisect.bisect_right(order, v)
        out.append(prefix[i - 1] / total)
    return lo, out


def exact_pvalue(k, n, n_c, sx):
    lo, ps = exact_pvalues(n, n_c, sx)
    return ps[k - lo]


def exact_pmf(k, n, n_c, sx):
    return math.comb(n_c, k) * math.comb(n - n_c, sx - k) / math.comb(n, sx)


def random_dataset(rng, n, n_attributes, max_card, n_classes=2):
    from sigrules.dataset import from_columns

    cols = {}
    for a in range(n_attributes):
        card = int(rng.integers(1, max_card + 1))
        cols[f"a{a}"] = [f"v{int(v)}" for v in rng.integers(0, card, size=n)]
    labels = [f"c{int(c)}" for c in rng.integers(0, n_classes, size=n)]
    return from_columns(cols, labels)


def brute_force_closed(dataset, min_sup):
    """Every itemset (at most one item per attribute), grouped by record set.

    Returns ``{closure: (support, class_counts)}`` where the closure is the
    maximal itemset of each group.  The all-records group is kept only when
    its closure is non-empty.
    """
    per_attr = [
        [None] + list(range(dataset.offsets[a], dataset.offsets[a + 1]))
        for a in range(dataset.n_attributes)
    ]
    groups = {}
    for combo in itertools.product(*per_attr):
        items = [i for i in combo if i is not None]
        tids = [r for r in range(dataset.n) if all(i in dataset.records[r] for i in items)]
        if len(tids) < min_sup or not tids:
            continue
        groups.setdefault(tuple(tids), []).append(frozenset(items))
    out = {}
    for tids, patterns in groups.items():
        closure = frozenset().union(*patterns)
        if not closure:
            continue
        counts = np.bincount(dataset.labels[list(tids)], minlength=dataset.n_classes)
        out[tuple(sorted(closure))] = (len(tids), tuple(int(c) for c in counts))
    return out


def naive_permutations(mined, dataset, rules, n_perms, seed):
    """Permutation null recomputed from scratch: fresh tid-sets, no buffers.

    Returns ``(min_p_per_perm, pooled_sorted)``.
    """
    scorer = RuleScorer(dataset.n, dataset.class_counts, static_bytes=0, dynamic=False)
    tid_sets = [dataset.tids_of(m.items) for m in mined]
    minima, pooled = [], []
    for i in range(n_perms):
        labels = permutation_rng(seed, i).permutation(dataset.labels)
        ps = []
        for r in rules:
            tids = tid_sets[r.pattern_index]
            k = int(np.count_nonzero(labels[tids] == r.class_index))
            ps.append(scorer.p_value(r.class_index, k, len(tids)))
        minima.append(min(ps) if ps else 1.0)
        pooled.extend(ps)
    return np.array(minima), np.sort(np.array(pooled))


def bh_reference(p_values, alpha):
    """Step-up rule by exhaustive rank scan: largest k with p_(k) <= k*alpha/n."""
    n = len(p_values)
    ranked = sorted(p_values)
    k = 0
    for i in range(1, n + 1):
        if ranked[i - 1] <= i * alpha / n:
            k = i
    if k == 0:
        return set()
    boundary = ranked[k - 1]
    return {i for i, p in enumerate(p_values) if p <= boundary}
