"""Label-permutation null distribution for the mined rules.

Patterns are mined once.  For each permutation only the class labels move,
so every rule keeps its coverage and only its support changes.  Class counts
are propagated down the set-enumeration tree: a Full node counts its own
ids, a Diff node subtracts the counts of its Diffset from its parent's.
Permutations are processed in column batches so that each node costs one
vectorised gather per batch, and p-values come straight from the buffer
cache.

Permutation ``i`` of a run with master seed ``s`` always uses the generator
``PCG64(SeedSequence(s, spawn_key=(i,)))``, which makes results independent
of batch size and worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corrections import CorrectionOutcome, Method, bh_select, bh_threshold
from .dataset import CategoricalDataset
from .fisher import DEFAULT_STATIC_BYTES, RuleScorer
from .miner import ROOT, MinedPattern, TidKind, reconstruct_tids
from .rules import TestedRule

RNG_ALGORITHM = "numpy PCG64; permutation i seeded by SeedSequence(seed, spawn_key=(i,))"


def permutation_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def permute_labels(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniformly shuffled copy of ``labels``."""
    return rng.permutation(labels)


@dataclass
class PermutationRun:
    n_perms: int
    min_p_per_perm: np.ndarray
    pooled_p: np.ndarray
    seed: int
    n_tests: int
    rng: str = RNG_ALGORITHM


@dataclass(frozen=True)
class EngineConfig:
    """Which cost optimisations the engine uses (results never depend on them)."""

    diffsets: bool = True
    dynamic: bool = True
    static_bytes: int = DEFAULT_STATIC_BYTES


NO_OPTIMIZATION = EngineConfig(diffsets=False, dynamic=False, static_bytes=0)
DYNAMIC_BUFFER = EngineConfig(diffsets=False, dynamic=True, static_bytes=0)
DIFFSETS_DYNAMIC = EngineConfig(diffsets=True, dynamic=True, static_bytes=0)
FULL_OPTIMIZATION = EngineConfig(diffsets=True, dynamic=True, static_bytes=DEFAULT_STATIC_BYTES)


def _label_batch(labels, seed, start, stop):
    cols = [permute_labels(labels, permutation_rng(seed, i)) for i in range(start, stop)]
    return np.stack(cols, axis=1)


def _batch_pvalues(mined, full, n_classes, class_counts, rules, scorer, perm_labels):
    """p-value matrix of shape (len(rules), batch) for one batch of labellings."""
    batch = perm_labels.shape[1]
    tracked = max(n_classes - 1, 0)
    ind = np.stack([(perm_labels == c) for c in range(tracked)]).astype(np.int32) if tracked else None
    root = np.asarray(class_counts[:tracked], dtype=np.int64)[:, None] * np.ones((1, batch), dtype=np.int64)
    by_node: dict[int, list[tuple[int, int]]] = {}
    for row, r in enumerate(rules):
        by_node.setdefault(r.pattern_index, []).append((row, r.class_index))
    out = np.empty((len(rules), batch))
    counts: list[np.ndarray] = []
    for i, node in enumerate(mined):
        rep = node.tids
        if not tracked:
            cnt = root[:0]
        elif full is not None:
            cnt = ind[:, full[i], :].sum(axis=1, dtype=np.int64)
        elif rep.kind is TidKind.FULL:
            cnt = ind[:, rep.ids, :].sum(axis=1, dtype=np.int64)
        else:
            parent = root if rep.parent == ROOT else counts[rep.parent]
            cnt = parent - ind[:, rep.ids, :].sum(axis=1, dtype=np.int64)
        counts.append(cnt)
        sx = node.support
        for row, c in by_node.get(i, ()):
            k = cnt[c] if c < tracked else sx - cnt.sum(axis=0)
            # coverage is permutation invariant, so support must stay within [0, sx]
            assert k.min() >= 0 and k.max() <= sx, "class count outside coverage"
            out[row] = scorer.p_values(c, k, sx)
    return out


_WORKER: dict = {}


def _worker_init(mined, labels, n_classes, class_counts, n, rules, config, seed, min_sup):
    full = None if config.diffsets else reconstruct_tids(mined, n)
    scorer = RuleScorer(n, class_counts, min_sup, config.static_bytes, config.dynamic)
    _WORKER.update(mined=mined, labels=labels, n_classes=n_classes, class_counts=class_counts,
                   rules=rules, full=full, scorer=scorer, seed=seed)


def _worker_chunk(bounds):
    w = _WORKER
    lab = _label_batch(w["labels"], w["seed"], *bounds)
    pv = _batch_pvalues(w["mined"], w["full"], w["n_classes"], w["class_counts"], w["rules"], w["scorer"], lab)
    return pv


def run_permutations(
    mined: list[MinedPattern],
    dataset: CategoricalDataset,
    n_perms: int,
    seed: int,
    rules: Sequence[TestedRule] | None = None,
    config: EngineConfig = FULL_OPTIMIZATION,
    workers: int = 1,
    batch_size: int = 256,
) -> PermutationRun:
    """Per-permutation minimum p-values and the pooled p-values of all rules.

    ``rules`` selects which (pattern, class) pairs are tested; by default
    every rule :func:`~sigrules.rules.score_rules` would produce.
    """
    if n_perms < 1:
        raise ValueError("n_perms must be >= 1")
    if rules is None:
        from .rules import score_rules
        rules = score_rules(mined, dataset)
    rules = list(rules)
    min_sup = min((m.support for m in mined), default=1)
    args = (mined, dataset.labels, dataset.n_classes, [int(c) for c in dataset.class_counts],
            dataset.n, rules, config, seed, min_sup)
    chunks = [(a, min(a + batch_size, n_perms)) for a in range(0, n_perms, batch_size)]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init, initargs=args) as ex:
            parts = list(ex.map(_worker_chunk, chunks))
    else:
        _worker_init(*args)
        try:
            parts = [_worker_chunk(c) for c in chunks]
        finally:
            _WORKER.clear()
    pv = np.concatenate(parts, axis=1) if rules else np.ones((0, n_perms))
    min_p = pv.min(axis=0) if len(rules) else np.ones(n_perms)
    pooled = np.sort(pv, axis=None)
    return PermutationRun(n_perms, min_p, pooled, seed, len(rules))


def perm_fwer_cutoff(run: PermutationRun, alpha: float) -> float:
    """The floor(alpha * N)-th smallest per-permutation minimum p-value."""
    rank = math.floor(alpha * run.n_perms + 1e-9)
    if rank < 1:
        raise ValueError(f"alpha * n_perms = {alpha * run.n_perms:g} < 1; use more permutations")
    return float(np.sort(run.min_p_per_perm)[rank - 1])


def perm_fwer_select(rules: Sequence[TestedRule], run: PermutationRun, alpha: float) -> CorrectionOutcome:
    """Rules whose p-value is strictly below the permutation cutoff."""
    cutoff = perm_fwer_cutoff(run, alpha)
    sig = frozenset(i for i, r in enumerate(rules) if r.p_value < cutoff)
    return CorrectionOutcome(Method.PERM_FWER, alpha, cutoff, sig, len(rules), strict=True,
                             info={"n_perms": run.n_perms})


def empirical_pvalues(p_values: Sequence[float], run: PermutationRun) -> np.ndarray:
    """Fraction of pooled permutation p-values that are <= each original p-value."""
    total = run.n_perms * run.n_tests
    if total == 0:
        return np.ones(len(p_values))
    counts = np.searchsorted(run.pooled_p, np.asarray(p_values, dtype=float), side="right")
    return counts / total


def perm_fdr_select(rules: Sequence[TestedRule], run: PermutationRun, alpha: float) -> CorrectionOutcome:
    """Benjamini-Hochberg on the empirical p-values.

    The reported ``cutoff`` is the largest original p-value selected; since
    empirical p-values are monotone in the original ones, ``p <= cutoff``
    reproduces the selection.
    """
    if len(rules) != run.n_tests:
        raise ValueError(f"run was made for {run.n_tests} rules, got {len(rules)}")
    p = np.array([r.p_value for r in rules])
    emp = empirical_pvalues(p, run)
    sig = bh_select(emp, alpha)
    _, boundary = bh_threshold(emp, alpha)
    cutoff = float(p[list(sig)].max()) if sig else 0.0
    return CorrectionOutcome(Method.PERM_FDR, alpha, cutoff, frozenset(sig), len(rules),
                             info={"n_perms": run.n_perms, "empirical_cutoff": boundary})
