"""Direct adjustment (Bonferroni, Benjamini-Hochberg) and holdout evaluation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import CategoricalDataset
from .fisher import DEFAULT_STATIC_BYTES
from .miner import MinedPattern, mine_closed
from .rules import TestedRule, make_scorer, score_rules


class Method(enum.Enum):
    NONE = "none"
    BC = "bc"
    BH = "bh"
    PERM_FWER = "perm-fwer"
    PERM_FDR = "perm-fdr"
    HD_BC = "hd-bc"
    HD_BH = "hd-bh"
    RH_BC = "rh-bc"
    RH_BH = "rh-bh"

    @property
    def label(self) -> str:
        return {"none": "None"}.get(self.value, self.value.upper().replace("-", "_").replace("PERM", "Perm"))

    @property
    def is_holdout(self) -> bool:
        return self.value[:3] in ("hd-", "rh-")

    @property
    def is_permutation(self) -> bool:
        return self.value.startswith("perm-")

    @property
    def controls_fdr(self) -> bool:
        return self.value.endswith(("bh", "fdr"))


@dataclass
class CorrectionOutcome:
    """Decision of one correction method.

    ``significant`` holds indices into the rule list the method was applied
    to.  ``cutoff`` is the effective threshold on the rules' Fisher p-values:
    a rule is significant iff ``p <= cutoff`` (``p < cutoff`` when ``strict``).
    """

    method: Method
    alpha: float
    cutoff: float
    significant: frozenset
    n_tests: int
    strict: bool = False
    info: dict = field(default_factory=dict)

    def passes(self, p: float) -> bool:
        return p < self.cutoff if self.strict else p <= self.cutoff

    @property
    def n_significant(self) -> int:
        return len(self.significant)

    def summary(self) -> dict:
        out = {
            "method": self.method.value,
            "alpha": self.alpha,
            "n_tests": self.n_tests,
            "cutoff": self.cutoff,
            "strict": self.strict,
            "n_significant": self.n_significant,
        }
        out.update(self.info)
        return out


def count_tests(n_closed_patterns: int, n_classes: int) -> int:
    """Number of hypotheses: one per pattern with two classes, ``m`` per pattern otherwise."""
    if n_classes < 2:
        raise ValueError("at least two classes are needed to test rules")
    return n_closed_patterns if n_classes == 2 else n_classes * n_closed_patterns


def no_correction(rules: Sequence[TestedRule], alpha: float) -> CorrectionOutcome:
    sig = frozenset(i for i, r in enumerate(rules) if r.p_value <= alpha)
    return CorrectionOutcome(Method.NONE, alpha, alpha, sig, len(rules))


def bonferroni_select(rules: Sequence[TestedRule], alpha: float, n_tests: int,
                      method: Method = Method.BC) -> CorrectionOutcome:
    if n_tests < 1:
        if rules:
            raise ValueError("n_tests must be >= 1 when there are rules")
        return CorrectionOutcome(method, alpha, 0.0, frozenset(), 0)
    cutoff = alpha / n_tests
    sig = frozenset(i for i, r in enumerate(rules) if r.p_value <= cutoff)
    return CorrectionOutcome(method, alpha, cutoff, sig, n_tests)


def bh_threshold(p_values: Sequence[float], alpha: float) -> tuple[int, float]:
    """Step-up rank ``k`` (0 if none) and its boundary ``k * alpha / n``."""
    p = np.sort(np.asarray(p_values, dtype=float), kind="stable")
    n = len(p)
    if n == 0:
        return 0, 0.0
    ranks = np.arange(1, n + 1)
    ok = np.flatnonzero(p <= ranks * alpha / n)
    if ok.size == 0:
        return 0, 0.0
    k = int(ok[-1]) + 1
    return k, k * alpha / n


def bh_select(p_values: Sequence[float], alpha: float) -> set[int]:
    """Indices selected by the Benjamini-Hochberg step-up procedure.

    Everything with a p-value no larger than the ``k``-th smallest is
    selected, so ties at the boundary go in together.
    """
    p = np.asarray(p_values, dtype=float)
    k, _ = bh_threshold(p, alpha)
    if k == 0:
        return set()
    kth = np.sort(p, kind="stable")[k - 1]
    return set(np.flatnonzero(p <= kth).tolist())


def bh_outcome(rules: Sequence[TestedRule], alpha: float, method: Method = Method.BH) -> CorrectionOutcome:
    p = [r.p_value for r in rules]
    k, boundary = bh_threshold(p, alpha)
    return CorrectionOutcome(method, alpha, boundary, frozenset(bh_select(p, alpha)), len(rules))


class SplitMode(enum.Enum):
    CONCATENATED = "concatenated"
    RANDOM = "random"


@dataclass(frozen=True)
class SplitSpec:
    exploratory: np.ndarray
    evaluation: np.ndarray
    mode: SplitMode


def make_split(dataset: CategoricalDataset, mode: SplitMode, rng: np.random.Generator | None = None,
               split_point: int | None = None) -> SplitSpec:
    """Exploratory/evaluation halves; an odd record goes to the evaluation half."""
    n = dataset.n
    if n < 2:
        raise ValueError("need at least two records to split")
    half = n // 2 if split_point is None else split_point
    if not 0 < half < n:
        raise ValueError("split point must leave both halves non-empty")
    if mode is SplitMode.CONCATENATED:
        ids = np.arange(n)
    else:
        if rng is None:
            raise ValueError("random split needs an rng")
        ids = rng.permutation(n)
    return SplitSpec(np.sort(ids[:half]), np.sort(ids[half:]), mode)


@dataclass
class HoldoutResult:
    outcome: CorrectionOutcome
    exploratory: CategoricalDataset
    evaluation: CategoricalDataset
    mined: list[MinedPattern]
    exploratory_rules: list[TestedRule]
    survivors: list[int]
    evaluation_rules: list[TestedRule]


def evaluate_patterns(
    patterns: Sequence[tuple[int, ...]],
    classes: Sequence[int],
    dataset: CategoricalDataset,
    scorer=None,
) -> list[TestedRule]:
    """Re-test each (pattern, class) on ``dataset``; ``pattern_index`` is the position."""
    if scorer is None:
        scorer = make_scorer(dataset)
    out = []
    for i, (items, c) in enumerate(zip(patterns, classes)):
        tids = dataset.tids_of(items)
        sx = len(tids)
        k = int(np.count_nonzero(dataset.labels[tids] == c))
        out.append(TestedRule(i, c, sx, k, scorer.p_value(c, k, sx) if sx else 1.0))
    return out


def holdout_run(
    dataset: CategoricalDataset,
    split: SplitSpec,
    alpha: float,
    min_sup: int,
    target: str = "fwer",
    min_conf: float = 0.0,
    static_bytes: int = DEFAULT_STATIC_BYTES,
) -> HoldoutResult:
    """Mine the exploratory half, pass rules with p <= alpha, re-test and correct.

    The exploratory half is mined at ``ceil(min_sup / 2)``.  Survivors are
    re-tested on the evaluation half with that half's own ``n`` and class
    counts, then Bonferroni-corrected over the survivor count (``target='fwer'``)
    or passed through Benjamini-Hochberg (``target='fdr'``).
    """
    if len(split.exploratory) == 0 or len(split.evaluation) == 0:
        raise ValueError("both halves must be non-empty")
    if target not in ("fwer", "fdr"):
        raise ValueError("target must be 'fwer' or 'fdr'")
    hd = split.mode is SplitMode.CONCATENATED
    method = {
        (True, "fwer"): Method.HD_BC, (True, "fdr"): Method.HD_BH,
        (False, "fwer"): Method.RH_BC, (False, "fdr"): Method.RH_BH,
    }[hd, target]
    explo = dataset.subset(split.exploratory)
    evalu = dataset.subset(split.evaluation)
    half_sup = min(max(1, math.ceil(min_sup / 2)), explo.n)
    mined = mine_closed(explo, half_sup)
    explo_rules = score_rules(mined, explo, make_scorer(explo, half_sup, static_bytes), min_conf)
    survivors = [i for i, r in enumerate(explo_rules) if r.p_value <= alpha]
    eval_rules = evaluate_patterns(
        [mined[explo_rules[i].pattern_index].items for i in survivors],
        [explo_rules[i].class_index for i in survivors],
        evalu,
        make_scorer(evalu, 1, static_bytes),
    )
    if target == "fwer":
        outcome = bonferroni_select(eval_rules, alpha, len(eval_rules), method)
    else:
        outcome = bh_outcome(eval_rules, alpha, method)
    outcome.info["n_exploratory_tests"] = len(explo_rules)
    return HoldoutResult(outcome, explo, evalu, mined, explo_rules, survivors, eval_rules)
