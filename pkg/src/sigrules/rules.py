"""Turning mined patterns into tested class association rules."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .dataset import CategoricalDataset
from .fisher import DEFAULT_STATIC_BYTES, RuleScorer
from .miner import MinedPattern


@dataclass(frozen=True)
class TestedRule:
    __test__ = False  # not a pytest class

    pattern_index: int
    class_index: int
    coverage: int
    support: int
    p_value: float

    @property
    def confidence(self) -> float:
        return self.support / self.coverage if self.coverage else 0.0


def rule_classes(class_support: np.ndarray, coverage: int, class_counts, n: int) -> list[int]:
    """Classes a pattern is tested against.

    With two classes one rule per pattern is tested; it is reported for the
    class the pattern is positively associated with (ties go to class 0).
    """
    m = len(class_counts)
    if m > 2:
        return list(range(m))
    if m == 1:
        return [0]
    return [0] if class_support[0] * n >= coverage * class_counts[0] else [1]


def make_scorer(dataset: CategoricalDataset, min_sup: int = 1,
                static_bytes: int = DEFAULT_STATIC_BYTES, dynamic: bool = True) -> RuleScorer:
    return RuleScorer(dataset.n, dataset.class_counts, min_sup, static_bytes, dynamic)


def score_rules(
    mined: list[MinedPattern],
    dataset: CategoricalDataset,
    scorer: RuleScorer | None = None,
    min_conf: float = 0.0,
) -> list[TestedRule]:
    """One :class:`TestedRule` per (pattern, tested class), in mining order.

    Rules below ``min_conf`` are dropped before any correction sees them.
    """
    if scorer is None:
        scorer = make_scorer(dataset, min((m.support for m in mined), default=1))
    out = []
    counts = dataset.class_counts
    for i, node in enumerate(mined):
        for c in rule_classes(node.class_support, node.support, counts, dataset.n):
            k = int(node.class_support[c])
            if node.support and k / node.support < min_conf:
                continue
            out.append(TestedRule(i, c, node.support, k, scorer.p_value(c, k, node.support)))
    return out


TSV_HEADER = ["pattern", "class", "coverage", "support", "confidence", "p_value"]


def write_rules_tsv(
    rules: Iterable[TestedRule],
    patterns: Sequence,
    dataset: CategoricalDataset,
    fh: TextIO,
    extra: dict | None = None,
) -> None:
    """Rule table, one line per rule.

    ``patterns[r.pattern_index]`` is either a :class:`MinedPattern` or a
    tuple of item ids.  ``extra`` maps column name to per-rule values.
    """
    rules = list(rules)
    extra = extra or {}
    fh.write("\t".join(TSV_HEADER + list(extra)) + "\n")
    for j, r in enumerate(rules):
        row = [
            dataset.pattern_label(_items(patterns[r.pattern_index])),
            dataset.class_names[r.class_index],
            str(r.coverage),
            str(r.support),
            f"{r.confidence:.6g}",
            f"{r.p_value:.6g}",
        ]
        row += [str(v[j]) for v in extra.values()]
        fh.write("\t".join(row) + "\n")


def _items(p):
    return p.items if isinstance(p, MinedPattern) else p


def rules_tsv(rules, mined, dataset) -> str:
    buf = io.StringIO()
    write_rules_tsv(rules, mined, dataset, buf)
    return buf.getvalue()


def sort_by_p(rules: list[TestedRule]) -> list[TestedRule]:
    return sorted(rules, key=lambda r: (r.p_value, r.pattern_index, r.class_index))
