"""Synthetic categorical datasets with embedded class association rules.

Records start with evenly distributed class labels.  Each embedded rule
``X_t => c_t`` writes its pattern into a set of covered records (disjoint
between rules) and relabels them so that a chosen fraction carries
``c_t``.  All remaining cells are drawn uniformly from their attribute's
values, after which records that picked up an embedded pattern by chance
are repaired, so the covered set is exactly the set of records holding
the pattern.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import AttributeSchema, CategoricalDataset


class SynthError(ValueError):
    pass


@dataclass
class SynthParams:
    """Generator settings; defaults give 2000 records over 40 attributes."""

    n_records: int = 2000
    n_classes: int = 2
    n_attributes: int = 40
    min_v: int = 2
    max_v: int = 8
    n_rules: int = 0
    min_l: int = 2
    max_l: int = 16
    min_s: int = 400
    max_s: int = 400
    min_c: float = 0.6
    max_c: float = 0.6
    seed: int | None = None

    def validate(self) -> None:
        for lo, hi in [("min_v", "max_v"), ("min_l", "max_l"), ("min_s", "max_s"), ("min_c", "max_c")]:
            if getattr(self, lo) > getattr(self, hi):
                raise SynthError(f"{lo} > {hi}")
        if self.n_records < 1 or self.n_attributes < 1:
            raise SynthError("need at least one record and one attribute")
        if self.n_classes < 1:
            raise SynthError("need at least one class")
        if self.min_v < 1:
            raise SynthError("min_v must be >= 1")
        if self.n_rules < 0:
            raise SynthError("n_rules must be >= 0")
        if self.n_rules:
            if self.min_l < 1 or self.max_l > self.n_attributes:
                raise SynthError("rule length must lie in [1, n_attributes]")
            if self.min_s < 1 or self.max_s > self.n_records:
                raise SynthError("rule coverage must lie in [1, n_records]")
            if not (0.0 <= self.min_c and self.max_c <= 1.0):
                raise SynthError("rule confidence must lie in [0, 1]")
            if self.n_rules * self.max_s > self.n_records:
                raise SynthError(
                    f"{self.n_rules} disjoint rules of coverage up to {self.max_s} "
                    f"do not fit in {self.n_records} records"
                )
            if self.max_v < 2:
                raise SynthError("embedding rules needs attributes with at least 2 values")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EmbeddedRule:
    items: tuple[int, ...]
    class_index: int
    covered_tids: np.ndarray
    target_confidence: float
    n_target: int = field(default=0)

    @property
    def coverage(self) -> int:
        return len(self.covered_tids)

    @property
    def confidence(self) -> float:
        return self.n_target / self.coverage

    def to_dict(self, dataset: CategoricalDataset | None = None) -> dict:
        d = {
            "items": list(self.items),
            "class": self.class_index,
            "covered_tids": [int(t) for t in self.covered_tids],
            "coverage": self.coverage,
            "support": self.n_target,
            "confidence": self.confidence,
            "target_confidence": self.target_confidence,
        }
        if dataset is not None:
            d["pattern"] = dataset.pattern_label(self.items)
            d["class_name"] = dataset.class_names[self.class_index]
        return d


@dataclass(frozen=True)
class _RuleDef:
    attrs: tuple[int, ...]
    values: tuple[int, ...]
    class_index: int
    coverage: int
    confidence: float


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _draw_rules(params, cards, rng, coverage_bounds):
    defs: list[_RuleDef] = []
    patterns: list[set] = []
    lo_s, hi_s = coverage_bounds
    for _ in range(params.n_rules):
        for _attempt in range(1000):
            length = int(rng.integers(params.min_l, params.max_l + 1))
            attrs = np.sort(rng.choice(params.n_attributes, size=length, replace=False))
            attrs = [a for a in attrs.tolist()]
            if all(cards[a] < 2 for a in attrs):
                continue
            values = [int(rng.integers(cards[a])) for a in attrs]
            pat = set(zip(attrs, values))
            # no pattern may contain another, or covered records could not be repaired
            if any(pat <= q or q <= pat for q in patterns):
                continue
            break
        else:
            raise SynthError("could not draw non-nested rule patterns")
        patterns.append(pat)
        s = int(rng.integers(lo_s, hi_s + 1))
        f = float(rng.uniform(params.min_c, params.max_c)) if params.max_c > params.min_c else float(params.min_c)
        c = int(rng.integers(params.n_classes))
        defs.append(_RuleDef(tuple(attrs), tuple(values), c, s, f))
    return defs


def _fill(n, cards, n_classes, defs, rng):
    """Value-index matrix, labels and per-rule (covered ids, n_target)."""
    n_attr = len(cards)
    labels = rng.permutation(np.arange(n) % n_classes).astype(np.int32)
    values = np.zeros((n, n_attr), dtype=np.int32)
    written = np.zeros((n, n_attr), dtype=bool)
    free = np.ones(n, dtype=bool)
    placed = []
    for d in defs:
        pool = np.flatnonzero(free)
        if len(pool) < d.coverage:
            raise SynthError("not enough uncovered records for rule placement")
        covered = np.sort(rng.choice(pool, size=d.coverage, replace=False))
        free[covered] = False
        attrs = list(d.attrs)
        values[np.ix_(covered, attrs)] = d.values
        written[np.ix_(covered, attrs)] = True
        n_target = _round_half_up(d.confidence * d.coverage)
        order = rng.permutation(covered)
        others = [c for c in range(n_classes) if c != d.class_index]
        labels[order[:n_target]] = d.class_index
        rest = order[n_target:]
        if others:
            labels[rest] = np.array(others, dtype=np.int32)[np.arange(len(rest)) % len(others)]
        else:
            n_target = d.coverage
        placed.append((covered, n_target))
    card_arr = np.asarray(cards)
    random_cells = (rng.random((n, n_attr)) * card_arr).astype(np.int32)
    values = np.where(written, values, random_cells)
    # repair records that contain an embedded pattern without being covered
    # by it; one repair may create another occurrence, so loop to a fixed point
    covered_by = np.full(n, -1)
    for j, (covered, _) in enumerate(placed):
        covered_by[covered] = j
    changed = True
    while changed:
        changed = False
        for j, d in enumerate(defs):
            attrs = np.array(d.attrs)
            hits = np.flatnonzero(np.all(values[:, attrs] == np.array(d.values), axis=1) & (covered_by != j))
            for r in hits:
                choices = [i for i, a in enumerate(d.attrs) if not written[r, a] and cards[a] > 1]
                if not choices:
                    raise SynthError("cannot break an accidental pattern occurrence")
                i = choices[int(rng.integers(len(choices)))]
                a = d.attrs[i]
                v = int(rng.integers(cards[a] - 1))
                values[r, a] = v if v < d.values[i] else v + 1
                changed = True
    return values, labels, placed


def _dataset(values, labels, cards, n_classes):
    schema = [AttributeSchema(f"A{a}", tuple(f"v{v}" for v in range(k))) for a, k in enumerate(cards)]
    offsets = np.concatenate([[0], np.cumsum(cards)])[:-1].astype(np.int32)
    return CategoricalDataset(schema, values + offsets, labels, [f"c{c}" for c in range(n_classes)])


def _rules_out(defs, placed, cards):
    offsets = np.concatenate([[0], np.cumsum(cards)])[:-1]
    out = []
    for d, (covered, n_target) in zip(defs, placed):
        items = tuple(int(offsets[a] + v) for a, v in zip(d.attrs, d.values))
        out.append(EmbeddedRule(items, d.class_index, np.asarray(covered), d.confidence, int(n_target)))
    return out


def _rng(params, seed):
    s = params.seed if seed is None else seed
    return np.random.Generator(np.random.PCG64(s))


def _cards(params, rng):
    return [int(c) for c in rng.integers(params.min_v, params.max_v + 1, size=params.n_attributes)]


def generate(params: SynthParams, seed: int | None = None) -> tuple[CategoricalDataset, list[EmbeddedRule]]:
    """Random dataset with ``params.n_rules`` embedded rules and their ground truth."""
    params.validate()
    rng = _rng(params, seed)
    cards = _cards(params, rng)
    defs = _draw_rules(params, cards, rng, (params.min_s, params.max_s))
    values, labels, placed = _fill(params.n_records, cards, params.n_classes, defs, rng)
    return _dataset(values, labels, cards, params.n_classes), _rules_out(defs, placed, cards)


def generate_split_pair(
    params: SynthParams, seed: int | None = None
) -> tuple[CategoricalDataset, list[EmbeddedRule], int]:
    """Two independently filled halves sharing schema and rules, concatenated.

    Each embedded rule gets the same half-coverage in both halves, so the
    first ``N/2`` records form a fair exploratory set and the rest the
    evaluation set.  Returns the dataset, the ground truth over the whole
    dataset and the split point.
    """
    params.validate()
    if params.n_records % 2:
        raise SynthError("split pairs need an even number of records")
    half = params.n_records // 2
    lo_s, hi_s = math.ceil(params.min_s / 2), params.max_s // 2
    if params.n_rules and (lo_s < 1 or lo_s > hi_s):
        raise SynthError("coverage bounds cannot be halved")
    if params.n_rules * hi_s > half:
        raise SynthError("halved rules do not fit in a half")
    rng = _rng(params, seed)
    cards = _cards(params, rng)
    defs = _draw_rules(params, cards, rng, (lo_s, hi_s))
    v1, l1, p1 = _fill(half, cards, params.n_classes, defs, rng)
    v2, l2, p2 = _fill(half, cards, params.n_classes, defs, rng)
    placed = [
        (np.concatenate([c1, c2 + half]), t1 + t2) for (c1, t1), (c2, t2) in zip(p1, p2)
    ]
    data = _dataset(np.vstack([v1, v2]), np.concatenate([l1, l2]), cards, params.n_classes)
    return data, _rules_out(defs, placed, cards), half
