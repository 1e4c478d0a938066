"""Closed frequent pattern mining over a set-enumeration tree.

The tree is explored depth first with prefix-preserving closure extension:
a closed pattern ``P`` grown by a frequent item ``e`` (greater than the item
that created ``P``) yields the child ``clo(P + e)`` only if the closure adds
no item smaller than ``e``.  Every closed frequent pattern is produced exactly
once, and its tree parent is itself closed (or the virtual root standing for
the whole dataset).

Each node keeps its record ids either in full or as a Diffset against its
parent, so that class counts under any relabelling can be derived from the
parent's counts.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dataset import CategoricalDataset

ROOT = -1


class TidKind(enum.Enum):
    FULL = "full"
    DIFF = "diff"


@dataclass(frozen=True)
class TidRepresentation:
    """``FULL``: ids of the records holding the pattern.
    ``DIFF``: ids of records holding the parent but not the pattern."""

    kind: TidKind
    ids: np.ndarray
    parent: int = ROOT


@dataclass(frozen=True)
class MinedPattern:
    items: tuple[int, ...]
    support: int
    tids: TidRepresentation
    class_support: np.ndarray

    @property
    def length(self) -> int:
        return len(self.items)

    @property
    def parent(self) -> int:
        return self.tids.parent


def choose_representation(parent_support: int, child_support: int) -> TidKind:
    """Full id list when the child keeps at most half of the parent's records."""
    if not 0 < child_support <= parent_support:
        raise ValueError(f"need 0 < child ({child_support}) <= parent ({parent_support})")
    return TidKind.FULL if 2 * child_support <= parent_support else TidKind.DIFF


def mine_closed(dataset: CategoricalDataset, min_sup: int) -> list[MinedPattern]:
    """All closed patterns with support >= ``min_sup``, in depth-first tree order.

    The empty pattern is never reported; the closure of the empty set is
    reported when it is non-empty (items shared by every record).
    """
    n = dataset.n
    if not 1 <= min_sup <= n:
        raise ValueError(f"min_sup must be in [1, {n}], got {min_sup}")
    labels = dataset.labels
    m = dataset.n_classes
    supports = np.bincount(dataset.records.ravel(), minlength=dataset.n_items)
    frequent = np.flatnonzero(supports >= min_sup)
    out: list[MinedPattern] = []
    if frequent.size == 0:
        return out
    # one-hot incidence restricted to frequent items; float32 keeps the
    # co-occurrence products on BLAS and is exact for counts < 2**24
    local = np.full(dataset.n_items, -1, dtype=np.int64)
    local[frequent] = np.arange(frequent.size)
    inc = np.zeros((n, frequent.size), dtype=np.float32)
    rows, cols = np.nonzero(local[dataset.records] >= 0)
    inc[rows, local[dataset.records[rows, cols]]] = 1.0
    n_local = frequent.size

    def emit(mask, tids, parent, parent_tids, diff_ids):
        support = len(tids)
        kind = choose_representation(len(parent_tids), support)
        ids = tids if kind is TidKind.FULL else diff_ids
        ids = np.ascontiguousarray(ids, dtype=np.int32)
        ids.setflags(write=False)
        cs = np.bincount(labels[tids], minlength=m).astype(np.int64)
        cs.setflags(write=False)
        out.append(MinedPattern(
            tuple(int(i) for i in frequent[mask]), support, TidRepresentation(kind, ids, parent), cs
        ))
        return len(out) - 1

    def expand(mask, tids, core, node):
        sub = inc[tids]
        counts = sub.sum(axis=0)
        order = np.arange(n_local)
        cand = np.flatnonzero((order > core) & ~mask & (counts >= min_sup))
        if cand.size == 0:
            return
        co = sub[:, cand].T @ sub
        closures = co == counts[cand][:, None]
        for row, e in enumerate(cand):
            clo = closures[row]
            if (clo[:e] != mask[:e]).any():
                continue
            hit = sub[:, e] > 0
            child_tids = tids[hit]
            child = emit(clo, child_tids, node, tids, tids[~hit])
            expand(clo, child_tids, e, child)

    all_tids = np.arange(n)
    root_mask = supports[frequent] == n
    node = ROOT
    if root_mask.any():
        node = emit(root_mask, all_tids, ROOT, all_tids, all_tids[:0])
    expand(root_mask, all_tids, -1, node)
    return out


def reconstruct_tids(mined: list[MinedPattern], n: int) -> list[np.ndarray]:
    """Full record-id arrays for every node, resolving Diffset chains."""
    full: list[np.ndarray] = []
    everything = np.arange(n, dtype=np.int32)
    for node in mined:
        rep = node.tids
        if rep.kind is TidKind.FULL:
            full.append(rep.ids)
        else:
            parent = everything if rep.parent == ROOT else full[rep.parent]
            full.append(np.setdiff1d(parent, rep.ids, assume_unique=True))
    return full


def class_support_under_labels(
    node: MinedPattern,
    labels: np.ndarray,
    n_classes: int,
    parent_counts: np.ndarray | None = None,
) -> np.ndarray:
    """Per-class support of ``node`` when records carry ``labels``.

    A Diff node needs ``parent_counts``, the counts of its parent under the
    same labels (for the virtual root, the class distribution of ``labels``).
    """
    rep = node.tids
    counts = np.bincount(labels[rep.ids], minlength=n_classes)
    if rep.kind is TidKind.FULL:
        return counts
    if parent_counts is None:
        if rep.parent != ROOT:
            raise ValueError("Diff node needs its parent's counts")
        parent_counts = np.bincount(labels, minlength=n_classes)
    return np.asarray(parent_counts) - counts


def count_rules_per_pattern(n_classes: int) -> int:
    return 1 if n_classes <= 2 else n_classes
