"""Categorical, class-labelled datasets and CSV ingestion.

Every attribute-value pair is an *item* with a dense integer id.  Ids are
assigned attribute-major: all values of attribute 0 first (in
first-appearance order), then attribute 1, and so on.  A record therefore
holds exactly one item per attribute and is stored as one row of an
``(n, n_attributes)`` integer matrix of item ids.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class DatasetError(ValueError):
    """Raised when an input file cannot be turned into a categorical dataset."""


@dataclass(frozen=True)
class AttributeSchema:
    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        if not self.values:
            raise DatasetError(f"attribute {self.name!r} has no values")
        if len(set(self.values)) != len(self.values):
            raise DatasetError(f"attribute {self.name!r} has duplicate value labels")


@dataclass(frozen=True)
class Item:
    id: int
    attribute_index: int
    value_index: int


@dataclass(eq=False)
class CategoricalDataset:
    """Records over categorical attributes plus a class label per record.

    Parameters
    ----------
    schema : list of AttributeSchema
        One entry per attribute, values in id order.
    records : ndarray of shape (n, n_attributes)
        Item id of each cell.
    labels : ndarray of shape (n,)
        Class index of each record.
    class_names : list of str
        Class label text, indexed by class index.
    class_column : str
        Name of the class column when written back to CSV.
    """

    schema: list[AttributeSchema]
    records: np.ndarray
    labels: np.ndarray
    class_names: list[str]
    class_column: str = "class"
    offsets: np.ndarray = field(init=False, repr=False)
    class_counts: np.ndarray = field(init=False)

    def __post_init__(self):
        self.records = np.ascontiguousarray(self.records, dtype=np.int32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        cards = [len(a.values) for a in self.schema]
        self.offsets = np.concatenate([[0], np.cumsum(cards)]).astype(np.int32)
        n = len(self.labels)
        if self.records.shape != (n, len(self.schema)):
            raise DatasetError(
                f"records shape {self.records.shape} does not match "
                f"{n} labels x {len(self.schema)} attributes"
            )
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DatasetError("label index out of range")
        for a in range(len(self.schema)):
            col = self.records[:, a]
            if n and (col.min() < self.offsets[a] or col.max() >= self.offsets[a + 1]):
                raise DatasetError(f"column {a} holds an item id of another attribute")
        self.class_counts = np.bincount(self.labels, minlength=len(self.class_names)).astype(np.int64)
        self.records.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def n_attributes(self) -> int:
        return len(self.schema)

    @property
    def n_items(self) -> int:
        return int(self.offsets[-1])

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def item_id(self, attribute_index: int, value_index: int) -> int:
        if not 0 <= value_index < len(self.schema[attribute_index].values):
            raise IndexError(value_index)
        return int(self.offsets[attribute_index]) + value_index

    def item(self, item_id: int) -> Item:
        a = int(np.searchsorted(self.offsets, item_id, side="right")) - 1
        if not 0 <= a < self.n_attributes:
            raise IndexError(item_id)
        return Item(item_id, a, item_id - int(self.offsets[a]))

    def item_label(self, item_id: int) -> str:
        it = self.item(item_id)
        attr = self.schema[it.attribute_index]
        return f"{attr.name}={attr.values[it.value_index]}"

    def pattern_label(self, items: Iterable[int]) -> str:
        return ";".join(self.item_label(i) for i in items)

    def tids_of(self, items: Sequence[int]) -> np.ndarray:
        """Sorted ids of the records containing every item of ``items``."""
        if len(items) == 0:
            return np.arange(self.n)
        items = np.asarray(items, dtype=np.int32)
        attrs = np.searchsorted(self.offsets, items, side="right") - 1
        mask = np.all(self.records[:, attrs] == items, axis=1)
        return np.flatnonzero(mask)

    def subset(self, indices: Sequence[int]) -> "CategoricalDataset":
        """Dataset restricted to ``indices`` (re-numbered 0..k-1), same schema."""
        idx = np.asarray(indices, dtype=np.int64)
        return CategoricalDataset(
            self.schema, self.records[idx], self.labels[idx], list(self.class_names), self.class_column
        )

    def with_labels(self, labels: np.ndarray) -> "CategoricalDataset":
        return CategoricalDataset(self.schema, self.records, labels, list(self.class_names), self.class_column)

    def equals(self, other: "CategoricalDataset") -> bool:
        return (
            self.schema == other.schema
            and self.class_names == other.class_names
            and np.array_equal(self.records, other.records)
            and np.array_equal(self.labels, other.labels)
        )


def class_distribution(dataset: CategoricalDataset) -> list[int]:
    """Number of records per class, indexed by class index."""
    return [int(c) for c in dataset.class_counts]


def _looks_continuous(values: Sequence[str]) -> bool:
    try:
        nums = [float(v) for v in values]
    except ValueError:
        return False
    return any(not x.is_integer() for x in nums if np.isfinite(x))


def load_csv(
    path: str | os.PathLike,
    class_column: str = "class",
    header: bool = True,
    delimiter: str = ",",
) -> CategoricalDataset:
    """Read a categorical CSV file.

    Without a header row, columns are named by their 0-based position
    (``"0"``, ``"1"``, ...) and ``class_column`` must be one of those names.

    Raises
    ------
    DatasetError
        On an empty file, a missing class column, ragged rows, blank cells
        or a column that looks continuous (non-integral numbers).
    """
    if not os.path.exists(path):
        raise DatasetError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter)]
    # a trailing empty line is not a record
    while rows and rows[-1] == []:
        rows.pop()
    if not rows:
        raise DatasetError(f"{path}: empty file")
    first_line = 1
    if header:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_line = 2
        if not rows:
            raise DatasetError(f"{path}: header but no records")
    else:
        names = [str(i) for i in range(len(rows[0]))]
    if len(set(names)) != len(names):
        raise DatasetError(f"{path}: duplicate column names")
    if class_column not in names:
        raise DatasetError(f"{path}: class column {class_column!r} not found in {names}")
    width = len(names)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DatasetError(
                f"{path}: line {r + first_line} has {len(row)} fields, expected {width}"
            )
        for c, cell in enumerate(row):
            if cell.strip() == "":
                raise DatasetError(f"{path}: line {r + first_line}, column {names[c]!r} is blank")
    cls = names.index(class_column)
    columns = [[row[c].strip() for row in rows] for c in range(width)]
    for c, col in enumerate(columns):
        if c != cls and _looks_continuous(col):
            raise DatasetError(
                f"{path}: column {names[c]!r} looks continuous; discretize it before loading"
            )
    return from_columns(
        {names[c]: columns[c] for c in range(width) if c != cls},
        columns[cls],
        class_column=class_column,
    )


def from_columns(
    attributes: dict[str, Sequence[str]],
    labels: Sequence[str],
    class_column: str = "class",
) -> CategoricalDataset:
    """Build a dataset from text columns, encoding values in first-appearance order."""
    n = len(labels)
    if n == 0:
        raise DatasetError("no records")
    schema = []
    codes = []
    offset = 0
    for name, col in attributes.items():
        if len(col) != n:
            raise DatasetError(f"column {name!r} has {len(col)} values, expected {n}")
        index: dict[str, int] = {}
        code = np.empty(n, dtype=np.int32)
        for r, v in enumerate(col):
            code[r] = index.setdefault(v, len(index))
        schema.append(AttributeSchema(name, tuple(index)))
        codes.append(code + offset)
        offset += len(index)
    class_index: dict[str, int] = {}
    lab = np.array([class_index.setdefault(v, len(class_index)) for v in labels], dtype=np.int32)
    records = np.stack(codes, axis=1) if codes else np.empty((n, 0), dtype=np.int32)
    return CategoricalDataset(schema, records, lab, list(class_index), class_column)


def write_csv(dataset: CategoricalDataset, path, delimiter: str = ",") -> None:
    """Write ``dataset`` (to a path or an open text handle) with a header row.

    The class column goes last.
    """
    if hasattr(path, "write"):
        _write_rows(dataset, path, delimiter)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(dataset, fh, delimiter)


def _write_rows(dataset, fh, delimiter):
    values = [np.array(a.values, dtype=object) for a in dataset.schema]
    w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
    w.writerow([a.name for a in dataset.schema] + [dataset.class_column])
    cols = [values[a][dataset.records[:, a] - dataset.offsets[a]] for a in range(dataset.n_attributes)]
    names = np.array(dataset.class_names, dtype=object)[dataset.labels]
    for r in range(dataset.n):
        w.writerow([c[r] for c in cols] + [names[r]])
