"""Tabular datasets: schemas, CSV ingestion, filtering and export."""

from __future__ import annotations

import csv
import json
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import ContractError, CriterionSpec, Direction, LearningSet, widen_constant

ROLES = ("id", "criterion", "category")
OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge,
       "==": operator.eq, "!=": operator.ne}


class SchemaError(ContractError):
    pass


class DataError(ContractError):
    """A problem with the data itself; ``line`` is 1-based in the file when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class Column:
    name: str
    role: str
    direction: Direction = Direction.UNKNOWN
    min: Optional[float] = None
    max: Optional[float] = None


@dataclass
class DatasetSchema:
    """Column roles plus an optional label-to-category map.

    CSV columns absent from the schema are carried along but not learned on.
    Without ``category_map`` the category cells must be integers.
    """

    columns: list[Column]
    category_map: Optional[dict[str, int]] = None

    def __post_init__(self):
        for c in self.columns:
            if c.role not in ROLES:
                raise SchemaError(f"column {c.name!r}: unknown role {c.role!r}")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")
        if sum(c.role == "category" for c in self.columns) != 1:
            raise SchemaError("schema needs exactly one category column")
        if not self.criteria:
            raise SchemaError("schema needs at least one criterion column")
        if sum(c.role == "id" for c in self.columns) > 1:
            raise SchemaError("schema allows at most one id column")

    @property
    def criteria(self) -> list[Column]:
        return [c for c in self.columns if c.role == "criterion"]

    @property
    def category(self) -> Column:
        return next(c for c in self.columns if c.role == "category")

    @property
    def id_column(self) -> Optional[Column]:
        return next((c for c in self.columns if c.role == "id"), None)

    def criterion_names(self) -> list[str]:
        return [c.name for c in self.criteria]

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSchema":
        cols = []
        for c in d["columns"]:
            cols.append(Column(c["name"], c.get("role", "criterion"),
                               Direction.parse(c.get("direction", "unknown")),
                               c.get("min"), c.get("max")))
        cmap = d.get("category_map")
        return cls(cols, {str(k): int(v) for k, v in cmap.items()} if cmap else None)

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            entry = {"name": c.name, "role": c.role}
            if c.role == "criterion":
                entry["direction"] = c.direction.value
                if c.min is not None:
                    entry["min"] = c.min
                if c.max is not None:
                    entry["max"] = c.max
            cols.append(entry)
        out = {"columns": cols}
        if self.category_map:
            out["category_map"] = dict(self.category_map)
        return out

    @classmethod
    def for_criteria(cls, names: Sequence[str], directions=None,
                     category: str = "category", id_column: Optional[str] = "id",
                     scales: Optional[Sequence[tuple[float, float]]] = None):
        """Plain schema with integer categories, as written by :func:`write_csv`."""
        directions = directions or [Direction.UNKNOWN] * len(names)
        scales = scales or [(None, None)] * len(names)
        cols = [Column(id_column, "id")] if id_column else []
        cols += [Column(n, "criterion", Direction(d), lo, hi)
                 for n, d, (lo, hi) in zip(names, directions, scales)]
        cols.append(Column(category, "category"))
        return cls(cols)


def load_schema(path) -> DatasetSchema:
    with open(path, encoding="utf-8") as fh:
        return DatasetSchema.from_dict(json.load(fh))


def save_schema(schema: DatasetSchema, path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass
class Dataset:
    learning_set: LearningSet
    criteria: list[CriterionSpec]
    directions: list[Direction]
    # raw category label of each row, before mapping
    labels: list[str] = field(default_factory=list)


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError("file is empty, a header line is required")
        rows = [(reader.line_num, row) for row in reader if row]
    return header, rows


def _map_category(label: str, schema: DatasetSchema, line: int) -> int:
    label = label.strip()
    if schema.category_map is not None:
        if label not in schema.category_map:
            raise DataError(f"category label {label!r} has no mapping", line)
        return schema.category_map[label]
    try:
        return int(label)
    except ValueError:
        raise DataError(f"category {label!r} is not an integer", line) from None


def load_csv(path, schema: DatasetSchema) -> Dataset:
    """Read a comma-separated file with header into a :class:`Dataset`.

    Criterion scales come from the schema when given, else from the data.
    """
    header, rows = _read_rows(path)
    index = {name: k for k, name in enumerate(header)}
    missing = [c.name for c in schema.columns if c.name not in index]
    if missing:
        raise SchemaError(f"columns missing from {path}: {', '.join(missing)}")
    if not rows:
        raise DataError(f"{path} has a header but no rows; the learning set would be empty")
    crit_cols = schema.criteria
    evals, cats, ids, labels = [], [], [], []
    id_col = schema.id_column
    for line, row in rows:
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} cells, found {len(row)}", line)
        vals = []
        for col in crit_cols:
            cell = row[index[col.name]]
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(f"column {col.name!r}: {cell!r} is not a number", line) from None
            if vals[-1] != vals[-1] or vals[-1] in (float("inf"), float("-inf")):
                raise DataError(f"column {col.name!r}: non-finite value {cell!r}", line)
            if (col.min is not None and vals[-1] < col.min) or \
                    (col.max is not None and vals[-1] > col.max):
                raise DataError(f"column {col.name!r}: {cell} outside [{col.min}, {col.max}]", line)
        raw_label = row[index[schema.category.name]]
        cats.append(_map_category(raw_label, schema, line))
        labels.append(raw_label.strip())
        evals.append(vals)
        ids.append(row[index[id_col.name]] if id_col else str(line - 1))
    X = np.array(evals, dtype=float)
    specs = []
    for k, col in enumerate(crit_cols):
        lo = col.min if col.min is not None else float(X[:, k].min())
        hi = col.max if col.max is not None else float(X[:, k].max())
        if lo == hi:
            lo, hi = widen_constant(lo)
        specs.append(CriterionSpec(col.name, lo, hi))
    ls = LearningSet.from_arrays(X, cats, ids)
    return Dataset(ls, specs, [c.direction for c in crit_cols], labels)


def write_csv(path, ls: LearningSet, names: Sequence[str], *, id_column: str = "id",
              category_column: str = "category") -> None:
    """Write evaluations with ``repr`` floats so a reload is bit-exact."""
    if len(names) != ls.n_criteria:
        raise ContractError("one column name per criterion is required")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([id_column, *names, category_column])
        for alt, cat in zip(ls.alternatives, ls.categories):
            w.writerow([alt.id, *(repr(float(v)) for v in alt.evals), cat])


# --- filtering -------------------------------------------------------------

def _compile(predicate: dict, names: Sequence[str]):
    conds = []
    for c in predicate.get("conditions", []):
        if c["criterion"] not in names:
            raise SchemaError(f"predicate refers to unknown criterion {c['criterion']!r}")
        if c["op"] not in OPS:
            raise SchemaError(f"unknown comparator {c['op']!r}")
        conds.append((list(names).index(c["criterion"]), OPS[c["op"]], float(c["value"])))
    cats = predicate.get("category")
    cats = None if cats is None else {int(x) for x in (cats if isinstance(cats, list) else [cats])}

    def matches(evals, cat) -> bool:
        if cats is not None and cat not in cats:
            return False
        return all(op(evals[k], value) for k, op, value in conds)
    return matches


def filter_rows(ls: LearningSet, names: Sequence[str], predicate: dict) -> LearningSet:
    """Drop the examples matching ``predicate``.

    ``predicate`` is ``{"category": [..], "conditions": [{"criterion", "op", "value"}]}``;
    a row matches when its category is listed (or no list is given) and
    every condition holds.
    """
    matches = _compile(predicate, names)
    keep = [not matches(a.evals, c) for a, c in zip(ls.alternatives, ls.categories)]
    return ls.subset(keep)


def filter_csv(src, dst, schema: DatasetSchema, predicate: dict) -> tuple[int, int]:
    """Row filter at file level: surviving lines are copied verbatim.

    Returns ``(rows_in, rows_out)``.
    """
    data = load_csv(src, schema)
    matches = _compile(predicate, schema.criterion_names())
    keep = [not matches(a.evals, c) for a, c in
            zip(data.learning_set.alternatives, data.learning_set.categories)]
    with open(src, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines(keepends=True)
    body = [ln for ln in lines[1:] if ln.strip()]
    with open(dst, "w", newline="", encoding="utf-8") as out:
        out.write(lines[0])
        out.writelines(ln for ln, k in zip(body, keep) if k)
    return len(keep), sum(keep)


def load_predicate(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def distinct_counts(ls: LearningSet) -> list[int]:
    """Number of distinct values taken by each criterion."""
    return [len(np.unique(ls.evals[:, i])) for i in range(ls.n_criteria)]
