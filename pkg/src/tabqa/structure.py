"""Header prediction and hierarchical row flattening.

Turns a normalized :class:`~tabqa.ingest.Grid` into a :class:`StructuredTable`
(column names plus flat data rows) ready for linearization.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

from .ingest import Cell, Grid

LOGGER = logging.getLogger(__name__)

TABLE_SCHEMA = "table/1"
DEFAULT_PLACEHOLDERS: frozenset[str] = frozenset({"—", "–", "-", "."})
MAX_HEADER_ROWS = 5


class EmptyGrid(ValueError):
    pass


class HeaderCondition(str, enum.Enum):
    COLUMN_SPAN = "ColumnSpan"
    NAN_CELL = "NanCell"
    DUPLICATE_VALUE = "DuplicateValue"
    FALLBACK = "Fallback"


class Algorithm(str, enum.Enum):
    V1 = "v1"
    V2 = "v2"


@dataclass(frozen=True)
class HierarchyOptions:
    algorithm: Algorithm = Algorithm.V1
    indent_threshold: float = 10.0
    separator: str = " - "
    drop_label_rows: bool = True
    placeholders: frozenset[str] = DEFAULT_PLACEHOLDERS

    def __post_init__(self) -> None:
        if self.indent_threshold < 0:
            raise ValueError("indent_threshold must be >= 0")
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))


@dataclass(frozen=True)
class HeaderPrediction:
    header_row_count: int
    triggered_conditions: tuple[frozenset[HeaderCondition], ...]


@dataclass
class StructuredTable:
    columns: list[str]
    rows: list[list[str]] = field(default_factory=list)
    header_row_count: int = 1
    provenance: list[list[tuple[int, int]]] = field(default_factory=list)
    dropped_label_rows: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"row {i} has {len(row)} cells, expected {width}")

    def to_json(self) -> dict:
        return {
            "schema": TABLE_SCHEMA,
            "columns": list(self.columns),
            "rows": [list(r) for r in self.rows],
            "header_row_count": self.header_row_count,
            "dropped_label_rows": list(self.dropped_label_rows),
            "provenance": [[[r, c] for r, c in row] for row in self.provenance],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "StructuredTable":
        schema = data.get("schema", TABLE_SCHEMA)
        if schema != TABLE_SCHEMA:
            raise ValueError(f"unsupported table schema {schema!r}")
        return cls(
            columns=list(data["columns"]),
            rows=[list(r) for r in data.get("rows", [])],
            header_row_count=data.get("header_row_count", 1),
            provenance=[[(r, c) for r, c in row] for row in data.get("provenance", [])],
            dropped_label_rows=list(data.get("dropped_label_rows", [])),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return buf.getvalue()


def dumps_table(table: StructuredTable) -> str:
    return json.dumps(table.to_json(), ensure_ascii=False)


def is_empty_cell(cell: Cell, placeholders: Iterable[str] = DEFAULT_PLACEHOLDERS) -> bool:
    text = cell.text.strip()
    return text == "" or text in placeholders


def _distinct(row: Sequence[Cell]) -> list[Cell]:
    seen: list[Cell] = []
    for cell in row:
        if not any(cell is s for s in seen):
            seen.append(cell)
    return seen


def _header_conditions(row: Sequence[Cell]) -> frozenset[HeaderCondition]:
    cells = _distinct(row)
    found = set()
    if any(c.col_span > 1 for c in cells):
        found.add(HeaderCondition.COLUMN_SPAN)
    # "missing value" means nothing in the cell at all; dash placeholders are
    # values in financial tables and must not turn data rows into headers
    if any(c.text == "" for c in cells):
        found.add(HeaderCondition.NAN_CELL)
    texts = [c.text for c in cells if c.text]
    if len(set(texts)) < len(texts):
        found.add(HeaderCondition.DUPLICATE_VALUE)
    return frozenset(found)


def predict_headers(grid: Grid, max_header_rows: int = MAX_HEADER_ROWS) -> HeaderPrediction:
    """Count the leading header rows of ``grid``.

    Rows are accepted from the top while they contain a column-spanning
    cell, an empty cell, or two distinct cells with the same text.  With two
    or more rows at least one data row is always left.  If the first row
    meets none of the conditions it is still taken as the header.
    """
    if grid.n_rows == 0:
        raise EmptyGrid("grid has no rows")
    cap = min(max_header_rows, grid.n_rows - 1) if grid.n_rows >= 2 else 1
    accepted: list[frozenset[HeaderCondition]] = []
    for r in range(grid.n_rows):
        if len(accepted) >= cap:
            break
        conditions = _header_conditions(grid.row(r))
        if not conditions:
            break
        accepted.append(conditions)
    if not accepted:
        return HeaderPrediction(1, (frozenset({HeaderCondition.FALLBACK}),))
    return HeaderPrediction(len(accepted), tuple(accepted))


def _has_left(cell: Optional[Cell]) -> bool:
    return cell is not None and cell.bbox is not None


def _different_bbox_flag(rows: Sequence[Sequence[Cell]], threshold: float) -> bool:
    lefts = [r[0].bbox.x1 for r in rows if r and r[0].bbox is not None]
    return len(lefts) >= 2 and max(lefts) - min(lefts) > threshold


def _flatten(
    rows: Sequence[Sequence[Cell]],
    options: HierarchyOptions,
    use_bbox: bool,
) -> tuple[list[list[Cell]], list[int]]:
    """Shared body of both flattening algorithms.

    Returns the new rows and the indices of rows that became the
    hierarchical cell.
    """
    empty = options.placeholders
    flag = use_bbox and _different_bbox_flag(rows, options.indent_threshold)
    hierarchical: Optional[Cell] = None
    out: list[list[Cell]] = []
    labels: list[int] = []
    for i, row in enumerate(rows):
        row = list(row)
        if len(row) < 2:
            raise ValueError(f"row {i} has fewer than 2 cells")
        first = row[0]
        if first.col_span > 1 or is_empty_cell(row[1], empty):
            hierarchical = first
            labels.append(i)
        elif first.row_span > 1 or is_empty_cell(first, empty):
            hierarchical = None
        elif (
            flag
            and _has_left(first)
            and _has_left(hierarchical)
            and first.bbox.x1 - hierarchical.bbox.x1 < options.indent_threshold  # type: ignore[union-attr]
        ):
            hierarchical = None
        elif hierarchical is not None and hierarchical.text:
            row[0] = replace(first, text=first.text + options.separator + hierarchical.text)
        out.append(row)
    return out, labels


def flatten_hierarchy_v1(
    data_rows: Sequence[Sequence[Cell]],
    options: HierarchyOptions = HierarchyOptions(),
) -> list[list[Cell]]:
    """Append the text of the current label row to the first cell of rows beneath it.

    A row becomes the label when its first cell spans columns or its second
    cell is empty; a row-spanning or empty first cell ends the label's scope.
    Only first cells change, and only by replacement; inputs are not mutated.
    """
    return _flatten(data_rows, options, use_bbox=False)[0]


def flatten_hierarchy_v2(
    data_rows: Sequence[Sequence[Cell]],
    options: HierarchyOptions = HierarchyOptions(),
) -> list[list[Cell]]:
    """Like :func:`flatten_hierarchy_v1`, but also ends a label's scope on outdent.

    When first-column left edges in these rows vary by more than
    ``options.indent_threshold``, a row whose first cell is not indented at
    least that far past the label's left edge closes the label instead of
    inheriting it.  Rows without boxes never trigger this check.
    """
    return _flatten(data_rows, options, use_bbox=True)[0]


def _column_names(grid: Grid, header_rows: int) -> list[str]:
    names = []
    for c in range(grid.n_cols):
        parts: list[str] = []
        for r in range(header_rows):
            text = grid.cell_at(r, c).text
            if text and (not parts or parts[-1] != text):
                parts.append(text)
        names.append(" ".join(parts) or f"col{c}")
    return names


def build_structured(grid: Grid, options: HierarchyOptions = HierarchyOptions()) -> StructuredTable:
    if grid.n_rows == 0 or grid.n_cols == 0:
        raise EmptyGrid("grid is empty")
    headers = predict_headers(grid)
    k = headers.header_row_count
    columns = _column_names(grid, k)

    data = [grid.row(r) for r in range(k, grid.n_rows)]
    if grid.n_cols < 2:
        # no second column to test; nothing can be hierarchical
        flat, labels = [list(r) for r in data], []
    else:
        flat, labels = _flatten(data, options, use_bbox=options.algorithm is Algorithm.V2)

    dropped: set[int] = set()
    if options.drop_label_rows:
        for i in labels:
            first = data[i][0]
            rest = [c for c in _distinct(data[i]) if c is not first]
            if all(is_empty_cell(c, options.placeholders) for c in rest):
                dropped.add(i)

    rows, provenance = [], []
    for i, row in enumerate(flat):
        if i in dropped:
            continue
        rows.append([c.text for c in row])
        provenance.append([(c.origin_row, c.origin_col) for c in data[i]])
    if dropped:
        LOGGER.debug("dropped %d label rows", len(dropped))
    return StructuredTable(
        columns=columns,
        rows=rows,
        header_row_count=k,
        provenance=provenance,
        dropped_label_rows=sorted(i + k for i in dropped),
    )
