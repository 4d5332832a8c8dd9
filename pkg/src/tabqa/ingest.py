"""Parse recognizer HTML into cells and normalize spans into a rectangular grid.

The recognizer emits a small HTML subset (``table``/``thead``/``tbody``/``tr``/
``td``/``th`` with ``rowspan``/``colspan``).  Bounding boxes travel on a
``data-bbox="x1,y1,x2,y2"`` attribute; other carriers can be plugged in by
passing a different ``bbox_reader`` to :func:`parse_table_html`.
"""

from __future__ import annotations

import html
import json
import logging
import re
from dataclasses import dataclass, field, replace
from html.parser import HTMLParser
from typing import Callable, Iterator, Mapping, Optional

LOGGER = logging.getLogger(__name__)

GRID_SCHEMA = "grid/1"
BBOX_ATTR = "data-bbox"
SYNTHETIC_ATTR = "data-synthetic"

_WS = re.compile(r"\s+")
_CELL_TAGS = frozenset({"td", "th"})
_SECTION_TAGS = frozenset({"thead", "tbody", "tfoot"})
# Tags whose boundaries separate words even without surrounding whitespace.
_BREAK_TAGS = frozenset({"br", "p", "div", "li"})


class MalformedHtml(ValueError):
    """The document has no table element, or its table is never closed."""


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if min(self.x1, self.y1, self.x2, self.y2) < 0:
            raise ValueError(f"negative bbox coordinate: {self.as_list()}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"inverted bbox: {self.as_list()}")

    @property
    def left(self) -> float:
        return self.x1

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @classmethod
    def parse(cls, value: str) -> "BBox":
        parts = [p for p in re.split(r"[,\s]+", value.strip()) if p]
        if len(parts) != 4:
            raise ValueError(f"expected 4 bbox coordinates, got {value!r}")
        return cls(*(float(p) for p in parts))


@dataclass(frozen=True)
class Cell:
    """One table cell.

    ``origin_row``/``origin_col`` stay ``None`` until the cell is placed by
    :func:`normalize_grid`.  ``is_header`` records a ``<th>`` tag but nothing
    downstream trusts it.
    """

    text: str = ""
    row_span: int = 1
    col_span: int = 1
    bbox: Optional[BBox] = None
    origin_row: Optional[int] = None
    origin_col: Optional[int] = None
    is_header: bool = field(default=False, compare=False)
    synthetic: bool = False

    def __post_init__(self) -> None:
        if self.row_span < 1 or self.col_span < 1:
            raise ValueError(f"spans must be >= 1, got {self.row_span}x{self.col_span}")


@dataclass(frozen=True)
class RawTable:
    rows: tuple[tuple[Cell, ...], ...] = ()

    @property
    def n_cells(self) -> int:
        return sum(len(r) for r in self.rows)


@dataclass(frozen=True, eq=False)
class Grid:
    """Rectangular ``n_rows x n_cols`` matrix of slots referencing origin cells.

    Equality compares dimensions and origin cells; slot references follow
    from those.
    """

    n_rows: int
    n_cols: int
    cells: tuple[Cell, ...]
    slots: tuple[tuple[Cell, ...], ...] = field(repr=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return (self.n_rows, self.n_cols, self.cells) == (other.n_rows, other.n_cols, other.cells)

    def __hash__(self) -> int:
        return hash((self.n_rows, self.n_cols, self.cells))

    def row(self, r: int) -> list[Cell]:
        """Slot view of row ``r``; a spanning cell appears once per covered column."""
        return list(self.slots[r])

    def rows(self) -> Iterator[list[Cell]]:
        for r in range(self.n_rows):
            yield self.row(r)

    def cell_at(self, r: int, c: int) -> Cell:
        return self.slots[r][c]

    @classmethod
    def from_cells(cls, n_rows: int, n_cols: int, cells: list[Cell]) -> "Grid":
        """Build a grid from placed origin cells; raises if they do not tile it exactly."""
        matrix: list[list[Optional[Cell]]] = [[None] * n_cols for _ in range(n_rows)]
        for cell in cells:
            if cell.origin_row is None or cell.origin_col is None:
                raise ValueError("grid cells must carry origin positions")
            for r in range(cell.origin_row, cell.origin_row + cell.row_span):
                for c in range(cell.origin_col, cell.origin_col + cell.col_span):
                    if not (0 <= r < n_rows and 0 <= c < n_cols):
                        raise ValueError(f"cell at ({cell.origin_row},{cell.origin_col}) exceeds grid")
                    if matrix[r][c] is not None:
                        raise ValueError(f"slot ({r},{c}) covered twice")
                    matrix[r][c] = cell
        for r, row in enumerate(matrix):
            for c, slot in enumerate(row):
                if slot is None:
                    raise ValueError(f"slot ({r},{c}) not covered")
        ordered = sorted(cells, key=lambda x: (x.origin_row, x.origin_col))
        return cls(n_rows, n_cols, tuple(ordered), tuple(tuple(row) for row in matrix))  # type: ignore[arg-type]


def normalize_text(text: str) -> str:
    return _WS.sub(" ", text).strip()


def read_data_bbox(attrs: Mapping[str, Optional[str]]) -> Optional[BBox]:
    value = attrs.get(BBOX_ATTR)
    if not value:
        return None
    try:
        return BBox.parse(value)
    except ValueError as exc:
        LOGGER.warning("ignoring bbox %r: %s", value, exc)
        return None


def _parse_span(value: Optional[str], name: str) -> int:
    if value is None:
        return 1
    try:
        span = int(value.strip())
    except ValueError:
        span = 0
    if span < 1:
        LOGGER.warning("invalid %s=%r, clamped to 1", name, value)
        return 1
    return span


class _TableParser(HTMLParser):
    def __init__(self, bbox_reader: Callable[[Mapping[str, Optional[str]]], Optional[BBox]]):
        super().__init__(convert_charrefs=True)
        self.bbox_reader = bbox_reader
        self.rows: list[list[Cell]] = []
        self.seen_table = False
        self.closed = False
        self._depth = 0  # nesting depth of <table> inside the first table
        self._row: Optional[list[Cell]] = None
        self._cell_attrs: Optional[dict[str, Optional[str]]] = None
        self._cell_tag = "td"
        self._text: list[str] = []

    @property
    def active(self) -> bool:
        return self._depth > 0 and not self.closed

    def handle_starttag(self, tag: str, attrs: list[tuple[str, Optional[str]]]) -> None:
        if tag == "table":
            if self.closed:
                return
            self._depth += 1
            if self._depth == 1:
                self.seen_table = True
            return
        if not self.active:
            return
        if self._depth > 1:
            # nested table contents fold into the enclosing cell's text
            if tag in _CELL_TAGS or tag in _BREAK_TAGS or tag == "tr":
                self._text.append(" ")
            return
        if tag == "tr":
            self._end_row()
            self._row = []
        elif tag in _CELL_TAGS:
            self._end_cell()
            if self._row is None:
                self._row = []
            self._cell_attrs = dict(attrs)
            self._cell_tag = tag
            self._text = []
        elif tag in _BREAK_TAGS:
            self._text.append(" ")

    def handle_startendtag(self, tag: str, attrs: list[tuple[str, Optional[str]]]) -> None:
        if tag in _CELL_TAGS and self.active and self._depth == 1:
            self.handle_starttag(tag, attrs)
            self._end_cell()
        else:
            self.handle_starttag(tag, attrs)

    def handle_endtag(self, tag: str) -> None:
        if not self.active:
            return
        if tag == "table":
            self._depth -= 1
            if self._depth == 0:
                self._end_row()
                self.closed = True
            return
        if self._depth > 1:
            return
        if tag in _CELL_TAGS:
            self._end_cell()
        elif tag == "tr" or tag in _SECTION_TAGS:
            self._end_row()
        elif tag in _BREAK_TAGS:
            self._text.append(" ")

    def handle_data(self, data: str) -> None:
        if self.active and self._cell_attrs is not None:
            self._text.append(data)

    def _end_cell(self) -> None:
        if self._cell_attrs is None:
            return
        attrs = self._cell_attrs
        cell = Cell(
            text=normalize_text("".join(self._text)),
            row_span=_parse_span(attrs.get("rowspan"), "rowspan"),
            col_span=_parse_span(attrs.get("colspan"), "colspan"),
            bbox=self.bbox_reader(attrs),
            is_header=self._cell_tag == "th",
            synthetic=SYNTHETIC_ATTR in attrs,
        )
        assert self._row is not None
        self._row.append(cell)
        self._cell_attrs = None
        self._text = []

    def _end_row(self) -> None:
        self._end_cell()
        if self._row is not None:
            self.rows.append(self._row)
            self._row = None


def _scan(html_text: str, bbox_reader) -> _TableParser:
    parser = _TableParser(bbox_reader)
    parser.feed(html_text)
    parser.close()
    if parser.active:
        parser._end_row()
    return parser


def parse_table_html(
    html_text: str,
    bbox_reader: Callable[[Mapping[str, Optional[str]]], Optional[BBox]] = read_data_bbox,
) -> RawTable:
    """Parse the first ``<table>`` of ``html_text`` into rows of origin cells.

    Invalid ``rowspan``/``colspan`` values are clamped to 1 with a logged
    warning.  Raises :class:`MalformedHtml` if there is no table or the
    table is never closed.
    """
    parser = _scan(html_text, bbox_reader)
    if not parser.seen_table:
        raise MalformedHtml("no <table> element")
    if not parser.closed:
        raise MalformedHtml("unclosed <table> element")
    return RawTable(tuple(tuple(r) for r in parser.rows))


def detect_blank(html_text: str) -> bool:
    """True if there is no table, or every cell of the first table is empty.

    Never raises: a truncated table is still inspected for content.
    """
    try:
        parser = _scan(html_text or "", read_data_bbox)
    except Exception:  # HTMLParser is lenient, but keep this total
        LOGGER.warning("could not scan document for blank detection", exc_info=True)
        return False
    if not parser.seen_table:
        return True
    return all(not cell.text for row in parser.rows for cell in row)


def normalize_grid(raw: RawTable) -> Grid:
    """Expand spans into a rectangular grid.

    Each origin cell goes to the leftmost free column of its row.  Where a
    span would overlap an earlier cell it is truncated; row spans running
    past the last row are cut at the table end.  Remaining holes are filled
    with synthetic empty cells.
    """
    n_rows = len(raw.rows)
    occupied: dict[tuple[int, int], Cell] = {}
    placed: list[Cell] = []

    for r, row in enumerate(raw.rows):
        c = 0
        for cell in row:
            while (r, c) in occupied:
                c += 1
            col_span = 1
            while col_span < cell.col_span and (r, c + col_span) not in occupied:
                col_span += 1
            # Earlier spans reaching lower rows also cover row r, so clearing
            # row r's columns clears every row below as well.
            row_span = min(cell.row_span, n_rows - r)
            if (col_span, row_span) != (cell.col_span, cell.row_span):
                LOGGER.warning(
                    "span of cell %r at (%d,%d) truncated from %dx%d to %dx%d",
                    cell.text, r, c, cell.row_span, cell.col_span, row_span, col_span,
                )
            out = replace(cell, row_span=row_span, col_span=col_span, origin_row=r, origin_col=c)
            placed.append(out)
            for dr in range(row_span):
                for dc in range(col_span):
                    occupied[(r + dr, c + dc)] = out
            c += col_span

    n_cols = max((c for _, c in occupied), default=-1) + 1
    for r in range(n_rows):
        for c in range(n_cols):
            if (r, c) not in occupied:
                pad = Cell(origin_row=r, origin_col=c, synthetic=True)
                occupied[(r, c)] = pad
                placed.append(pad)

    slots = tuple(tuple(occupied[(r, c)] for c in range(n_cols)) for r in range(n_rows))
    cells = tuple(sorted(placed, key=lambda x: (x.origin_row, x.origin_col)))
    return Grid(n_rows, n_cols, cells, slots)


def load_grid(html_text: str) -> Grid:
    return normalize_grid(parse_table_html(html_text))


def _num(v: float) -> float | int:
    return int(v) if float(v).is_integer() else v


def grid_to_json(grid: Grid) -> dict:
    return {
        "schema": GRID_SCHEMA,
        "n_rows": grid.n_rows,
        "n_cols": grid.n_cols,
        "cells": [
            {
                "row": cell.origin_row,
                "col": cell.origin_col,
                "row_span": cell.row_span,
                "col_span": cell.col_span,
                "text": cell.text,
                "bbox": [_num(v) for v in cell.bbox.as_list()] if cell.bbox else None,
                "synthetic": cell.synthetic,
            }
            for cell in grid.cells
        ],
    }


def grid_from_json(data: Mapping) -> Grid:
    schema = data.get("schema", GRID_SCHEMA)
    if schema != GRID_SCHEMA:
        raise ValueError(f"unsupported grid schema {schema!r}")
    cells = [
        Cell(
            text=c["text"],
            row_span=c["row_span"],
            col_span=c["col_span"],
            bbox=BBox(*map(float, c["bbox"])) if c.get("bbox") else None,
            origin_row=c["row"],
            origin_col=c["col"],
            synthetic=bool(c.get("synthetic", False)),
        )
        for c in data["cells"]
    ]
    return Grid.from_cells(data["n_rows"], data["n_cols"], cells)


def dumps_grid(grid: Grid) -> str:
    return json.dumps(grid_to_json(grid), ensure_ascii=False)


def grid_to_html(grid: Grid) -> str:
    """Canonical HTML for ``grid``; re-parsing it reproduces the same grid."""
    by_row: dict[int, list[Cell]] = {r: [] for r in range(grid.n_rows)}
    for cell in grid.cells:
        by_row[cell.origin_row].append(cell)  # type: ignore[index]
    out = ["<table>"]
    for r in range(grid.n_rows):
        out.append("<tr>")
        for cell in by_row[r]:
            tag = "th" if cell.is_header else "td"
            attrs = ""
            if cell.row_span > 1:
                attrs += f' rowspan="{cell.row_span}"'
            if cell.col_span > 1:
                attrs += f' colspan="{cell.col_span}"'
            if cell.bbox is not None:
                coords = ",".join(repr(float(v)) for v in cell.bbox.as_list())
                attrs += f' {BBOX_ATTR}="{coords}"'
            if cell.synthetic:
                attrs += f" {SYNTHETIC_ATTR}"
            out.append(f"<{tag}{attrs}>{html.escape(cell.text, quote=False)}</{tag}>")
        out.append("</tr>")
    out.append("</table>")
    return "".join(out)
