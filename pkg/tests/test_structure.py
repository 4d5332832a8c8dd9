import csv
import io
import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabqa.ingest import BBox, Cell, normalize_grid, parse_table_html
from tabqa.structure import (
    Algorithm,
    EmptyGrid,
    HeaderCondition as H,
    HierarchyOptions,
    StructuredTable,
    build_structured,
    flatten_hierarchy_v1,
    flatten_hierarchy_v2,
    is_empty_cell,
    predict_headers,
)


def grid_of(html):
    return normalize_grid(parse_table_html(html))


def table_html(rows):
    """rows of str or (text, attrs) -> HTML."""
    out = ["<table>"]
    for row in rows:
        out.append("<tr>")
        for cell in row:
            text, attrs = (cell, "") if isinstance(cell, str) else cell
            out.append(f"<td {attrs}>{text}</td>")
        out.append("</tr>")
    out.append("</table>")
    return "".join(out)


def rows_of(html):
    grid = grid_of(html)
    return [grid.row(r) for r in range(grid.n_rows)]


def texts(rows):
    return [[c.text for c in row] for row in rows]


V2 = HierarchyOptions(algorithm=Algorithm.V2)


@pytest.mark.parametrize("text,empty", [
    ("", True), ("—", True), ("–", True), ("-", True), (".", True),
    ("0", False), ("——", False), ("- 5", False), ("n/a", False),
])
def test_is_empty_cell(text, empty):
    assert is_empty_cell(Cell(text)) is empty


def test_is_empty_cell_custom_placeholders():
    assert is_empty_cell(Cell("n/a"), placeholders={"n/a"})
    assert not is_empty_cell(Cell("—"), placeholders=set())


# --- header prediction ------------------------------------------------------


def test_header_nan_cell():
    pred = predict_headers(grid_of(table_html([["", "2014", "2013"], ["Cash", "10", "12"]])))
    assert pred.header_row_count == 1
    assert pred.triggered_conditions == (frozenset({H.NAN_CELL}),)


def test_header_column_span_then_duplicate():
    grid = grid_of(table_html([
        [("Metric", 'colspan="2"'), "Year"],
        ["$", "$", "2014"],
        ["Cash", "10", "1"],
    ]))
    pred = predict_headers(grid)
    assert pred.header_row_count == 2
    assert pred.triggered_conditions == (frozenset({H.COLUMN_SPAN}), frozenset({H.DUPLICATE_VALUE}))


def test_header_span_row_without_repeat_stops_scan():
    grid = grid_of(table_html([
        [("Metric", 'colspan="2"'), "Year"],
        ["$", "%", "2014"],
        ["Cash", "10", "1"],
    ]))
    pred = predict_headers(grid)
    assert pred.header_row_count == 1
    assert pred.triggered_conditions == (frozenset({H.COLUMN_SPAN}),)


def test_header_fallback():
    pred = predict_headers(grid_of(table_html([["Name", "Value"], ["a", "1"]])))
    assert pred.header_row_count == 1
    assert pred.triggered_conditions == (frozenset({H.FALLBACK}),)


def test_header_all_conditions_on_one_row():
    grid = grid_of(table_html([
        ["", ("Years", 'colspan="2"'), "x", "x"],
        ["Cash", "1", "2", "3", "4"],
    ]))
    pred = predict_headers(grid)
    assert pred.triggered_conditions == (frozenset({H.NAN_CELL, H.COLUMN_SPAN, H.DUPLICATE_VALUE}),)


def test_header_placeholder_is_not_a_nan_cell():
    pred = predict_headers(grid_of(table_html([["Item", "2014"], ["Cash", "—"], ["Debt", "4"]])))
    assert pred.triggered_conditions == (frozenset({H.FALLBACK}),)


def test_header_rowspan_empty_corner():
    grid = grid_of(table_html([
        [("", 'rowspan="2"'), ("Years", 'colspan="2"')],
        ["2014", "2013"],
        ["Cash", "1", "2"],
    ]))
    pred = predict_headers(grid)
    assert pred.header_row_count == 2
    assert pred.triggered_conditions == (frozenset({H.NAN_CELL, H.COLUMN_SPAN}), frozenset({H.NAN_CELL}))


@pytest.mark.parametrize("n_rows,expected", [(1, 1), (2, 1), (3, 2), (6, 5), (10, 5)])
def test_header_cap(n_rows, expected):
    grid = grid_of(table_html([["", "x"]] * n_rows))
    assert predict_headers(grid).header_row_count == expected


def test_header_empty_grid():
    with pytest.raises(EmptyGrid):
        predict_headers(grid_of("<table></table>"))


# --- label propagation (v1) ---------------------------------------------------------------


def test_v1_label_row_propagates():
    rows = rows_of(table_html([["Current assets:", ""], ["Cash", "10"], ["Inventory", "5"]]))
    assert texts(flatten_hierarchy_v1(rows)) == [
        ["Current assets:", ""],
        ["Cash - Current assets:", "10"],
        ["Inventory - Current assets:", "5"],
    ]


def test_v1_no_trigger_unchanged():
    rows = rows_of(table_html([["Cash", "10"], ["Debt", "4"]]))
    assert texts(flatten_hierarchy_v1(rows)) == [["Cash", "10"], ["Debt", "4"]]


def test_v1_empty_first_cell_resets():
    rows = rows_of(table_html([[("Total", 'colspan="2"')], ["", "9"], ["Net", "3"]]))
    assert texts(flatten_hierarchy_v1(rows)) == [["Total", "Total"], ["", "9"], ["Net", "3"]]


def test_v1_rowspan_first_cell_resets():
    rows = rows_of(table_html([
        ["Assets:", ""],
        [("Group", 'rowspan="2"'), "1"],
        ["2"],
        ["Cash", "3"],
    ]))
    assert texts(flatten_hierarchy_v1(rows))[3] == ["Cash", "3"]


def test_v1_colspan_label_and_custom_separator():
    rows = rows_of(table_html([[("Liabilities", 'colspan="2"')], ["Debt", "4"]]))
    out = flatten_hierarchy_v1(rows, HierarchyOptions(separator=" / "))
    assert texts(out)[1] == ["Debt / Liabilities", "4"]


def test_v1_new_label_replaces_old():
    rows = rows_of(table_html([["A:", ""], ["x", "1"], ["B:", "—"], ["y", "2"]]))
    assert [r[0] for r in texts(flatten_hierarchy_v1(rows))] == ["A:", "x - A:", "B:", "y - B:"]


def test_v1_does_not_mutate_input():
    rows = rows_of(table_html([["A:", ""], ["x", "1"]]))
    before = texts(rows)
    flatten_hierarchy_v1(rows)
    assert texts(rows) == before


# --- indentation-aware propagation (v2) ---------------------------------------------------------------


def bb(x1):
    return f'data-bbox="{x1},0,{x1 + 50},10"'


def test_v2_outdent_ends_hierarchy():
    rows = rows_of(table_html([
        [("Liabilities:", bb(10)), ""],
        [("Debt", bb(40)), "4"],
        [("Equity", bb(10)), "9"],
    ]))
    assert texts(flatten_hierarchy_v2(rows, HierarchyOptions(indent_threshold=10))) == [
        ["Liabilities:", ""],
        ["Debt - Liabilities:", "4"],
        ["Equity", "9"],
    ]
    # v1 has no notion of indentation and keeps propagating
    assert texts(flatten_hierarchy_v1(rows))[2] == ["Equity - Liabilities:", "9"]


def test_v2_threshold_boundary():
    rows = rows_of(table_html([
        [("Liabilities:", bb(10)), ""],
        [("Debt", bb(20)), "4"],
        [("Other", bb(40)), "1"],
    ]))
    # 20 - 10 = 10 is not below the threshold, so Debt is indented enough
    assert texts(flatten_hierarchy_v2(rows))[1] == ["Debt - Liabilities:", "4"]
    assert texts(flatten_hierarchy_v2(rows, HierarchyOptions(indent_threshold=10.5)))[1] == ["Debt", "4"]


def test_v2_equal_bboxes_reduce_to_v1():
    rows = rows_of(table_html([
        [("Current assets:", bb(10)), ""],
        [("Cash", bb(10)), "10"],
        [("Inventory", bb(10)), "5"],
    ]))
    assert texts(flatten_hierarchy_v2(rows)) == texts(flatten_hierarchy_v1(rows))


def test_v2_without_bboxes_equals_v1():
    rows = rows_of(table_html([["Current assets:", ""], ["Cash", "10"], ["Inventory", "5"]]))
    assert texts(flatten_hierarchy_v2(rows)) == texts(flatten_hierarchy_v1(rows))


def test_v2_missing_bbox_on_row_skips_check():
    rows = rows_of(table_html([
        [("Liabilities:", bb(10)), ""],
        ["Debt", "4"],
        [("Equity", bb(40)), "9"],
    ]))
    assert [r[0] for r in texts(flatten_hierarchy_v2(rows))] == [
        "Liabilities:", "Debt - Liabilities:", "Equity - Liabilities:",
    ]


# --- properties ------------------------------------------------------------------

TEXTS = ["", "—", "Cash", "Debt", "10", "(4)", "Total", "x"]


@st.composite
def bbox_free_tables(draw):
    n_cols = draw(st.integers(2, 5))
    n_rows = draw(st.integers(1, 8))
    rows = []
    for _ in range(n_rows):
        row, used = [], 0
        while used < n_cols:
            span = draw(st.integers(1, min(3, n_cols - used)))
            rs = draw(st.sampled_from([1, 1, 1, 2]))
            row.append((draw(st.sampled_from(TEXTS)), f'colspan="{span}" rowspan="{rs}"'))
            used += span
        rows.append(row)
    return rows_of(table_html(rows))


def _check_structural(rows, out):
    assert len(out) == len(rows)
    for before, after in zip(rows, out):
        assert len(after) == len(before)
        assert after[1:] == before[1:]
        assert all(a is b for a, b in zip(after[1:], before[1:]))


@settings(max_examples=300, deadline=None)
@given(bbox_free_tables())
def test_reduction_and_preservation(rows):
    rows = [r for r in rows if len(r) >= 2]
    v1 = flatten_hierarchy_v1(rows)
    v2 = flatten_hierarchy_v2(rows, V2)
    assert texts(v2) == texts(v1)
    _check_structural(rows, v1)
    _check_structural(rows, v2)


@settings(max_examples=200, deadline=None)
@given(bbox_free_tables(), st.integers(0, 10))
def test_reduction_with_bboxes_within_threshold(rows, jitter):
    rng = random.Random(jitter)
    rows = [[replace(c, bbox=BBox(20 + rng.randint(0, 10), 0, 90, 5)) if i == 0 else c
             for i, c in enumerate(r)] for r in rows]
    assert texts(flatten_hierarchy_v2(rows)) == texts(flatten_hierarchy_v1(rows))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.sampled_from(["Cash", "Debt", "10", "(4)"]), min_size=2, max_size=4), min_size=1, max_size=6))
def test_flatten_idempotent_without_triggers(table):
    width = max(len(r) for r in table)
    rows = rows_of(table_html([r + ["1"] * (width - len(r)) for r in table]))
    once = flatten_hierarchy_v1(rows)
    assert texts(flatten_hierarchy_v1(once)) == texts(once) == texts(rows)


@settings(max_examples=200, deadline=None)
@given(bbox_free_tables())
def test_headers_and_columns_invariants(rows):
    # rebuild as a grid so header prediction sees real span structure
    html = table_html([[(c.text, f'colspan="{c.col_span}"') for c in _distinct_cells(r)] for r in rows])
    grid = grid_of(html)
    pred = predict_headers(grid)
    assert pred.header_row_count >= 1
    if grid.n_rows >= 2:
        assert pred.header_row_count < grid.n_rows
    table = build_structured(grid)
    assert len(table.columns) == grid.n_cols
    assert all(len(r) == grid.n_cols for r in table.rows)
    for prov in table.provenance:
        for r, c in prov:
            assert pred.header_row_count <= r or grid.cell_at(r, c).row_span > 1
    for r in table.dropped_label_rows:
        assert r >= table.header_row_count
    assert len(table.rows) + len(table.dropped_label_rows) == grid.n_rows - table.header_row_count


def _distinct_cells(row):
    out = []
    for c in row:
        if not out or out[-1] is not c:
            out.append(c)
    return out


# --- build_structured ---------------------------------------------------------


def test_build_single_row():
    table = build_structured(grid_of(table_html([["A", "B"]])))
    assert table.columns == ["A", "B"] and table.rows == []


def test_build_loss_table(loss_html):
    grid = grid_of(loss_html)
    table = build_structured(grid)
    assert table.columns == ["col0", "2013", "2012"]
    assert table.header_row_count == 1
    labels = [r[0] for r in table.rows]
    assert "Foreign currency translation - Accumulated other comprehensive loss:" in labels
    assert "Accumulated other comprehensive loss:" not in labels
    assert table.dropped_label_rows == [2]
    assert labels[-1] == "Total comprehensive income - Accumulated other comprehensive loss:"

    v2 = build_structured(grid, V2)
    assert [r[0] for r in v2.rows] == [
        "Net income",
        "Foreign currency translation - Accumulated other comprehensive loss:",
        "Pension and postretirement benefit adjustments - Accumulated other comprehensive loss:",
        "Total comprehensive income",
    ]
    assert v2.provenance[1] == [(3, 0), (3, 1), (3, 2)]


def test_build_keep_label_rows(loss_html):
    table = build_structured(grid_of(loss_html), HierarchyOptions(drop_label_rows=False))
    assert table.dropped_label_rows == []
    assert table.rows[1] == ["Accumulated other comprehensive loss:", "", ""]


def test_build_spanning_header_names():
    grid = grid_of(table_html([
        [("", 'rowspan="2"'), ("Years", 'colspan="2"')],
        ["2014", "2013"],
        ["Cash", "1", "2"],
    ]))
    table = build_structured(grid)
    assert table.columns == ["col0", "Years 2014", "Years 2013"]
    assert table.rows == [["Cash", "1", "2"]]


def test_build_label_row_with_values_is_kept():
    grid = grid_of(table_html([["Item", "2014", "2013"], ["Revenue:", "", "7"], ["Product", "5", "6"]]))
    table = build_structured(grid)
    assert table.rows == [["Revenue:", "", "7"], ["Product - Revenue:", "5", "6"]]
    assert table.dropped_label_rows == []


def test_build_placeholder_second_cell_makes_a_label_row():
    # "—" counts as empty, so "Service" becomes the label and, having no
    # other values, is pruned
    grid = grid_of(table_html([["Item", "2014"], [("Revenue", 'colspan="2"')], ["Product", "5"], ["Service", "—"], ["Fees", "2"]]))
    table = build_structured(grid)
    assert table.rows == [["Product - Revenue", "5"], ["Fees - Service", "2"]]
    assert table.dropped_label_rows == [1, 3]


def test_build_single_column():
    table = build_structured(grid_of(table_html([["Name"], ["a"], [""]])))
    assert table.columns == ["Name"] and table.rows == [["a"], [""]]


def test_build_empty_grid():
    with pytest.raises(EmptyGrid):
        build_structured(grid_of("<table></table>"))


def test_structured_json_and_csv(loss_html):
    table = build_structured(grid_of(loss_html))
    data = table.to_json()
    assert list(data) == ["schema", "columns", "rows", "header_row_count", "dropped_label_rows", "provenance"]
    assert data["schema"] == "table/1"
    assert StructuredTable.from_json(data) == table

    quoted = StructuredTable(columns=["a", "b,c"], rows=[['say "hi"', "1\n2"]])
    assert quoted.to_csv() == 'a,"b,c"\r\n"say ""hi""","1\n2"\r\n'
    assert list(csv.reader(io.StringIO(quoted.to_csv(), newline=""))) == [["a", "b,c"], ['say "hi"', "1\n2"]]


def test_structured_table_rejects_ragged_rows():
    with pytest.raises(ValueError):
        StructuredTable(columns=["a", "b"], rows=[["1"]])


def test_options_validation():
    with pytest.raises(ValueError):
        HierarchyOptions(indent_threshold=-1)
    assert HierarchyOptions(algorithm="v2").algorithm is Algorithm.V2
