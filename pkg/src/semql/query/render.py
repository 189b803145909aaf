"""Query result rendering: aligned table, CSV, or JSON lines."""

from __future__ import annotations

import csv
import io
import json

from .executor import QueryResult

FORMATS = ("table", "csv", "json")


def _cell_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if value.is_integer():
            return str(int(value))
        return format(value, ".6g")
    return str(value)


def render_table(result: QueryResult) -> str:
    headers = result.columns
    body = [[_cell_text(v) for v in row] for row in result.rows]
    widths = [len(h) for h in headers]
    for row in body:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * widths[i] for i in range(len(headers))).rstrip(),
    ]
    for row in body:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    lines.append(f"({len(result.rows)} row{'s' if len(result.rows) != 1 else ''})")
    return "\n".join(lines) + "\n"


def render_csv(result: QueryResult) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(result.columns)
    for row in result.rows:
        writer.writerow([_cell_text(v) for v in row])
    return buffer.getvalue()


def render_json(result: QueryResult) -> str:
    lines = []
    for row in result.rows:
        record = {}
        for name, value in zip(result.columns, row):
            if isinstance(value, float):
                value = round(value, 10)
            record[name] = value
        lines.append(json.dumps(record, sort_keys=False))
    return "\n".join(lines) + ("\n" if lines else "")
