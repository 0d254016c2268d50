"""CSV metric emission.

All CSVs are RFC-4180 (csv module defaults: CRLF line endings, header on
the first line).  Floats are written with repr, i.e. shortest round-trip
form, so identical runs produce byte-identical files.  Every writer drops a
JSON sidecar (<name>.schema.json) describing columns and units.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path


class CsvLogger:
    """Row-at-a-time CSV writer with a schema sidecar."""

    def __init__(self, path, columns, schema: dict | None = None):
        self.path = Path(path)
        self.columns = list(columns)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(self.columns)
        if schema is not None:
            sidecar = self.path.with_suffix(self.path.suffix + ".schema.json")
            sidecar.write_text(json.dumps(
                {"columns": [{"name": c, **schema.get(c, {})} for c in self.columns]},
                indent=2) + "\n")

    def write(self, row: dict) -> None:
        missing = set(self.columns) - set(row)
        if missing:
            raise ValueError(f"metric row missing columns: {sorted(missing)}")
        self._writer.writerow([_fmt(row[c]) for c in self.columns])
        self._fh.flush()

    def flush(self) -> None:
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def read_csv(path) -> tuple:
    """(columns, rows) with numeric fields parsed back to float."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = []
        for raw in reader:
            row = []
            for cell in raw:
                try:
                    row.append(float(cell))
                except ValueError:
                    row.append(cell)
            rows.append(row)
    return columns, rows


def column(path, name: str) -> list:
    columns, rows = read_csv(path)
    idx = columns.index(name)
    return [r[idx] for r in rows]


def merge_long_format(inputs, out_path) -> int:
    """Merge metric CSVs into one tidy long-format table.

    Output columns: source, row, column, value.  Returns the number of data
    cells written; the row count equals the sum of input cells, so the
    merge is loss-free.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    written = 0
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "row", "column", "value"])
        for path in inputs:
            columns, rows = read_csv(path)
            name = Path(path).stem
            for r_idx, row in enumerate(rows):
                for c_name, value in zip(columns, row):
                    writer.writerow([name, r_idx, c_name, _fmt(value)])
                    written += 1
    return written
