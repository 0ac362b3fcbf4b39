"""Run reports: the JSON document, the delimited table, and report merging.

Every `run` produces a versioned JSON report plus a CSV with one row per
trained model.  `merge_reports` aligns rows from several reports side by
side (the compare subcommand); reports from different tasks or schema
versions refuse to merge.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence

REPORT_SCHEMA = 1

CSV_COLUMNS = [
    "row", "lambda", "sl", "sls", "ratio", "num",
    "trmse", "temse", "tra", "tea", "loss", "seconds",
]


class IncompatibleTasksError(ValueError):
    """Reports describe different tasks and cannot be merged."""


class SchemaMismatchError(ValueError):
    """Report schema version is not supported."""


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return " ".join(str(v) for v in value)
    return str(value)


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_format_cell(row.get(col)) for col in CSV_COLUMNS])
    return buf.getvalue()


def write_report(report: dict, out_dir: Path) -> tuple[Path, Path]:
    """Write report.json and report.csv; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    with open(json_path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    csv_path = out_dir / "report.csv"
    csv_path.write_text(rows_to_csv(report["rows"]))
    return json_path, csv_path


def load_report(path) -> dict:
    with open(path) as fh:
        report = json.load(fh)
    if report.get("schema") != REPORT_SCHEMA:
        raise SchemaMismatchError(
            f"{path}: schema {report.get('schema')!r}, expected {REPORT_SCHEMA}")
    return report


def merge_reports(paths: Sequence) -> list[dict]:
    """Stack rows from several reports, tagging each with its source."""
    if not paths:
        raise ValueError("need at least one report")
    reports = [(Path(p), load_report(p)) for p in paths]
    tasks = {r["task"] for _, r in reports}
    if len(tasks) > 1:
        raise IncompatibleTasksError(f"cannot merge tasks: {sorted(tasks)}")
    merged = []
    for path, report in reports:
        for row in report["rows"]:
            tagged = {"source": path.stem if len(reports) > 1 else path.name, **row}
            merged.append(tagged)
    return merged


def merged_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["source"] + CSV_COLUMNS)
    for row in rows:
        writer.writerow([_format_cell(row.get("source"))]
                        + [_format_cell(row.get(col)) for col in CSV_COLUMNS])
    return buf.getvalue()


def merged_to_markdown(rows: Sequence[dict]) -> str:
    columns = ["source"] + CSV_COLUMNS
    used = [c for c in columns if any(row.get(c) is not None for row in rows)]
    lines = ["| " + " | ".join(used) + " |",
             "| " + " | ".join("---" for _ in used) + " |"]
    for row in rows:
        cells = []
        for col in used:
            value = row.get(col)
            if isinstance(value, float):
                cells.append(f"{value:.6g}")
            else:
                cells.append(_format_cell(value))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
