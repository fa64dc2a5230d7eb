"""Markdown and CSV table emitters for evaluation reports.

Column layout mirrors the standard comparison tables: dataset (and
optionally shots), one column per method in canonical order, then the
improvement deltas of each corrected variant over its baseline.
"""

from __future__ import annotations

import csv
import io

from .harness import DELTA_PAIRS, EvalReport

_METHOD_ORDER = ("zero-shot", "TA", "TA++", "TX", "TX++", "APE", "APE++")
_DISPLAY = {
    "zero-shot": "Zero-Shot",
    "TA": "Tip-Adapter (TA)",
    "TA++": "Tip-Adapter++ (TA++)",
    "TX": "Tip-X (TX)",
    "TX++": "Tip-X++ (TX++)",
    "APE": "APE",
    "APE++": "APE++",
}


def _columns(reports: list[EvalReport]) -> tuple[list[str], list[tuple[str, str]]]:
    present = [m for m in _METHOD_ORDER
               if all(m in r.methods for r in reports)]
    delta_cols = [(a, b) for a, b in DELTA_PAIRS if a in present and b in present]
    return present, delta_cols


def _fmt(value: float) -> str:
    return f"{value:.3f}"


def _table_rows(reports: list[EvalReport], per_shot: bool
                ) -> tuple[list[str], list[list[str]]]:
    methods, delta_cols = _columns(reports)
    header = ["Dataset"] + (["Shots"] if per_shot else []) \
        + [_DISPLAY[m] for m in methods] \
        + [f"Δ ({a}, {b})" for a, b in delta_cols]

    rows: list[list[str]] = []
    if per_shot:
        shots = reports[0].shots
        for report in reports:
            if report.shots != shots:
                raise ValueError("per-shot tables need a common shot list")
            for k in shots:
                row = [report.dataset, str(k)]
                row += [_fmt(report.per_shot[m][str(k)]) for m in methods]
                row += [_fmt(report.per_shot_deltas[f"{a}-{b}"][str(k)])
                        for a, b in delta_cols]
                rows.append(row)
        for k in shots:
            row = ["Average", str(k)]
            row += [_fmt(sum(r.per_shot[m][str(k)] for r in reports) / len(reports))
                    for m in methods]
            row += [_fmt(sum(r.per_shot_deltas[f"{a}-{b}"][str(k)] for r in reports)
                         / len(reports))
                    for a, b in delta_cols]
            rows.append(row)
    else:
        for report in reports:
            row = [report.dataset]
            row += [_fmt(report.per_method[m]) for m in methods]
            row += [_fmt(report.deltas[f"{a}-{b}"]) for a, b in delta_cols]
            rows.append(row)
        average = ["Average"]
        average += [_fmt(sum(r.per_method[m] for r in reports) / len(reports))
                    for m in methods]
        average += [_fmt(sum(r.deltas[f"{a}-{b}"] for r in reports) / len(reports))
                    for a, b in delta_cols]
        rows.append(average)
    return header, rows


def markdown_table(reports: list[EvalReport], per_shot: bool = False) -> str:
    """GitHub-style table: one row per dataset (or per dataset and shot)."""
    if not reports:
        raise ValueError("no reports to emit")
    header, rows = _table_rows(reports, per_shot)
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


def csv_table(reports: list[EvalReport], per_shot: bool = False) -> str:
    """Same layout as the markdown table, in CSV."""
    if not reports:
        raise ValueError("no reports to emit")
    header, rows = _table_rows(reports, per_shot)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()
