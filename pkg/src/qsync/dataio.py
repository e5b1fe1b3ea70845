"""Text formats: dataset parsing, barycenter files, report tables.

Dataset files hold one unit per line, whitespace- or comma-separated
reals, with '#' starting a comment; ragged lines are allowed.  Barycenter
files carry a small '# key: value' header followed by either one atom per
line (non-smoothed) or "alpha quantile" pairs (smoothed and parametric).
Report tables are CSV or JSON with a fixed column set; every float is
rendered with 17 significant digits so identical runs produce identical
bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .barycenter import BarycenterEstimate
from .errors import ParseError
from .measures import EmpiricalMeasure, GridQuantile, midpoint_alphas
from .simulation import RiskReport

REPORT_COLUMNS = ("model", "estimator", "n", "p", "M", "risk", "se", "seed")
RATIO_COLUMNS = ("n", "p", "risk_numerator", "risk_denominator", "log_ratio")
JSON_SCHEMA = "qsync.risk-report/v1"
JSON_RATIO_SCHEMA = "qsync.risk-ratio/v1"

_GRID_MARKER = "columns: alpha quantile"


def format_float(x: float) -> str:
    return f"{float(x):.17g}"


def _tokens(line: str) -> list[str]:
    return line.replace(",", " ").split()


def _parse_floats(tokens: list[str], path: str, lineno: int) -> list[float]:
    out = []
    for tok in tokens:
        try:
            out.append(float(tok))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: not a number: {tok!r}") from None
    for v in out:
        if not math.isfinite(v):
            raise ParseError(f"{path}:{lineno}: non-finite value {v!r}")
    return out


def _read_rows(path: str) -> tuple[list[tuple[int, list[float]]], list[str]]:
    rows = []
    comments = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line, _, comment = raw.partition("#")
            if comment.strip():
                comments.append(comment.strip())
            toks = _tokens(line)
            if toks:
                rows.append((lineno, _parse_floats(toks, path, lineno)))
    return rows, comments


def read_grouped_dataset(path: str) -> list[np.ndarray]:
    """Units of a dataset file, one array per non-empty line."""
    rows, _ = _read_rows(path)
    if not rows:
        raise ParseError(f"{path}: no data lines found")
    return [np.asarray(values, dtype=float) for _, values in rows]


def read_measure(path: str):
    """A single measure from a file: sample list or tabulated quantile.

    A file is read as a quantile grid when its header declares the
    "alpha quantile" column layout, or, failing that, when every row has
    exactly two entries whose first column increases strictly inside
    (0,1).  Anything else is flattened into one equal-weight sample.
    """
    rows, comments = _read_rows(path)
    if not rows:
        raise ParseError(f"{path}: no data lines found")
    declared_grid = any(_GRID_MARKER in c for c in comments)
    looks_gridded = (
        len(rows) >= 2
        and all(len(values) == 2 for _, values in rows)
        and _strictly_inside_unit([v[0] for _, v in rows])
    )
    if declared_grid or looks_gridded:
        if not looks_gridded:
            raise ParseError(
                f"{path}: declared as a quantile grid but rows are not "
                "(alpha, value) pairs with alpha increasing in (0,1)"
            )
        alphas = np.array([v[0] for _, v in rows])
        values = np.array([v[1] for _, v in rows])
        return GridQuantile(alphas, values)
    return EmpiricalMeasure(np.concatenate([v for _, v in rows]))


def _strictly_inside_unit(alphas: list[float]) -> bool:
    arr = np.asarray(alphas)
    return bool(
        np.all(arr > 0.0) and np.all(arr < 1.0) and np.all(np.diff(arr) > 0.0)
    )


# ---------------------------------------------------------------------------
# Barycenter files


def write_barycenter_file(
    path: str, estimate: BarycenterEstimate, *, grid_size: int = 512
) -> None:
    """Serialize an estimate with a comment header and 17-digit values.

    Non-smoothed estimates with an atom representation are written one
    atom per line; everything else is written as "alpha quantile" pairs,
    sampling analytic quantiles on a midpoint grid of ``grid_size``.
    """
    lines = [
        "# barycenter",
        f"# kind: {estimate.kind}",
        f"# n: {estimate.n}",
        "# sizes: " + ",".join(str(s) for s in estimate.sizes),
    ]
    if estimate.bandwidths is not None:
        lines.append("# bandwidths: " + ",".join(format_float(h) for h in estimate.bandwidths))
    if estimate.shift is not None:
        lines.append(f"# shift: {format_float(estimate.shift)}")
    if estimate.reference is not None:
        lines.append(f"# reference: {estimate.reference.label}")

    if estimate.measure is not None:
        lines.append("# columns: atom")
        lines.extend(format_float(a) for a in estimate.measure.atoms)
    else:
        q = estimate.quantile
        if isinstance(q, GridQuantile):
            alphas, values = q.alphas, q.values
        else:
            alphas = midpoint_alphas(grid_size)
            values = q(alphas)
        if np.any(np.diff(values) < 0.0):
            raise ParseError("refusing to write a non-monotone quantile grid")
        lines.append(f"# {_GRID_MARKER}")
        lines.extend(
            f"{format_float(a)} {format_float(v)}" for a, v in zip(alphas, values)
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Report tables


def _report_row(r: RiskReport) -> dict:
    return {
        "model": r.model,
        "estimator": r.estimator,
        "n": r.n,
        "p": r.size_label,
        "M": r.replications,
        "risk": r.risk,
        "se": r.se,
        "seed": r.seed,
    }


def write_reports_csv(out, reports: list[RiskReport]) -> None:
    """CSV table with the fixed column set, newline-terminated rows."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in reports:
        row = _report_row(r)
        writer.writerow(
            [
                row["model"],
                row["estimator"],
                row["n"],
                row["p"],
                row["M"],
                format_float(row["risk"]),
                format_float(row["se"]),
                row["seed"],
            ]
        )


def write_reports_json(out, reports: list[RiskReport]) -> None:
    doc = {"schema": JSON_SCHEMA, "rows": [_report_row(r) for r in reports]}
    json.dump(doc, out, indent=2)
    out.write("\n")


def write_ratios_csv(out, rows: list[dict]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(RATIO_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                row["n"],
                row["p"],
                format_float(row["risk_numerator"]),
                format_float(row["risk_denominator"]),
                format_float(row["log_ratio"]),
            ]
        )


def write_ratios_json(out, rows: list[dict]) -> None:
    doc = {"schema": JSON_RATIO_SCHEMA, "rows": rows}
    json.dump(doc, out, indent=2)
    out.write("\n")


def reports_table_text(reports: list[RiskReport], fmt: str) -> str:
    buf = io.StringIO()
    if fmt == "csv":
        write_reports_csv(buf, reports)
    elif fmt == "json":
        write_reports_json(buf, reports)
    else:
        raise ParseError(f"unknown output format {fmt!r}; expected csv or json")
    return buf.getvalue()


def ratios_table_text(rows: list[dict], fmt: str) -> str:
    buf = io.StringIO()
    if fmt == "csv":
        write_ratios_csv(buf, rows)
    elif fmt == "json":
        write_ratios_json(buf, rows)
    else:
        raise ParseError(f"unknown output format {fmt!r}; expected csv or json")
    return buf.getvalue()
