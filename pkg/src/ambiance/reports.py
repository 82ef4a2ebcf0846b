"""Plain-text report renderers: SVG heatmaps and bar charts, comparison tables.

SVG is written by hand so renderings are byte-stable and diffable.
"""

from __future__ import annotations

import csv
import io
import math
from html import escape
from typing import Sequence

import numpy as np

from .prediction import ComparisonTable, PredictionReport
from .stats import CorrelationMatrix

STAR_LEVELS = ((0.01, "***"), (0.05, "**"), (0.10, "*"))
STAR_FOOTER = "Note: *** = p < .01; ** = p < .05; * = p < .10"


def stars(p: float) -> str:
    if p is None or math.isnan(p):
        return ""
    for level, mark in STAR_LEVELS:
        if p < level:
            return mark
    return ""


def _fmt(x: float, digits: int = 2) -> str:
    return "n/a" if x is None or math.isnan(x) else f"{x:.{digits}f}"


def _diverging(rho: float) -> str:
    """Blue for negative, red for positive, white at zero."""
    t = max(-1.0, min(1.0, rho))
    if t >= 0:
        r, g, b = 255, round(255 * (1 - t)), round(255 * (1 - t))
    else:
        r, g, b = round(255 * (1 + t)), round(255 * (1 + t)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(matrix: CorrelationMatrix, title: str = "", alpha: float | None = None,
                cell: int = 12) -> str:
    """Rows = features, columns = ambiances; insignificant or undefined cells in gray."""
    alpha = matrix.alpha if alpha is None else alpha
    n_rows, n_cols = matrix.shape
    left, top = 170, 110
    width = left + n_cols * cell + 20
    height = top + n_rows * cell + 20
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="9">',
        f'<text x="4" y="14" font-size="12">{escape(title)}</text>',
    ]
    for j, col in enumerate(matrix.cols):
        x = left + j * cell + cell / 2
        out.append(f'<text transform="translate({x:.1f},{top - 4}) rotate(-60)">{escape(col)}</text>')
    for i, row in enumerate(matrix.rows):
        y = top + i * cell
        out.append(f'<text x="{left - 4}" y="{y + cell - 3}" text-anchor="end">{escape(row)}</text>')
        for j in range(n_cols):
            rho, p = matrix.rho[i, j], matrix.p[i, j]
            sig = not (math.isnan(rho) or math.isnan(p)) and p < alpha
            fill = _diverging(float(rho)) if sig else "#d9d9d9"
            tip = f"{row} / {matrix.cols[j]}: rho={_fmt(float(rho))} p={_fmt(float(p), 3)}"
            out.append(f'<rect x="{left + j * cell}" y="{y}" width="{cell}" height="{cell}" '
                       f'fill="{fill}" stroke="#ffffff" stroke-width="0.5"><title>{escape(tip)}</title></rect>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def error_bars_svg(report: PredictionReport, metric: str = "percent_rmse", title: str = "") -> str:
    """Horizontal bar per ambiance dimension with its leave-one-out error."""
    dims = list(report.dimensions.values())
    values = [getattr(d, metric) for d in dims]
    vmax = max([v for v in values if not math.isnan(v)] + [10.0])
    bar_h, left, top, span = 16, 120, 30, 300
    width = left + span + 60
    height = top + bar_h * len(dims) + 30
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
        f'<text x="4" y="16" font-size="12">{escape(title or metric)}</text>',
    ]
    ref_x = left + span * 10.0 / vmax
    for k, (d, v) in enumerate(zip(dims, values)):
        y = top + k * bar_h
        w = 0.0 if math.isnan(v) else span * v / vmax
        out.append(f'<text x="{left - 4}" y="{y + bar_h - 4}" text-anchor="end">{escape(d.dimension)}</text>')
        out.append(f'<rect x="{left}" y="{y + 2}" width="{w:.2f}" height="{bar_h - 4}" fill="#4c72b0"/>')
        out.append(f'<text x="{left + w + 3:.2f}" y="{y + bar_h - 4}">{_fmt(v, 1)}</text>')
    out.append(f'<line x1="{ref_x:.2f}" y1="{top}" x2="{ref_x:.2f}" y2="{top + bar_h * len(dims)}" '
               f'stroke="#c44e52" stroke-dasharray="4 2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _rho_cell(rho: float, p: float, bold: bool) -> str:
    # stars are escaped so they never merge with the bold markers
    num = f"**{_fmt(rho)}**" if bold else _fmt(rho)
    return num + stars(p).replace("*", "\\*")


def comparison_markdown(table: ComparisonTable) -> str:
    lines = [
        "| Ambiance | People | Algorithm | | People top-5 | Algorithm top-5 | Both |",
        "|---|---|---|---|---|---|---|",
    ]
    for r in table.rows:
        people = _rho_cell(r.people_rho, r.people_p, r.winner in ("people", "tie"))
        alg = _rho_cell(r.algorithm_rho, r.algorithm_p, r.winner in ("algorithm", "tie"))
        lines.append(f"| {r.dimension} | {people} | {alg} | up | {', '.join(r.people_up)} | "
                     f"{', '.join(r.algorithm_up)} | {', '.join(r.both_up)} |")
        lines.append(f"| | | | down | {', '.join(r.people_down)} | {', '.join(r.algorithm_down)} | "
                     f"{', '.join(r.both_down)} |")
    lines += ["", STAR_FOOTER.replace("*", "\\*"), ""]
    return "\n".join(lines)


def comparison_csv(table: ComparisonTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dimension", "people_rho", "people_p", "people_stars", "algorithm_rho", "algorithm_p",
                "algorithm_stars", "winner", "people_up", "people_down", "algorithm_up", "algorithm_down",
                "both_up", "both_down"])
    for r in table.rows:
        w.writerow([r.dimension, _num(r.people_rho), _num(r.people_p), stars(r.people_p), _num(r.algorithm_rho),
                    _num(r.algorithm_p), stars(r.algorithm_p), r.winner, ";".join(r.people_up),
                    ";".join(r.people_down), ";".join(r.algorithm_up), ";".join(r.algorithm_down),
                    ";".join(r.both_up), ";".join(r.both_down)])
    return buf.getvalue()


def _num(x: float) -> str:
    return "" if x is None or math.isnan(x) else repr(float(x))


def prediction_csv(report: PredictionReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dimension", "percent_mse", "percent_rmse", "accuracy_rho", "accuracy_p"])
    for row in report.summary_rows():
        w.writerow([row["dimension"], _num(row["percent_mse"]), _num(row["percent_rmse"]),
                    _num(row["accuracy_rho"]), _num(row["accuracy_p"])])
    return buf.getvalue()


def significant_csv(cells: Sequence) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "ambiance", "rho", "p_value", "n_effective"])
    for c in cells:
        w.writerow([c.feature, c.ambiance, repr(c.rho), repr(c.p_value), c.n_effective])
    return buf.getvalue()


def n_effective_summary(matrix: CorrelationMatrix) -> dict[str, int]:
    """Smallest complete-pair count per row, a quick view of missing-data cost."""
    return {r: int(np.min(n)) for r, n in zip(matrix.rows, matrix.n)}
