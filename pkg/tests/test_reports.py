from __future__ import annotations

import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from ambiance.planted import planted_corpus
from ambiance.prediction import ComparisonRow, ComparisonTable, loo_evaluate
from ambiance.reports import (
    comparison_csv,
    comparison_markdown,
    error_bars_svg,
    heatmap_svg,
    n_effective_summary,
    prediction_csv,
    stars,
)
from ambiance.stats import correlation_matrix

SVG = "{http://www.w3.org/2000/svg}"


@pytest.mark.parametrize("p,mark", [(0.0001, "***"), (0.0099, "***"), (0.01, "**"), (0.049, "**"),
                                    (0.05, "*"), (0.099, "*"), (0.10, ""), (0.5, ""), (math.nan, "")])
def test_stars(p, mark):
    assert stars(p) == mark


@pytest.fixture(scope="module")
def corpus():
    return planted_corpus(6, face_absent_rate=0.47)


def test_heatmap_svg_well_formed(corpus):
    m = correlation_matrix(corpus.profiles, corpus.targets)
    svg = heatmap_svg(m, title="a <title> & more")
    root = ET.fromstring(svg)
    rects = root.findall(f"{SVG}rect")
    assert len(rects) == 129 * 18
    gray = sum(r.get("fill") == "#d9d9d9" for r in rects)
    with np.errstate(invalid="ignore"):
        assert gray == int((~(m.p < 0.05)).sum())
    assert heatmap_svg(m) == heatmap_svg(m)
    summary = n_effective_summary(m)
    assert len(summary) == 129 and max(summary.values()) == 49


def test_error_bars_and_prediction_csv(corpus):
    labels = corpus.targets[0].labels
    rep = loo_evaluate(corpus.X, corpus.Y, [f"f{i}" for i in range(129)], labels, dims=[0, 1, 2])
    root = ET.fromstring(error_bars_svg(rep))
    assert len(root.findall(f"{SVG}rect")) == 3
    lines = prediction_csv(rep).splitlines()
    assert lines[0] == "dimension,percent_mse,percent_rmse,accuracy_rho,accuracy_p" and len(lines) == 4


def test_comparison_renderings():
    row = ComparisonRow("calm", 0.5, 0.03, math.nan, math.nan, "people", ["a"], [], [], [], [], [])
    table = ComparisonTable([row])
    md = comparison_markdown(table)
    assert "| calm | **0.50**\\*\\* | n/a |" in md
    assert md.rstrip().endswith("Note: \\*\\*\\* = p < .01; \\*\\* = p < .05; \\* = p < .10")
    csv_lines = comparison_csv(table).splitlines()
    assert csv_lines[1].startswith("calm,0.5,0.03,**,,,,people,a,")
