import json

import pytest

from foodnet.fixtures import CNN_CONFUSION, FOOD_CLASSES
from foodnet.metrics import ConfusionMatrix, EvalReport
from foodnet.report import (CURVE_COLUMNS, ReportIOError, emit_chart, emit_curves, emit_report,
                            format_report, parse_report, read_curves, render_chart)
from foodnet.train import EpochRecord, TrainCurves


@pytest.fixture
def report():
    return EvalReport.from_matrix(ConfusionMatrix(CNN_CONFUSION), FOOD_CLASSES)


@pytest.fixture
def curves():
    return TrainCurves([EpochRecord(e, 2.0 / e, 0.1 * e, 2.5 / e, 0.08 * e, 0.001 * e) for e in range(1, 6)])


def test_report_round_trip(report, tmp_path):
    emit_report(report, tmp_path / "r.json")
    back = parse_report(tmp_path / "r.json")
    assert back.matrix == report.matrix
    assert back.classes == report.classes
    for a, b in zip(back.per_class, report.per_class):
        assert a == b
    assert back.mean_rr == pytest.approx(report.mean_rr, rel=1e-6)


def test_report_extra_fields(report, tmp_path):
    emit_report(report, tmp_path / "r.json", extra={"model": "cnn"})
    assert json.loads((tmp_path / "r.json").read_text())["model"] == "cnn"


def test_format_report(report):
    text = format_report(report)
    assert "0.9533" in text
    assert "overall accuracy: 0.9041" in text
    assert text.splitlines()[1].split()[:2] == ["Apple", "193"]


def test_malformed_report(tmp_path):
    (tmp_path / "bad.json").write_text('{"classes": []}')
    with pytest.raises(ReportIOError):
        parse_report(tmp_path / "bad.json")
    with pytest.raises(ReportIOError):
        parse_report(tmp_path / "missing.json")


def test_curves_round_trip(curves, tmp_path):
    emit_curves(curves, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == ",".join(CURVE_COLUMNS)
    assert len(lines) == 6
    assert read_curves(tmp_path / "c.csv").records == curves.records


def test_chart_has_four_series(curves, tmp_path):
    svg = render_chart(curves, "demo")
    assert svg.startswith("<svg") and svg.count('class="series"') == 4
    for col in ("train_acc", "test_acc", "train_loss", "test_loss"):
        assert f'data-series="{col}"' in svg
    emit_chart(curves, tmp_path / "c.svg")
    assert (tmp_path / "c.svg").read_text() == svg.replace("demo", "")


def test_unwritable_path(curves, tmp_path):
    with pytest.raises(ReportIOError):
        emit_chart(curves, tmp_path / "no" / "dir" / "c.svg")
