"""Evaluation reports (JSON), training curves (CSV) and an SVG curve chart."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from xml.sax.saxutils import escape

from .errors import FoodnetError
from .metrics import ClassRates, ConfusionMatrix, EvalReport
from .train import EpochRecord, TrainCurves

CURVE_COLUMNS = ("epoch", "train_loss", "train_acc", "test_loss", "test_acc", "eta")


class ReportIOError(FoodnetError):
    pass


def _write(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc


def report_to_dict(report: EvalReport) -> dict:
    return {
        "classes": list(report.classes),
        "matrix": report.matrix.counts.tolist(),
        "overall_accuracy": report.overall_accuracy,
        "per_class": [{"class": r.name, "tpr": r.tpr, "tnr": r.tnr, "rr": r.rr} for r in report.per_class],
        "mean_rr": report.mean_rr,
    }


def report_from_dict(doc: dict) -> EvalReport:
    try:
        return EvalReport(
            classes=list(doc["classes"]),
            matrix=ConfusionMatrix(doc["matrix"]),
            overall_accuracy=float(doc["overall_accuracy"]),
            per_class=[ClassRates(r["class"], float(r["tpr"]), float(r["tnr"]), float(r["rr"]))
                       for r in doc["per_class"]],
            mean_rr=float(doc["mean_rr"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportIOError(f"malformed report: {exc}") from exc


def emit_report(report: EvalReport, path, extra: dict | None = None) -> None:
    """Write the report as JSON.  Floats keep full precision; rounding is a
    presentation concern handled by :func:`format_report`."""
    doc = report_to_dict(report)
    if extra:
        doc.update(extra)
    _write(path, json.dumps(doc, indent=2) + "\n")


def parse_report(path) -> EvalReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportIOError(f"cannot read report {path}: {exc}") from exc
    return report_from_dict(doc)


def format_report(report: EvalReport) -> str:
    """Human-readable confusion matrix with a recognition-rate row, 4 decimals."""
    names = report.classes
    width = max(6, *(len(n) for n in names)) + 1
    lines = ["".ljust(width) + "".join(n[:width - 1].rjust(width) for n in names)]
    for name, row in zip(names, report.matrix.counts):
        lines.append(name.ljust(width) + "".join(str(v).rjust(width) for v in row))
    lines.append("R.R.".ljust(width) + "".join(f"{r.rr:.4f}".rjust(width) for r in report.per_class))
    lines.append(f"overall accuracy: {report.overall_accuracy:.4f}")
    lines.append(f"mean recognition rate: {report.mean_rr:.4f}")
    return "\n".join(lines)


def emit_curves(curves: TrainCurves, path) -> None:
    """CSV with header epoch,train_loss,train_acc,test_loss,test_acc,eta; floats in repr form."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVE_COLUMNS)
            for r in curves:
                w.writerow([r.epoch] + [repr(float(getattr(r, c))) for c in CURVE_COLUMNS[1:]])
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc


def read_curves(path) -> TrainCurves:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ReportIOError(f"cannot read curves {path}: {exc}") from exc
    try:
        recs = [EpochRecord(int(r["epoch"]), *(float(r[c]) for c in CURVE_COLUMNS[1:])) for r in rows]
    except (KeyError, ValueError) as exc:
        raise ReportIOError(f"malformed curve file {path}: {exc}") from exc
    return TrainCurves(recs)


def _polyline(xs, ys, x0, y0, w, h, ymax, color, label):
    n = max(len(xs), 2)
    pts = " ".join(
        f"{x0 + w * (x - 1) / (n - 1):.2f},{y0 + h - h * (y / ymax if ymax > 0 else 0):.2f}"
        for x, y in zip(xs, ys)
    )
    return f'<polyline class="series" data-series="{escape(label)}" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'


def render_chart(curves: TrainCurves, title: str = "") -> str:
    """Two panels: accuracy (left) and loss (right), train and test in each."""
    epochs = list(curves.column("epoch"))
    w, h, pad = 320, 220, 40
    loss_max = max([1e-9, *curves.column("train_loss"), *curves.column("test_loss")])
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * (w + 2 * pad)}" height="{h + 2 * pad + 20}">',
        f'<text x="{pad}" y="16" font-family="sans-serif" font-size="13">{escape(title)}</text>',
    ]
    panels = [
        ("accuracy", 1.0, [("train_acc", "#1f77b4"), ("test_acc", "#d62728")]),
        ("loss", loss_max, [("train_loss", "#1f77b4"), ("test_loss", "#d62728")]),
    ]
    for i, (name, ymax, series) in enumerate(panels):
        x0, y0 = pad + i * (w + 2 * pad), pad
        parts.append(f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#888"/>')
        parts.append(f'<text x="{x0}" y="{y0 + h + 30}" font-family="sans-serif" font-size="12">'
                     f'{name} vs epoch (max {ymax:.3g})</text>')
        for col, color in series:
            parts.append(_polyline(epochs, curves.column(col), x0, y0, w, h, ymax, color, col))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_chart(curves: TrainCurves, path, title: str = "") -> None:
    _write(path, render_chart(curves, title))
