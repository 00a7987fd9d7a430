"""CSV tables and small hand-written SVG charts for evaluation reports."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from xml.sax.saxutils import escape

from .metrics import REFERENCE_TABLE, EvaluationReport

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")
W, H = 560, 380
PAD_L, PAD_R, PAD_T, PAD_B = 60, 140, 30, 50


def _fmt(v: float) -> str:
    return f"{v:.4g}"


class _Frame:
    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0

    def px(self, x):
        return PAD_L + (x - self.x0) / (self.x1 - self.x0) * (W - PAD_L - PAD_R)

    def py(self, y):
        return H - PAD_B - (y - self.y0) / (self.y1 - self.y0) * (H - PAD_T - PAD_B)


def _axes(fr: _Frame, title, xlabel, ylabel, xticks, yticks):
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<line x1="{PAD_L}" y1="{H - PAD_B}" x2="{W - PAD_R}" y2="{H - PAD_B}" stroke="black"/>',
        f'<line x1="{PAD_L}" y1="{PAD_T}" x2="{PAD_L}" y2="{H - PAD_B}" stroke="black"/>',
    ]
    for x in xticks:
        px = fr.px(x)
        out.append(f'<line x1="{px:.1f}" y1="{H - PAD_B}" x2="{px:.1f}" y2="{H - PAD_B + 4}" stroke="black"/>')
        out.append(f'<text x="{px:.1f}" y="{H - PAD_B + 16}" text-anchor="middle">{_fmt(x)}</text>')
    for y in yticks:
        py = fr.py(y)
        out.append(f'<line x1="{PAD_L - 4}" y1="{py:.1f}" x2="{PAD_L}" y2="{py:.1f}" stroke="black"/>')
        out.append(f'<text x="{PAD_L - 6}" y="{py + 4:.1f}" text-anchor="end">{_fmt(y)}</text>')
    out.append(f'<text x="{(PAD_L + W - PAD_R) / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{(PAD_T + H - PAD_B) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(PAD_T + H - PAD_B) / 2:.1f})">{escape(ylabel)}</text>')
    return out


def _legend(names):
    out = []
    for k, name in enumerate(names):
        y = PAD_T + 10 + 16 * k
        color = PALETTE[k % len(PALETTE)]
        out.append(f'<line x1="{W - PAD_R + 10}" y1="{y}" x2="{W - PAD_R + 30}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - PAD_R + 34}" y="{y + 4}">{escape(str(name))}</text>')
    return out


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def line_chart(series: dict, title: str, xlabel: str, ylabel: str, ylim=None,
               step: bool = False, diagonal: bool = False) -> str:
    """``series`` maps a legend name to a list of (x, y) points."""
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    xlim = (min(xs), max(xs)) if xs else (0.0, 1.0)
    if ylim is None:
        ylim = (min(ys), max(ys)) if ys else (0.0, 1.0)
    fr = _Frame(xlim, ylim)
    out = _axes(fr, title, xlabel, ylabel, _ticks(*xlim), _ticks(*ylim))
    if diagonal:
        out.append(f'<line x1="{fr.px(0):.1f}" y1="{fr.py(0):.1f}" x2="{fr.px(1):.1f}" y2="{fr.py(1):.1f}" '
                   'stroke="#999" stroke-dasharray="4 3"/>')
    for k, (name, pts) in enumerate(series.items()):
        if not pts:
            continue
        color = PALETTE[k % len(PALETTE)]
        coords = []
        prev = None
        for x, y in pts:
            if step and prev is not None:
                coords.append(f"{fr.px(x):.1f},{fr.py(prev):.1f}")
            coords.append(f"{fr.px(x):.1f},{fr.py(y):.1f}")
            prev = y
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{" ".join(coords)}"/>')
        if not step:
            for x, y in pts:
                out.append(f'<circle cx="{fr.px(x):.1f}" cy="{fr.py(y):.1f}" r="3" fill="{color}"/>')
    out += _legend(list(series))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bar_chart(groups: list, series: dict, title: str, ylabel: str, ylim=(0.0, 1.0)) -> str:
    """Grouped bars: ``series`` maps a legend name to one value per group."""
    fr = _Frame((0, len(groups)), ylim)
    out = _axes(fr, title, "OTW (steps)", ylabel, [], _ticks(*ylim))
    n = max(len(series), 1)
    width = 0.8 / n
    for g, label in enumerate(groups):
        cx = fr.px(g + 0.5)
        out.append(f'<text x="{cx:.1f}" y="{H - PAD_B + 16}" text-anchor="middle">{escape(str(label))}</text>')
    for k, (name, values) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        for g, v in enumerate(values):
            if v is None or v != v:
                continue
            x = fr.px(g + 0.1 + k * width)
            top = fr.py(min(max(v, ylim[0]), ylim[1]))
            out.append(f'<rect x="{x:.1f}" y="{top:.1f}" width="{fr.px(width) - fr.px(0):.1f}" '
                       f'height="{fr.py(ylim[0]) - top:.1f}" fill="{color}"/>')
    out += _legend(list(series))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_report(report: EvaluationReport, out_dir: str | Path) -> list[Path]:
    """Write report.json, table.csv, ROC and history CSVs and the SVG charts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    put("report.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")

    table = out / "table.csv"
    with open(table, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "otw_steps", "accuracy", "f1", "auc", "f1_tpr_fpr", "n",
                    "reference_accuracy", "reference_f1", "reference_auc"])
        for r in report.rows:
            pub = REFERENCE_TABLE.get((r.model, r.otw_steps), (None, None, None))
            w.writerow([r.model, r.otw_steps, repr(r.accuracy), repr(r.f1), repr(r.auc),
                        "" if r.f1_tpr_fpr is None else repr(r.f1_tpr_fpr), r.n,
                        *["" if v is None else v for v in pub]])
    written.append(table)

    for key, curve in sorted(report.roc.items()):
        path = out / f"roc_{key.replace('@', '_otw')}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "fpr", "tpr"])
            for t, x, y in zip(curve.thresholds, curve.fpr, curve.tpr):
                w.writerow([repr(float(t)), repr(float(x)), repr(float(y))])
        written.append(path)

    for name, rows in sorted(report.histories.items()):
        path = out / f"history_{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "accuracy"])
            w.writerows(rows)
        written.append(path)

    models = sorted({r.model for r in report.rows})
    otws = sorted({r.otw_steps for r in report.rows})
    lookup = {(r.model, r.otw_steps): r for r in report.rows}

    acc_series = {m: [(o, lookup[m, o].accuracy) for o in otws if (m, o) in lookup] for m in models}
    put("accuracy_vs_otw.svg", line_chart(acc_series, "Test accuracy vs OTW", "OTW (steps)", "accuracy",
                                          ylim=(min([0.5] + [y for p in acc_series.values() for _, y in p]), 1.0)))

    f1_series = {m: [lookup[m, o].f1 if (m, o) in lookup else None for o in otws] for m in models}
    put("f1_bars.svg", bar_chart(otws, f1_series, "F1 score by OTW", "F1"))

    for o in otws:
        roc_series = {m: report.roc[f"{m}@{o}"].points() for m in models if f"{m}@{o}" in report.roc}
        if roc_series:
            put(f"roc_otw{o}.svg", line_chart(roc_series, f"ROC, OTW = {o} steps", "FPR", "TPR",
                                              ylim=(0.0, 1.0), step=True, diagonal=True))
    for m in models:
        roc_series = {f"OTW {o}": report.roc[f"{m}@{o}"].points() for o in otws if f"{m}@{o}" in report.roc}
        if roc_series:
            put(f"roc_{m}.svg", line_chart(roc_series, f"ROC of {m} across OTWs", "FPR", "TPR",
                                           ylim=(0.0, 1.0), step=True, diagonal=True))

    hist_series = {name: [(e, a) for e, _, a in rows if a == a]
                   for name, rows in sorted(report.histories.items()) if len(rows) > 1}
    if hist_series:
        put("training_accuracy.svg", line_chart(hist_series, "Test accuracy during training",
                                                "epoch", "accuracy", ylim=(0.0, 1.0)))
    return written
