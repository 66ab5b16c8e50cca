"""Telemetry summary tables and a dependency-free SVG line plot."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

from .sensornet import SensorKind
from .telemetry import Quality, TelemetryRecord
from .timeutil import iso

SUMMARY_COLUMNS = ["kind", "unit", "count", "valid", "mean", "min", "max", "first_t", "last_t"]


def summarize(records: Iterable[TelemetryRecord]) -> list[dict]:
    """Per-kind statistics over Valid readings, in sensor-code order."""
    by_kind: dict[SensorKind, list[TelemetryRecord]] = {}
    for r in records:
        by_kind.setdefault(r.kind, []).append(r)
    rows = []
    for kind in sorted(by_kind):
        recs = by_kind[kind]
        vals = [r.value for r in recs if r.quality is Quality.Valid]
        ts = [r.t for r in recs]
        rows.append({
            "kind": kind.name,
            "unit": kind.unit,
            "count": len(recs),
            "valid": len(vals),
            "mean": math.fsum(vals) / len(vals) if vals else None,
            "min": min(vals) if vals else None,
            "max": max(vals) if vals else None,
            "first_t": iso(min(ts)),
            "last_t": iso(max(ts)),
        })
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def summary_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def summary_markdown(rows: Sequence[dict]) -> str:
    lines = ["| " + " | ".join(SUMMARY_COLUMNS) + " |",
             "|" + "---|" * len(SUMMARY_COLUMNS)]
    for row in rows:
        lines.append("| " + " | ".join(_fmt(row[c]) for c in SUMMARY_COLUMNS) + " |")
    return "\n".join(lines) + "\n"


def series(records: Iterable[TelemetryRecord], kind: SensorKind,
           node_id: int | None = None) -> dict[int, list[tuple[float, float]]]:
    """Valid (t, value) points of one kind, grouped by node and time-sorted."""
    out: dict[int, list[tuple[float, float]]] = {}
    for r in records:
        if r.kind is kind and r.quality is Quality.Valid and (node_id is None or r.node_id == node_id):
            out.setdefault(r.node_id, []).append((r.t, r.value))
    for pts in out.values():
        pts.sort()
    return dict(sorted(out.items()))


_COLORS = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"]


def line_plot_svg(lines: dict[int, list[tuple[float, float]]], title: str, y_label: str,
                  width: int = 720, height: int = 360) -> str:
    """One polyline per node; x axis is seconds since the first sample.

    With no data the plot still has its frame, title and axis labels.
    """
    ml, mr, mt, mb = 60, 20, 30, 40
    pw, ph = width - ml - mr, height - mt - mb
    pts = [p for ps in lines.values() for p in ps]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">time since first sample (s)</text>',
        f'<text x="14" y="{mt + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {mt + ph / 2:.1f})">{escape(y_label)}</text>',
    ]
    if pts:
        t0 = min(p[0] for p in pts)
        t1 = max(p[0] for p in pts)
        v0 = min(p[1] for p in pts)
        v1 = max(p[1] for p in pts)
        if t1 == t0:
            t1 = t0 + 1.0
        if v1 == v0:
            v0, v1 = v0 - 0.5, v1 + 0.5

        def sx(t):
            return ml + (t - t0) / (t1 - t0) * pw

        def sy(v):
            return mt + ph - (v - v0) / (v1 - v0) * ph

        for k in range(5):
            v = v0 + (v1 - v0) * k / 4
            t = t0 + (t1 - t0) * k / 4
            parts.append(f'<text x="{ml - 4}" y="{sy(v) + 4:.1f}" text-anchor="end" font-size="10">{v:.4g}</text>')
            parts.append(f'<text x="{sx(t):.1f}" y="{mt + ph + 14}" text-anchor="middle" font-size="10">{t - t0:.0f}</text>')
        for idx, (node, ps) in enumerate(lines.items()):
            color = _COLORS[idx % len(_COLORS)]
            coords = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in ps)
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
            parts.append(f'<text x="{ml + pw - 4}" y="{mt + 14 + 14 * idx}" text-anchor="end" '
                         f'font-size="11" fill="{color}">node {node}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report(records: Sequence[TelemetryRecord], out_dir: str | Path,
                 kinds: Iterable[SensorKind] | None = None) -> dict[str, str]:
    """summary.csv, summary.md and one SVG per kind; returns name -> file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = summarize(records)
    (out / "summary.csv").write_text(summary_csv(rows))
    (out / "summary.md").write_text(summary_markdown(rows))
    files = {"summary_csv": "summary.csv", "summary_md": "summary.md"}
    if kinds is None:
        kinds = sorted({r.kind for r in records})
    for kind in kinds:
        name = f"{kind.name}.svg"
        svg = line_plot_svg(series(records, kind), f"{kind.name} over time", f"{kind.name} ({kind.unit})")
        (out / name).write_text(svg)
        files[f"plot_{kind.name}"] = name
    return files
