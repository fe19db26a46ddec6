"""Write run telemetry to disk: rounds.csv, summary.json and one SVG chart per metric."""
from __future__ import annotations

import csv
import json
import math
import xml.etree.ElementTree as ET
from dataclasses import asdict
from pathlib import Path
from typing import Mapping, Sequence

from .runner import EVAL_METRICS, RunSummary

SVG_NS = "http://www.w3.org/2000/svg"
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _fmt(x: float) -> str:
    return repr(float(x))


def rounds_csv_rows(summary: RunSummary) -> list[list[str]]:
    metrics = [m for m in EVAL_METRICS if summary.rounds and m in summary.rounds[0].eval]
    rows = [["round", "global_loss", *metrics, "drift", "lambda_ref", "psi"]]
    for rec in summary.rounds:
        rows.append([str(rec.round), _fmt(rec.global_loss), *(_fmt(rec.eval[m]) for m in metrics),
                     _fmt(rec.drift), _fmt(rec.lambda_ref), _fmt(rec.psi)])
    return rows


def summary_to_dict(summary: RunSummary) -> dict:
    d = asdict(summary)
    d.pop("trajectory")
    return d


def line_chart_svg(title: str, series: Mapping[str, Sequence[float]],
                   width: int = 640, height: int = 360) -> str:
    """Render each named series as one ``<polyline>`` against its 1-based index."""
    ET.register_namespace("", SVG_NS)
    pad = 48
    values = [v for ys in series.values() for v in ys if math.isfinite(v)]
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    n_max = max((len(ys) for ys in series.values()), default=1)

    def xy(i: int, v: float) -> str:
        x = pad + (width - 2 * pad) * (i / max(n_max - 1, 1))
        y = height - pad - (height - 2 * pad) * ((v - lo) / (hi - lo))
        return f"{x:.2f},{y:.2f}"

    root = ET.Element(f"{{{SVG_NS}}}svg", width=str(width), height=str(height),
                      viewBox=f"0 0 {width} {height}")
    ET.SubElement(root, f"{{{SVG_NS}}}rect", x="0", y="0", width=str(width), height=str(height),
                  fill="white")
    t = ET.SubElement(root, f"{{{SVG_NS}}}text", x=str(width // 2), y="20",
                      **{"text-anchor": "middle", "font-family": "sans-serif", "font-size": "14"})
    t.text = title
    ET.SubElement(root, f"{{{SVG_NS}}}line", x1=str(pad), y1=str(height - pad),
                  x2=str(width - pad), y2=str(height - pad), stroke="black")
    ET.SubElement(root, f"{{{SVG_NS}}}line", x1=str(pad), y1=str(pad), x2=str(pad),
                  y2=str(height - pad), stroke="black")
    for label, y in ((f"{hi:.4g}", pad), (f"{lo:.4g}", height - pad)):
        e = ET.SubElement(root, f"{{{SVG_NS}}}text", x=str(pad - 4), y=str(y),
                          **{"text-anchor": "end", "font-family": "sans-serif", "font-size": "10"})
        e.text = label
    xl = ET.SubElement(root, f"{{{SVG_NS}}}text", x=str(width // 2), y=str(height - 12),
                       **{"text-anchor": "middle", "font-family": "sans-serif", "font-size": "11"})
    xl.text = "round"
    for k, (name, ys) in enumerate(series.items()):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(xy(i, v) for i, v in enumerate(ys) if math.isfinite(v))
        line = ET.SubElement(root, f"{{{SVG_NS}}}polyline", points=pts, fill="none",
                             stroke=color, **{"stroke-width": "1.5"})
        ET.SubElement(line, f"{{{SVG_NS}}}title").text = name
        lg = ET.SubElement(root, f"{{{SVG_NS}}}text", x=str(width - pad + 4), y=str(pad + 14 * k),
                           fill=color, **{"font-family": "sans-serif", "font-size": "10"})
        lg.text = name
    return ET.tostring(root, encoding="unicode", xml_declaration=True) + "\n"


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_rounds_csv(summary: RunSummary, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rounds_csv_rows(summary))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_outputs(summary: RunSummary, out_dir, label: str | None = None) -> list[Path]:
    """Write ``rounds.csv``, ``summary.json`` and ``<metric>.svg`` files under ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    label = label or summary.config.get("strategy", "run")
    written = [write_rounds_csv(summary, out / "rounds.csv")]

    p = out / "summary.json"
    _write(p, json.dumps(summary_to_dict(summary), indent=2) + "\n")
    written.append(p)

    for metric in ("global_loss", *EVAL_METRICS):
        if metric != "global_loss" and metric not in summary.rounds[0].eval:
            continue
        p = out / f"{metric}.svg"
        _write(p, line_chart_svg(f"{metric} vs round", {label: summary.series(metric).values}))
        written.append(p)
    return written
