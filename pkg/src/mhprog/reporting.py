"""CSV/JSON/SVG emitters shared by the commands."""

from __future__ import annotations

import csv
import json
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

TIMESTAMP_KEY = "generated_at"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isnan(f):
            return None
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, payload: dict, timestamp: bool = True) -> None:
    """Pretty JSON. The optional timestamp sits alone on the second line."""
    body = _clean(payload)
    if timestamp:
        body = {TIMESTAMP_KEY: datetime.now(timezone.utc).isoformat(timespec="seconds"), **body}
    Path(path).write_text(json.dumps(body, indent=1) + "\n", encoding="utf-8")


def strip_timestamp(text: str) -> str:
    return "\n".join(line for line in text.splitlines() if f'"{TIMESTAMP_KEY}"' not in line)


def write_roc_csv(path, thresholds, fpr, tpr) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, s in zip(thresholds, fpr, tpr):
            w.writerow([repr(float(t)), repr(float(f)), repr(float(s))])


def roc_svg(curves: dict, title: str = "", size: int = 320) -> str:
    """Minimal SVG of one or more ROC curves given as {label: (fpr, tpr, auc)}."""
    pad = 40
    inner = size - 2 * pad
    colours = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")

    def xy(f, t):
        return f"{pad + f * inner:.2f},{pad + (1 - t) * inner:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 16 * len(curves)}">',
        f'<rect x="{pad}" y="{pad}" width="{inner}" height="{inner}" fill="none" stroke="#000"/>',
        f'<line x1="{pad}" y1="{pad + inner}" x2="{pad + inner}" y2="{pad}" stroke="#aaa" stroke-dasharray="4"/>',
        f'<text x="{size / 2}" y="{pad - 12}" text-anchor="middle" font-size="12">{title}</text>',
        f'<text x="{size / 2}" y="{size - 10}" text-anchor="middle" font-size="11">1 - specificity</text>',
        f'<text x="12" y="{size / 2}" font-size="11" transform="rotate(-90 12 {size / 2})"'
        ' text-anchor="middle">sensitivity</text>',
    ]
    for i, (label, (fpr, tpr, auc)) in enumerate(curves.items()):
        c = colours[i % len(colours)]
        pts = " ".join(xy(f, t) for f, t in zip(fpr, tpr))
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{pad}" y="{size + 12 + 16 * i}" font-size="11" fill="{c}">'
                     f'{label} (AUC {auc:.3f})</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_table_csv(path, rows: list[dict], columns) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            out = []
            for c in columns:
                v = r.get(c)
                if v is None:
                    out.append("")
                elif isinstance(v, bool):
                    out.append("1" if v else "0")
                elif isinstance(v, float):
                    out.append(f"{v:.4f}")
                else:
                    out.append(str(v))
            w.writerow(out)


def coefficient_text(fit: dict, title: str) -> str:
    """Plain-text term table (B, S.E., Wald, p, OR, 95% CI) rounded to 3 decimals."""
    lines = [title, f"{'term':<28}{'B':>9}{'S.E.':>9}{'Wald':>9}{'p':>8}{'OR':>9}{'CI low':>9}{'CI high':>9}"]
    for t in fit["terms"]:
        vals = [t[k] for k in ("B", "SE", "wald", "p", "OR", "ci_low", "ci_high")]
        cells = [f"{v:>9.3f}" if isinstance(v, float) else f"{str(v):>9}" for v in vals]
        cells[3] = f"{vals[3]:>8.3f}" if isinstance(vals[3], float) else f"{str(vals[3]):>8}"
        lines.append(f"{t['name']:<28}" + "".join(cells))
    return "\n".join(lines) + "\n"
