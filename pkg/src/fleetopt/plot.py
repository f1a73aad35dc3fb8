"""Minimal SVG line chart of a run history (best simulated vs. best predicted per generation)."""

from __future__ import annotations

import csv
import math
from pathlib import Path

from .solution import ValidationError

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=90, right=20, top=30, bottom=50)
SERIES = (("f_star", "best simulated", "#1f77b4"), ("gen_best_pred", "best predicted", "#d62728"))


def read_history(path) -> dict[str, list[float]]:
    """Load the columns needed for the chart from a history CSV."""
    p = Path(path)
    try:
        with open(p, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError:
        raise ValidationError("history", f"file not found: {p}") from None
    if not rows:
        raise ValidationError("history", f"{p}: no data rows")
    need = ("generation",) + tuple(s[0] for s in SERIES)
    missing = [c for c in need if c not in rows[0]]
    if missing:
        raise ValidationError("history", f"{p}: missing column {missing[0]!r}")
    out = {c: [] for c in need}
    for n, r in enumerate(rows, start=2):
        for c in need:
            try:
                out[c].append(float(r[c]))
            except (TypeError, ValueError):
                raise ValidationError("history", f"{p}: line {n}: bad value in {c!r}") from None
    return out


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(v)
        v += step
    return ticks


def history_svg(hist: dict[str, list[float]], title: str = "Best fitness per generation") -> str:
    gens = hist["generation"]
    values = [v for key, _, _ in SERIES for v in hist[key] if math.isfinite(v)]
    if not values:
        values = [0.0]
    lo, hi = min(values), max(values)
    pad = 0.05 * (hi - lo) if hi > lo else max(1.0, abs(lo) * 0.05)
    lo, hi = lo - pad, hi + pad
    g_lo, g_hi = min(gens), max(gens)
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(g):
        if g_hi == g_lo:
            return MARGIN["left"] + pw / 2
        return MARGIN["left"] + pw * (g - g_lo) / (g_hi - g_lo)

    def sy(v):
        return MARGIN["top"] + ph * (hi - v) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{MARGIN["left"]}" y1="{MARGIN["top"] + ph}" x2="{MARGIN["left"] + pw}" '
        f'y2="{MARGIN["top"] + ph}" stroke="black"/>',
        f'<line x1="{MARGIN["left"]}" y1="{MARGIN["top"]}" x2="{MARGIN["left"]}" '
        f'y2="{MARGIN["top"] + ph}" stroke="black"/>',
    ]
    for g in gens:
        x = sx(g)
        out.append(f'<g class="xtick"><line x1="{_fmt(x)}" y1="{MARGIN["top"] + ph}" x2="{_fmt(x)}" '
                   f'y2="{MARGIN["top"] + ph + 5}" stroke="black"/>'
                   f'<text x="{_fmt(x)}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle">{g:g}</text></g>')
    for v in _ticks(lo, hi):
        y = sy(v)
        out.append(f'<g class="ytick"><line x1="{MARGIN["left"] - 5}" y1="{_fmt(y)}" x2="{MARGIN["left"]}" '
                   f'y2="{_fmt(y)}" stroke="black"/>'
                   f'<text x="{MARGIN["left"] - 8}" y="{_fmt(y + 4)}" text-anchor="end">{v:,.0f}</text></g>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.0f}" y="{HEIGHT - 10}" text-anchor="middle">generation</text>')
    for k, (key, label, colour) in enumerate(SERIES):
        pts = [(sx(g), sy(v)) for g, v in zip(gens, hist[key]) if math.isfinite(v)]
        if pts:
            path = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
            out.append(f'<polyline class="{key}" fill="none" stroke="{colour}" stroke-width="2" points="{path}"/>')
            for x, y in pts:
                out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="{colour}"/>')
        ly = MARGIN["top"] + 12 + 16 * k
        lx = MARGIN["left"] + pw - 130
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>'
                   f'<text x="{lx + 26}" y="{ly}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_history(csv_path, svg_path, title: str = "Best fitness per generation") -> None:
    """Render ``csv_path`` to ``svg_path``; nothing is written if the CSV is unusable."""
    svg = history_svg(read_history(csv_path), title)
    Path(svg_path).write_text(svg)
