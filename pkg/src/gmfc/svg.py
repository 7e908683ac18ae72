"""Tiny dependency-free SVG line and bar charts."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H = 480, 320
ML, MR, MT, MB = 64, 16, 32, 48
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _num(x) -> str:
    return f"{x:.2f}"


def _ticks(lo, hi, k=5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (k - 1) for i in range(k)]


def _frame(title, xlabel, ylabel):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="13" font-family="sans-serif">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle" font-size="11" font-family="sans-serif">{escape(xlabel)}</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="11" font-family="sans-serif" '
        f'transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>',
        f'<line x1="{ML}" y1="{H - MB}" x2="{W - MR}" y2="{H - MB}" stroke="black"/>',
        f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{H - MB}" stroke="black"/>',
    ]


def line_chart(series: dict, title="", xlabel="", ylabel="", logx=False, logy=False) -> str:
    """series: name -> (xs, ys)."""
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)
    pts = {k: [(tx(x), ty(y)) for x, y in zip(*v) if (not logx or x > 0) and (not logy or y > 0)]
           for k, v in series.items()}
    allx = [p[0] for v in pts.values() for p in v] or [0.0, 1.0]
    ally = [p[1] for v in pts.values() for p in v] or [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    sx = lambda x: ML + (x - x0) / (x1 - x0) * (W - ML - MR)
    sy = lambda y: H - MB - (y - y0) / (y1 - y0) * (H - MT - MB)
    out = _frame(title, xlabel, ylabel)
    for v in _ticks(y0, y1):
        lab = 10 ** v if logy else v
        out.append(f'<text x="{ML - 4}" y="{_num(sy(v) + 4)}" text-anchor="end" font-size="9" '
                   f'font-family="sans-serif">{lab:.3g}</text>')
    for v in _ticks(x0, x1):
        lab = 10 ** v if logx else v
        out.append(f'<text x="{_num(sx(v))}" y="{H - MB + 14}" text-anchor="middle" font-size="9" '
                   f'font-family="sans-serif">{lab:.3g}</text>')
    for k, (name, p) in enumerate(pts.items()):
        col = COLORS[k % len(COLORS)]
        if p:
            path = " ".join(f"{_num(sx(x))},{_num(sy(y))}" for x, y in p)
            out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{path}"/>')
            for x, y in p:
                out.append(f'<circle cx="{_num(sx(x))}" cy="{_num(sy(y))}" r="2.5" fill="{col}"/>')
        out.append(f'<text x="{W - MR - 4}" y="{MT + 12 + 14 * k}" text-anchor="end" font-size="10" '
                   f'font-family="sans-serif" fill="{col}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bar_chart(labels, values, errors=None, title="", ylabel="") -> str:
    values = [float(v) for v in values]
    errors = [float(e) for e in errors] if errors is not None else [0.0] * len(values)
    lo = min(0.0, min(v - e for v, e in zip(values, errors)))
    hi = max(0.0, max(v + e for v, e in zip(values, errors)))
    if hi == lo:
        hi = lo + 1.0
    sy = lambda y: H - MB - (y - lo) / (hi - lo) * (H - MT - MB)
    out = _frame(title, "", ylabel)
    slot = (W - ML - MR) / max(len(values), 1)
    for v in _ticks(lo, hi):
        out.append(f'<text x="{ML - 4}" y="{_num(sy(v) + 4)}" text-anchor="end" font-size="9" '
                   f'font-family="sans-serif">{v:.3g}</text>')
    for k, (lab, v, e) in enumerate(zip(labels, values, errors)):
        x = ML + slot * k + slot * 0.2
        top, bot = sy(max(v, 0.0)), sy(min(v, 0.0))
        out.append(f'<rect x="{_num(x)}" y="{_num(top)}" width="{_num(slot * 0.6)}" '
                   f'height="{_num(max(bot - top, 0.5))}" fill="{COLORS[k % len(COLORS)]}"/>')
        cx = x + slot * 0.3
        if e > 0:
            out.append(f'<line x1="{_num(cx)}" y1="{_num(sy(v - e))}" x2="{_num(cx)}" y2="{_num(sy(v + e))}" stroke="black"/>')
        out.append(f'<text x="{_num(cx)}" y="{H - MB + 14}" text-anchor="middle" font-size="9" '
                   f'font-family="sans-serif">{escape(str(lab))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
