"""Minimal standalone SVG charts: scatter plots and line plots with ticked axes."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 800, 600
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 80, 160, 40, 60
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9) * step
    ticks, v = [], first
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _label(v: float) -> str:
    return f"{v:.4g}"


class _Frame:
    """Maps data coordinates to the plot rectangle, optionally log10 on y."""

    def __init__(self, xs, ys, logy=False, equal=False):
        self.logy = logy
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if logy:
            ys = np.log10(ys[ys > 0])
        xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
        self.x0, self.x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
        self.y0, self.y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
        for a, b in (("x0", "x1"), ("y0", "y1")):
            lo, hi = getattr(self, a), getattr(self, b)
            pad = 0.05 * (hi - lo) if hi > lo else 0.5
            setattr(self, a, lo - pad)
            setattr(self, b, hi + pad)
        self.pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
        self.ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
        if equal:
            span = max(self.x1 - self.x0, (self.y1 - self.y0) * self.pw / self.ph)
            cx, cy = 0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)
            self.x0, self.x1 = cx - span / 2, cx + span / 2
            yspan = span * self.ph / self.pw
            self.y0, self.y1 = cy - yspan / 2, cy + yspan / 2

    def px(self, x):
        return MARGIN_LEFT + (np.asarray(x, float) - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y):
        y = np.asarray(y, float)
        if self.logy:
            with np.errstate(divide="ignore", invalid="ignore"):
                y = np.log10(y)
        return MARGIN_TOP + (self.y1 - y) / (self.y1 - self.y0) * self.ph

    def axes(self, xlabel: str, ylabel: str, title: str) -> list[str]:
        left, right = MARGIN_LEFT, MARGIN_LEFT + self.pw
        top, bottom = MARGIN_TOP, MARGIN_TOP + self.ph
        out = [
            f'<rect x="{left}" y="{top}" width="{self.pw}" height="{self.ph}" '
            'fill="none" stroke="#333" stroke-width="1"/>'
        ]
        for v in nice_ticks(self.x0, self.x1):
            x = float(self.px(v))
            out.append(f'<line x1="{x:.2f}" y1="{bottom}" x2="{x:.2f}" y2="{bottom + 5}" stroke="#333"/>')
            out.append(
                f'<text x="{x:.2f}" y="{bottom + 20}" font-size="12" text-anchor="middle">{_label(v)}</text>'
            )
        for v in nice_ticks(self.y0, self.y1):
            y = MARGIN_TOP + (self.y1 - v) / (self.y1 - self.y0) * self.ph
            text = _label(10.0**v) if self.logy else _label(v)
            out.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="#333"/>')
            out.append(
                f'<text x="{left - 8}" y="{y + 4:.2f}" font-size="12" text-anchor="end">{text}</text>'
            )
        out.append(
            f'<text x="{left + self.pw / 2:.1f}" y="{HEIGHT - 15}" font-size="14" '
            f'text-anchor="middle">{escape(xlabel)}</text>'
        )
        out.append(
            f'<text x="20" y="{top + self.ph / 2:.1f}" font-size="14" text-anchor="middle" '
            f'transform="rotate(-90 20 {top + self.ph / 2:.1f})">{escape(ylabel)}</text>'
        )
        if title:
            out.append(
                f'<text x="{WIDTH / 2}" y="24" font-size="16" text-anchor="middle">{escape(title)}</text>'
            )
        return out


def _legend(names) -> list[str]:
    out = []
    x = WIDTH - MARGIN_RIGHT + 15
    for i, name in enumerate(names):
        y = MARGIN_TOP + 10 + 20 * i
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<rect x="{x}" y="{y - 9}" width="12" height="12" fill="{color}"/>')
        out.append(f'<text x="{x + 18}" y="{y + 2}" font-size="12">{escape(str(name))}</text>')
    return out


def _document(body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    )
    return "\n".join([head, f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>', *body, "</svg>"]) + "\n"


def scatter_svg(clouds: dict[str, np.ndarray], title: str = "", radius: float = 1.5) -> str:
    """One circle element per point; clouds share axes with equal aspect."""
    allpts = np.concatenate([np.asarray(p, float)[:, :2] for p in clouds.values()])
    frame = _Frame(allpts[:, 0], allpts[:, 1], equal=True)
    body = frame.axes("x1", "x2", title)
    for i, pts in enumerate(clouds.values()):
        color = PALETTE[i % len(PALETTE)]
        pts = np.asarray(pts, float)
        for cx, cy in zip(frame.px(pts[:, 0]), frame.py(pts[:, 1])):
            body.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{radius}" fill="{color}" fill-opacity="0.6"/>')
    if len(clouds) > 1:
        body += _legend(clouds.keys())
    return _document(body)


def line_svg(x, series: dict[str, np.ndarray], xlabel: str = "", ylabel: str = "",
             title: str = "", logy: bool = False) -> str:
    """One polyline per series; NaN values break the line."""
    x = np.asarray(x, float)
    ys = np.concatenate([np.asarray(v, float) for v in series.values()])
    frame = _Frame(x, ys, logy=logy)
    body = frame.axes(xlabel, ylabel, title)
    for i, y in enumerate(series.values()):
        color = PALETTE[i % len(PALETTE)]
        px, py = frame.px(x), frame.py(np.asarray(y, float))
        ok = np.isfinite(px) & np.isfinite(py)
        runs, cur = [], []
        for a, b, good in zip(px, py, ok):
            if good:
                cur.append(f"{a:.2f},{b:.2f}")
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        for run in runs:
            body.append(
                f'<polyline points="{" ".join(run)}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
    body += _legend(series.keys())
    return _document(body)
