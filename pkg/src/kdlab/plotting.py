"""Dependency-free SVG rendering for histograms, line plots, grid heat maps and scatters.

Numbers are written with fixed precision, so identical inputs give identical bytes.
"""
from __future__ import annotations

import math

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 50


def _escape(text):
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def _f(v):
    return f"{v:.2f}"


def _fmt_tick(v):
    return f"{v:.3g}"


def _span(lo, hi):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("cannot plot non-finite data")
    if lo == hi:
        pad = abs(lo) * 0.5 or 0.5
        return lo - pad, hi + pad
    return lo, hi


class _Canvas:
    def __init__(self, title, x_label="", y_label=""):
        self.parts = []
        self.title, self.x_label, self.y_label = title, x_label, y_label
        self.pw = WIDTH - LEFT - RIGHT
        self.ph = HEIGHT - TOP - BOTTOM

    def set_range(self, x0, x1, y0, y1):
        self.x0, self.x1 = _span(x0, x1)
        self.y0, self.y1 = _span(y0, y1)

    def sx(self, x):
        return LEFT + (x - self.x0) / (self.x1 - self.x0) * self.pw

    def sy(self, y):
        return TOP + self.ph - (y - self.y0) / (self.y1 - self.y0) * self.ph

    def add(self, s):
        self.parts.append(s)

    def axes(self, n_ticks=5):
        b = TOP + self.ph
        self.add(f'<line x1="{LEFT}" y1="{b}" x2="{LEFT + self.pw}" y2="{b}" stroke="black"/>')
        self.add(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}" stroke="black"/>')
        for i in range(n_ticks + 1):
            xv = self.x0 + (self.x1 - self.x0) * i / n_ticks
            yv = self.y0 + (self.y1 - self.y0) * i / n_ticks
            self.add(f'<text x="{_f(self.sx(xv))}" y="{b + 16}" font-size="10" '
                     f'text-anchor="middle">{_fmt_tick(xv)}</text>')
            self.add(f'<text x="{LEFT - 6}" y="{_f(self.sy(yv) + 3)}" font-size="10" '
                     f'text-anchor="end">{_fmt_tick(yv)}</text>')

    def render(self):
        head = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2:.1f}" y="22" font-size="14" text-anchor="middle">{_escape(self.title)}</text>',
        ]
        tail = [
            f'<text x="{LEFT + self.pw / 2:.1f}" y="{HEIGHT - 12}" font-size="12" '
            f'text-anchor="middle">{_escape(self.x_label)}</text>',
            f'<text x="16" y="{TOP + self.ph / 2:.1f}" font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 16 {TOP + self.ph / 2:.1f})">{_escape(self.y_label)}</text>',
            "</svg>",
        ]
        return "\n".join(head + self.parts + tail) + "\n"


def _floats(values):
    return [float(v) for v in values]


def histogram_svg(lefts, rights, counts, title="", x_label="value"):
    lefts, rights, counts = _floats(lefts), _floats(rights), [int(n) for n in counts]
    if not counts:
        raise ValueError("empty histogram")
    c = _Canvas(title, x_label, "count")
    c.set_range(min(lefts), max(rights), 0.0, max(max(counts), 1))
    c.axes()
    for lo, hi, n in zip(lefts, rights, counts):
        x0, x1 = c.sx(lo), c.sx(hi)
        if x1 - x0 < 1.0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        y = c.sy(n)
        c.add(f'<rect class="bar" x="{_f(x0)}" y="{_f(y)}" width="{_f(x1 - x0)}" '
              f'height="{_f(c.sy(0) - y)}" fill="{COLORS[0]}" stroke="white" stroke-width="0.5"/>')
    return c.render()


def line_svg(x, series, title="", x_label="x", y_label="y"):
    """``series``: list of ``(name, y_values)`` sharing ``x``."""
    x = _floats(x)
    series = [(name, _floats(vals)) for name, vals in series]
    if not x or not series:
        raise ValueError("nothing to plot")
    ys = [v for _, vals in series for v in vals]
    c = _Canvas(title, x_label, y_label)
    c.set_range(min(x), max(x), min(ys), max(ys))
    c.axes()
    for i, (name, vals) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{_f(c.sx(a))},{_f(c.sy(b))}" for a, b in zip(x, vals))
        c.add(f'<polyline class="series" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = TOP + 12 + 14 * i
        c.add(f'<text x="{WIDTH - RIGHT - 4}" y="{ly}" font-size="11" text-anchor="end" '
              f'fill="{color}">{_escape(name)}</text>')
    return c.render()


def scatter_svg(x, y, labels=None, title="", x_label="x", y_label="y"):
    x, y = _floats(x), _floats(y)
    if not x:
        raise ValueError("nothing to plot")
    c = _Canvas(title, x_label, y_label)
    c.set_range(min(x), max(x), min(y), max(y))
    c.axes()
    keys = sorted(set(labels)) if labels is not None else [None]
    color_of = {k: COLORS[i % len(COLORS)] for i, k in enumerate(keys)}
    for i in range(len(x)):
        color = color_of[labels[i] if labels is not None else None]
        c.add(f'<circle class="point" cx="{_f(c.sx(x[i]))}" cy="{_f(c.sy(y[i]))}" r="2" '
              f'fill="{color}" fill-opacity="0.6"/>')
    return c.render()


def _heat_color(t):
    # white -> dark blue
    t = min(max(t, 0.0), 1.0)
    r = int(round(247 - t * (247 - 8)))
    g = int(round(251 - t * (251 - 48)))
    b = int(round(255 - t * (255 - 107)))
    return f"#{r:02x}{g:02x}{b:02x}"


def grid_heat_svg(row_labels, col_labels, values, title="", x_label="", y_label=""):
    """``values[i][j]`` is the cell for ``row_labels[i]``, ``col_labels[j]``; ``None`` = missing."""
    nr, nc = len(row_labels), len(col_labels)
    if nr == 0 or nc == 0:
        raise ValueError("empty grid")
    c = _Canvas(title, x_label, y_label)
    flat = [v for row in values for v in row if v is not None]
    lo, hi = (min(flat), max(flat)) if flat else (0.0, 1.0)
    cw, ch = c.pw / nc, c.ph / nr
    for i in range(nr):
        for j in range(nc):
            v = values[i][j]
            t = 0.0 if v is None or hi == lo else (v - lo) / (hi - lo)
            fill = "#dddddd" if v is None else _heat_color(t)
            x, y = LEFT + j * cw, TOP + i * ch
            c.add(f'<rect class="cell" x="{_f(x)}" y="{_f(y)}" width="{_f(cw)}" height="{_f(ch)}" '
                  f'fill="{fill}" stroke="white"/>')
            if v is not None:
                ink = "white" if t > 0.6 else "black"
                c.add(f'<text x="{_f(x + cw / 2)}" y="{_f(y + ch / 2 + 4)}" font-size="10" '
                      f'text-anchor="middle" fill="{ink}">{v:.4f}</text>')
    for j, lab in enumerate(col_labels):
        c.add(f'<text x="{_f(LEFT + (j + 0.5) * cw)}" y="{TOP + c.ph + 16}" font-size="10" '
              f'text-anchor="middle">{_escape(lab)}</text>')
    for i, lab in enumerate(row_labels):
        c.add(f'<text x="{LEFT - 6}" y="{_f(TOP + (i + 0.5) * ch + 3)}" font-size="10" '
              f'text-anchor="end">{_escape(lab)}</text>')
    return c.render()
