"""CSV and standalone SVG output.

Floats are written with ``repr`` (shortest round-trip form) so the same
numbers always produce the same bytes.
"""

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN = 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if hasattr(v, "item"):  # numpy scalar; np.float64 subclasses float but reprs differently
        return _cell(v.item())
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        return list(csv.reader(fh))


class _Axes:
    def __init__(self, xs, ys, log_y=False):
        self.log_y = log_y
        ys = [self._ty(y) for y in ys if self._ok(y)]
        xs = [x for x in xs if math.isfinite(x)]
        self.x0, self.x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
        self.y0, self.y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y0, self.y1 = self.y0 - 0.5, self.y1 + 0.5

    def _ok(self, y):
        return math.isfinite(y) and (y > 0 or not self.log_y)

    def _ty(self, y):
        return math.log10(y) if self.log_y else y

    def px(self, x):
        return MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2 * MARGIN)

    def py(self, y):
        return HEIGHT - MARGIN - (self._ty(y) - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2 * MARGIN)

    def points(self, xs, ys):
        return " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys) if self._ok(y))


def _frame(ax, title, xlabel, ylabel):
    yl = f"log10 {ylabel}" if ax.log_y else ylabel
    left, right = MARGIN, WIDTH - MARGIN
    top, bottom = MARGIN, HEIGHT - MARGIN
    return [
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{top / 2}" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="15" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {HEIGHT / 2})">{escape(yl)}</text>',
        f'<text x="{left}" y="{bottom + 15}" font-size="10" text-anchor="middle">{ax.x0:.4g}</text>',
        f'<text x="{right}" y="{bottom + 15}" font-size="10" text-anchor="middle">{ax.x1:.4g}</text>',
        f'<text x="{left - 5}" y="{bottom}" font-size="10" text-anchor="end">{ax.y0:.4g}</text>',
        f'<text x="{left - 5}" y="{top + 4}" font-size="10" text-anchor="end">{ax.y1:.4g}</text>',
    ]


def _legend(labels):
    out = []
    for i, (label, color, dash) in enumerate(labels):
        y = MARGIN + 14 * i
        x = WIDTH - MARGIN - 150
        extra = ' stroke-dasharray="4 3"' if dash else ""
        out.append(f'<line x1="{x}" y1="{y}" x2="{x + 20}" y2="{y}" stroke="{color}"{extra}/>')
        out.append(f'<text x="{x + 25}" y="{y + 4}" font-size="10">{escape(label)}</text>')
    return out


def _wrap(body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">\n' + "\n".join(body) + "\n</svg>\n")


def line_plot(series, title="", xlabel="", ylabel="", log_y=False):
    """``series`` is a list of ``(label, xs, ys)`` or ``(label, xs, ys, dashed)``."""
    series = [s if len(s) == 4 else (*s, False) for s in series]
    ax = _Axes([x for s in series for x in s[1]], [y for s in series for y in s[2]], log_y)
    body = _frame(ax, title, xlabel, ylabel)
    legend = []
    for i, (label, xs, ys, dashed) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        extra = ' stroke-dasharray="4 3"' if dashed else ""
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{extra} '
                    f'points="{ax.points(xs, ys)}"/>')
        legend.append((label, color, dashed))
    return _wrap(body + _legend(legend))


def band_plot(xs, lower, upper, center, title="", xlabel="", ylabel="", label="dataset"):
    """Shaded ``[lower, upper]`` band with a center line."""
    ax = _Axes(list(xs), list(lower) + list(upper) + list(center))
    body = _frame(ax, title, xlabel, ylabel)
    outline = ax.points(xs, upper) + " " + ax.points(list(xs)[::-1], list(lower)[::-1])
    body.append(f'<polygon fill="{PALETTE[0]}" fill-opacity="0.25" stroke="none" points="{outline}"/>')
    body.append(f'<polyline fill="none" stroke="{PALETTE[1]}" stroke-width="1.5" points="{ax.points(xs, center)}"/>')
    return _wrap(body + _legend([("batch max/min", PALETTE[0], False), (label, PALETTE[1], False)]))


def scatter_plot(xs, ys, title="", xlabel="", ylabel="", diagonal=True):
    ax = _Axes(list(xs) + (list(ys) if diagonal else []), list(ys) + (list(xs) if diagonal else []))
    body = _frame(ax, title, xlabel, ylabel)
    if diagonal:
        lo, hi = max(ax.x0, ax.y0), min(ax.x1, ax.y1)
        body.append(f'<line x1="{ax.px(lo):.2f}" y1="{ax.py(lo):.2f}" x2="{ax.px(hi):.2f}" '
                    f'y2="{ax.py(hi):.2f}" stroke="gray" stroke-dasharray="4 3"/>')
    for x, y in zip(xs, ys):
        if math.isfinite(x) and math.isfinite(y):
            body.append(f'<circle cx="{ax.px(x):.2f}" cy="{ax.py(y):.2f}" r="2" fill="{PALETTE[0]}"/>')
    return _wrap(body)


def write_svg(path, svg):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg)
    return path
