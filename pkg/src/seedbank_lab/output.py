"""Result emission: CSV, JSON-lines, SVG plots, and the run manifest.

Everything written here is byte-stable: floats go through repr-style %.17g
formatting, JSON keys are sorted, and the SVG is assembled by hand with
fixed coordinate precision. Wall-clock and host facts live in a separate
run_info.json that determinism comparisons are expected to skip.
"""

from __future__ import annotations

import hashlib
import json
import math
import os

import numpy as np

from .errors import ConfigError


def fmt(x) -> str:
    """Decimal text that round-trips a float64 exactly (17 significant digits)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (str, np.str_)):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_csv(path, header, columns):
    """Columns are equal-length sequences; order fixes the byte layout."""
    cols = [np.asarray(c) for c in columns]
    if len(cols) != len(header):
        raise ValueError(f"{len(header)} header fields but {len(cols)} columns")
    if cols and any(c.shape[0] != cols[0].shape[0] for c in cols):
        raise ValueError("columns differ in length")
    rows = cols[0].shape[0] if cols else 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in range(rows):
            fh.write(",".join(fmt(c[r]) for c in cols) + "\n")


def read_csv(path):
    """Inverse of write_csv: (header, columns as float arrays)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        raw = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    cols = []
    for k in range(len(header)):
        cols.append(np.array([float(row[k]) for row in raw]))
    return header, cols


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":"),
                                allow_nan=False) + "\n")


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# SVG

# Plots are assembled by hand so the bytes depend only on the data.

_PALETTE = ("#2c6fbb", "#c23b22", "#3b7a3b", "#8a5fb0", "#b8860b", "#3a9fa8",
            "#b05c7f", "#6b6b6b")


def _c(x) -> str:
    return format(float(x), ".6g")


class SvgCanvas:
    def __init__(self, width=640, height=420, margin=54):
        self.w, self.h, self.m = width, height, margin
        self.parts = []
        self._xlim = (0.0, 1.0)
        self._ylim = (0.0, 1.0)

    def _map(self, x, y, xlim, ylim):
        fx = (x - xlim[0]) / (xlim[1] - xlim[0])
        fy = (y - ylim[0]) / (ylim[1] - ylim[0])
        return self.m + fx * (self.w - 2 * self.m), self.h - self.m - fy * (self.h - 2 * self.m)

    def set_limits(self, xlim, ylim):
        self._xlim, self._ylim = xlim, ylim

    def frame(self, xlim, ylim, xlabel, ylabel, title):
        w, h, m = self.w, self.h, self.m
        self.parts.append(
            f'<rect x="{m}" y="{m}" width="{w - 2 * m}" height="{h - 2 * m}" '
            f'fill="none" stroke="#404040" stroke-width="1"/>')
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            xv = xlim[0] + frac * (xlim[1] - xlim[0])
            yv = ylim[0] + frac * (ylim[1] - ylim[0])
            px, _ = self._map(xv, ylim[0], xlim, ylim)
            _, py = self._map(xlim[0], yv, xlim, ylim)
            self.parts.append(
                f'<line x1="{_c(px)}" y1="{h - m}" x2="{_c(px)}" y2="{h - m + 4}" '
                f'stroke="#404040"/>')
            self.parts.append(
                f'<text x="{_c(px)}" y="{h - m + 16}" font-size="10" '
                f'text-anchor="middle">{_c(xv)}</text>')
            self.parts.append(
                f'<line x1="{m - 4}" y1="{_c(py)}" x2="{m}" y2="{_c(py)}" '
                f'stroke="#404040"/>')
            self.parts.append(
                f'<text x="{m - 6}" y="{_c(py + 3)}" font-size="10" '
                f'text-anchor="end">{_c(yv)}</text>')
        self.parts.append(
            f'<text x="{w / 2}" y="{h - 10}" font-size="11" text-anchor="middle">'
            f'{xlabel}</text>')
        self.parts.append(
            f'<text x="14" y="{h / 2}" font-size="11" text-anchor="middle" '
            f'transform="rotate(-90 14 {h / 2})">{ylabel}</text>')
        self.parts.append(
            f'<text x="{w / 2}" y="{m - 10}" font-size="12" text-anchor="middle" '
            f'font-weight="bold">{title}</text>')

    def polyline(self, xs, ys, colour, width=1.2):
        pts = " ".join(f"{_c(px)},{_c(py)}" for px, py in
                       (self._map(x, y, self._xlim, self._ylim)
                        for x, y in zip(xs, ys)))
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{colour}" '
            f'stroke-width="{width}"/>')

    def rect(self, x0, y0, x1, y1, colour):
        px0, py0 = self._map(x0, y0, self._xlim, self._ylim)
        px1, py1 = self._map(x1, y1, self._xlim, self._ylim)
        self.parts.append(
            f'<rect x="{_c(min(px0, px1))}" y="{_c(min(py0, py1))}" '
            f'width="{_c(abs(px1 - px0))}" height="{_c(abs(py1 - py0))}" '
            f'fill="{colour}" stroke="none"/>')

    def render(self):
        body = "\n".join(self.parts)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" '
                f'height="{self.h}" viewBox="0 0 {self.w} {self.h}" '
                f'font-family="sans-serif">\n<rect width="{self.w}" '
                f'height="{self.h}" fill="white"/>\n{body}\n</svg>\n')


def _limits(values, pad=0.05):
    lo = float(np.min(values))
    hi = float(np.max(values))
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("cannot plot non-finite data")
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - pad * span, hi + pad * span


def line_plot(path, x, series, *, xlabel, ylabel, title, max_series=16):
    """series: list of y-arrays over the common x grid."""
    if len(series) == 0:
        raise ValueError("nothing to plot")
    x = np.asarray(x, dtype=float)
    shown = series[:max_series]
    canvas = SvgCanvas()
    canvas.set_limits(_limits(x, pad=0.0),
                      _limits(np.concatenate([np.asarray(s, float) for s in shown])))
    canvas.frame(canvas._xlim, canvas._ylim, xlabel, ylabel, title)
    for k, ys in enumerate(shown):
        canvas.polyline(x, np.asarray(ys, float), _PALETTE[k % len(_PALETTE)])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canvas.render())


def histogram(path, values, *, bins=24, xlabel, ylabel="count", title):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("nothing to plot")
    counts, edges = np.histogram(values, bins=bins)
    canvas = SvgCanvas()
    canvas.set_limits(_limits(edges, pad=0.0),
                      (0.0, max(float(counts.max()), 1.0) * 1.05))
    canvas.frame(canvas._xlim, canvas._ylim, xlabel, ylabel, title)
    for k in range(counts.size):
        if counts[k] > 0:
            canvas.rect(edges[k], 0.0, edges[k + 1], float(counts[k]),
                        _PALETTE[0])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canvas.render())


# ---------------------------------------------------------------------------
# manifest


SEED_RULE = "sha256('{master}:' + ':'.join(labels))[:8] little-endian"


def write_manifest(out_dir, *, config_echo, master_seed, version, outputs):
    """manifest.json: everything a reproduction needs, nothing wall-clock."""
    blob = json.dumps(config_echo, sort_keys=True, separators=(",", ":"))
    manifest = {
        "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "master_seed": int(master_seed),
        "seed_rule": SEED_RULE,
        "version": version,
        "outputs": sorted(outputs),
    }
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    write_json(os.path.join(out_dir, "config_echo.json"), config_echo)
    return manifest


def require_formats(outputs):
    if not outputs:
        raise ConfigError("outputs: empty format selection, nothing to emit")
