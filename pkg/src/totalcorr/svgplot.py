"""Static SVG rendering of tracking traces, with no plotting dependency.

The visual grammar mirrors the tracking figures: the true TC step function in
black, raw per-step estimates as a light line, their smoothed version as a
dark line, one color pair per trace, with axes in (training step, nats).
Output is a pure function of the input traces, so files are byte-identical
across runs.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .harness import TrainingTrace

WIDTH = 960
HEIGHT = 540
MARGIN_LEFT = 70
MARGIN_RIGHT = 180
MARGIN_TOP = 30
MARGIN_BOTTOM = 55

# (raw, smoothed) stroke pairs, one per trace
PALETTE = [
    ("#9ecae1", "#08519c"),
    ("#fdae6b", "#a63603"),
    ("#a1d99b", "#006d2c"),
    ("#bcbddc", "#54278f"),
    ("#fa9fb5", "#7a0177"),
    ("#bdbdbd", "#252525"),
]


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _nice_ticks(lo: float, hi: float, max_ticks: int = 7) -> list[float]:
    if hi <= lo:
        return [lo]
    raw_step = (hi - lo) / max_ticks
    magnitude = 10.0 ** math.floor(math.log10(raw_step))
    for mult in (1.0, 2.0, 5.0, 10.0):
        step = mult * magnitude
        if (hi - lo) / step <= max_ticks:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 else t)
        t += step
    return ticks


def _step_points(steps: np.ndarray, target: np.ndarray) -> list[tuple[float, float]]:
    """Piecewise-constant polyline vertices for the true-TC step function."""
    points = [(float(steps[0]), float(target[0]))]
    for i in range(1, len(steps)):
        if target[i] != target[i - 1]:
            points.append((float(steps[i]), float(target[i - 1])))
        points.append((float(steps[i]), float(target[i])))
    return points


class _Frame:
    """Affine data-to-pixel mapping for one panel."""

    def __init__(self, x_range: tuple[float, float], y_range: tuple[float, float]):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        self.plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
        self.plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def x(self, v: float) -> float:
        span = self.x1 - self.x0 or 1.0
        return MARGIN_LEFT + (v - self.x0) / span * self.plot_w

    def y(self, v: float) -> float:
        span = self.y1 - self.y0 or 1.0
        return MARGIN_TOP + self.plot_h - (v - self.y0) / span * self.plot_h

    def polyline(self, pts, stroke, width, opacity=None) -> str:
        coords = " ".join(f"{self.x(px):.2f},{self.y(py):.2f}" for px, py in pts)
        extra = f' stroke-opacity="{opacity}"' if opacity is not None else ""
        return (
            f'<polyline fill="none" stroke="{stroke}" stroke-width="{width}"'
            f'{extra} points="{coords}"/>'
        )


def render_traces(traces: list[tuple[str, TrainingTrace]]) -> str:
    """Render labelled traces into one overlaid SVG panel."""
    nonempty = [(label, t) for label, t in traces if len(t.steps)]
    if nonempty:
        x_hi = max(float(t.steps[-1]) for _, t in nonempty)
        lo = min(min(t.raw.min(), t.smoothed.min(), t.target.min()) for _, t in nonempty)
        hi = max(max(t.raw.max(), t.smoothed.max(), t.target.max()) for _, t in nonempty)
        pad = 0.05 * (hi - lo or 1.0)
        frame = _Frame((0.0, x_hi), (lo - pad, hi + pad))
    else:
        frame = _Frame((0.0, 1.0), (0.0, 1.0))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="#ffffff"/>',
    ]

    plot_right = WIDTH - MARGIN_RIGHT
    plot_bottom = HEIGHT - MARGIN_BOTTOM
    for tick in _nice_ticks(frame.y0, frame.y1):
        y = frame.y(tick)
        parts.append(
            f'<line x1="{MARGIN_LEFT}" y1="{y:.2f}" x2="{plot_right}" y2="{y:.2f}" '
            'stroke="#e0e0e0" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{MARGIN_LEFT - 8}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-size="12" font-family="sans-serif">{tick:g}</text>'
        )
    for tick in _nice_ticks(frame.x0, frame.x1):
        x = frame.x(tick)
        parts.append(
            f'<line x1="{x:.2f}" y1="{plot_bottom}" x2="{x:.2f}" y2="{plot_bottom + 5}" '
            'stroke="#000000" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{plot_bottom + 20}" text-anchor="middle" '
            f'font-size="12" font-family="sans-serif">{tick:g}</text>'
        )
    parts.append(
        f'<line x1="{MARGIN_LEFT}" y1="{plot_bottom}" x2="{plot_right}" y2="{plot_bottom}" '
        'stroke="#000000" stroke-width="1.5"/>'
    )
    parts.append(
        f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{plot_bottom}" '
        'stroke="#000000" stroke-width="1.5"/>'
    )
    parts.append(
        f'<text x="{(MARGIN_LEFT + plot_right) / 2:.2f}" y="{HEIGHT - 15}" '
        'text-anchor="middle" font-size="14" font-family="sans-serif">training step</text>'
    )
    mid_y = (MARGIN_TOP + plot_bottom) / 2
    parts.append(
        f'<text x="20" y="{mid_y:.2f}" text-anchor="middle" font-size="14" '
        f'font-family="sans-serif" transform="rotate(-90 20 {mid_y:.2f})">total correlation (nats)</text>'
    )

    drawn_steps: list[tuple[np.ndarray, np.ndarray]] = []
    legend_y = MARGIN_TOP + 12
    for idx, (label, trace) in enumerate(traces):
        raw_color, dark_color = PALETTE[idx % len(PALETTE)]
        if len(trace.steps):
            series = list(zip(trace.steps.astype(float), trace.raw))
            parts.append(frame.polyline(series, raw_color, 1, opacity=0.55))
            smooth_series = list(zip(trace.steps.astype(float), trace.smoothed))
            parts.append(frame.polyline(smooth_series, dark_color, 2))
            if not any(
                np.array_equal(trace.steps, s) and np.array_equal(trace.target, t)
                for s, t in drawn_steps
            ):
                parts.append(
                    frame.polyline(_step_points(trace.steps, trace.target), "#000000", 2)
                )
                drawn_steps.append((trace.steps, trace.target))
        parts.append(
            f'<line x1="{plot_right + 14}" y1="{legend_y}" x2="{plot_right + 40}" '
            f'y2="{legend_y}" stroke="{dark_color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{plot_right + 46}" y="{legend_y + 4}" font-size="12" '
            f'font-family="sans-serif">{_escape(label)}</text>'
        )
        legend_y += 18
    parts.append(
        f'<line x1="{plot_right + 14}" y1="{legend_y}" x2="{plot_right + 40}" '
        f'y2="{legend_y}" stroke="#000000" stroke-width="2"/>'
    )
    parts.append(
        f'<text x="{plot_right + 46}" y="{legend_y + 4}" font-size="12" '
        'font-family="sans-serif">true TC</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(traces: list[tuple[str, TrainingTrace]], path: str | Path) -> None:
    Path(path).write_text(render_traces(traces), encoding="utf-8")
