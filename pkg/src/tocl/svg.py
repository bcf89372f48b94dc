"""Dependency-free SVG plots of trajectory components.

Output is byte-for-byte deterministic: coordinates are rounded to two
decimals and elements are emitted in a fixed order.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .sim import Trajectory

WIDTH, HEIGHT = 720, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 130, 40, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = np.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else float(v))
        v += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:.3g}"


def render_svg(traj: Trajectory, title: str = "Trajectory components") -> str:
    if len(traj) == 0:
        raise ValueError("cannot plot an empty trajectory")
    t = np.asarray(traj.times, dtype=float)
    X = np.asarray(traj.states, dtype=float)
    t0, t1 = float(t[0]), float(t[-1])
    if t1 <= t0:
        t1 = t0 + 1.0
    lo, hi = float(X.min()), float(X.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(v):
        return LEFT + (v - t0) / (t1 - t0) * pw

    def sy(v):
        return TOP + (hi - v) / (hi - lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.2f}" y="22" text-anchor="middle" font-size="14">{title}</text>',
    ]
    # axes and ticks
    out.append(f'<g stroke="black" stroke-width="1">'
               f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}"/>'
               f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}"/></g>')
    for v in _nice_ticks(t0, t1):
        x = sx(v)
        out.append(f'<line x1="{_fmt(x)}" y1="{TOP + ph}" x2="{_fmt(x)}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{TOP + ph + 18}" text-anchor="middle">{_label(v)}</text>')
    for v in _nice_ticks(lo, hi):
        y = sy(v)
        out.append(f'<line x1="{LEFT - 5}" y1="{_fmt(y)}" x2="{LEFT}" y2="{_fmt(y)}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{_fmt(y + 4)}" text-anchor="end">{_label(v)}</text>')
    if lo < 0 < hi:
        out.append(f'<line x1="{LEFT}" y1="{_fmt(sy(0))}" x2="{LEFT + pw}" y2="{_fmt(sy(0))}" '
                   f'stroke="#bbbbbb" stroke-width="0.5"/>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 10}" text-anchor="middle">t</text>')
    # switching times
    for s in traj.switches:
        if t0 < s < t1:
            out.append(f'<line class="switch" x1="{_fmt(sx(s))}" y1="{TOP}" x2="{_fmt(sx(s))}" '
                       f'y2="{TOP + ph}" stroke="#555555" stroke-dasharray="5,4"/>')
    # component curves
    for i in range(X.shape[1]):
        color = PALETTE[i % len(PALETTE)]
        if len(t) == 1:
            out.append(f'<circle cx="{_fmt(sx(t[0]))}" cy="{_fmt(sy(X[0, i]))}" r="4" fill="{color}"/>')
        else:
            pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(t, X[:, i]))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
    # legend
    lx, ly = LEFT + pw + 15, TOP + 10
    for i in range(X.shape[1]):
        color = PALETTE[i % len(PALETTE)]
        y = ly + 20 * i
        out.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 24}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 30}" y="{y + 4}">x{i + 1}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(traj: Trajectory, path, title: str = "Trajectory components") -> Path:
    path = Path(path)
    path.write_text(render_svg(traj, title), encoding="utf-8")
    return path
