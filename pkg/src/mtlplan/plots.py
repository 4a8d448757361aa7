"""Plain SVG renderings of a plan: workspace projection and time-space view."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .environment import Scenario, inflate, obstacle_at

STYLE = {
    "region": 'fill="#9be39b" fill-opacity="0.7" stroke="#2e8b2e"',
    "static": 'fill="#9a9a9a" stroke="#555555"',
    "margin": 'fill="#cfcfcf" fill-opacity="0.6" stroke="none"',
    "moving": 'fill="#5b8def" fill-opacity="0.35" stroke="#2a5cc7"',
    "path": 'fill="none" stroke="#1f4fbf" stroke-width="1"',
    "dot": 'fill="#1f4fbf"',
}


def _f(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, bounds, scale=60.0, pad=30.0, extra_w=0.0, extra_h=0.0):
        self.xmin, self.ymin, self.xmax, self.ymax = bounds
        self.scale, self.pad = scale, pad
        self.w = (self.xmax - self.xmin) * scale + 2 * pad + extra_w
        self.h = (self.ymax - self.ymin) * scale + 2 * pad + extra_h
        self.extra_h = extra_h
        self.items: list[str] = []

    def pt(self, x, y, lift=(0.0, 0.0)):
        px = self.pad + (x - self.xmin) * self.scale + lift[0]
        py = self.h - self.pad - (y - self.ymin) * self.scale - lift[1]
        return px, py

    def polygon(self, vertices, style, lift=(0.0, 0.0)):
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in (self.pt(x, y, lift) for x, y in vertices))
        self.items.append(f'<polygon points="{pts}" {style}/>')

    def polyline(self, points, style, lift_fn=None):
        pts = []
        for i, (x, y) in enumerate(points):
            a, b = self.pt(x, y, lift_fn(i) if lift_fn else (0.0, 0.0))
            pts.append(f"{_f(a)},{_f(b)}")
        self.items.append(f'<polyline points="{" ".join(pts)}" {style}/>')

    def dot(self, x, y, r=3.0, lift=(0.0, 0.0)):
        a, b = self.pt(x, y, lift)
        self.items.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="{_f(r)}" {STYLE["dot"]}/>')

    def text(self, x, y, s, size=14, lift=(0.0, 0.0)):
        a, b = self.pt(x, y, lift)
        self.items.append(
            f'<text x="{_f(a)}" y="{_f(b)}" font-size="{size}" font-family="sans-serif" '
            f'text-anchor="middle">{escape(s)}</text>'
        )

    def raw(self, s):
        self.items.append(s)

    def render(self, title: str) -> str:
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(self.w)}" height="{_f(self.h)}" '
            f'viewBox="0 0 {_f(self.w)} {_f(self.h)}">\n<title>{escape(title)}</title>\n'
            f'<rect x="0" y="0" width="{_f(self.w)}" height="{_f(self.h)}" fill="white"/>\n'
        )
        return head + "\n".join(self.items) + "\n</svg>\n"


def _box(c: _Canvas, s: Scenario, lift=(0.0, 0.0), style='fill="none" stroke="black"'):
    xmin, ymin, xmax, ymax = s.bounds
    c.polygon([(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)], style, lift)


def plan_svg(s: Scenario, positions, N: int | None = None) -> str:
    """Workspace seen from above: regions, static obstacles with their margin,
    the moving obstacles' footprints over the horizon, and the sampled path."""
    positions = np.asarray(positions, dtype=float)
    N = len(positions) - 1 if N is None else N
    c = _Canvas(s.bounds)
    _box(c, s)
    for o in s.static_obstacles:
        c.polygon(inflate(o, s.margin).vertices, STYLE["margin"])
    for name in sorted(s.regions):
        for poly in s.regions[name].polygons:
            c.polygon(poly.vertices, STYLE["region"])
        cx, cy = s.regions[name].polygons[0].centroid
        c.text(cx, cy, name)
    for o in s.static_obstacles:
        c.polygon(o.vertices, STYLE["static"])
    for o in s.moving_obstacles:
        for t in range(N + 1):
            c.polygon(obstacle_at(o, t, s.dt).vertices, STYLE["moving"].replace("0.35", "0.08"))
        c.polygon(obstacle_at(o, 0, s.dt).vertices, STYLE["moving"])
    if len(positions):
        c.polyline(positions, STYLE["path"])
        for x, y in positions:
            c.dot(x, y)
    return c.render(f"{s.name or 'scenario'}: planned path")


def timespace_svg(s: Scenario, positions, layer: float = 8.0) -> str:
    """Oblique time-space view: sample ``t`` is drawn lifted by ``t * layer``
    pixels up and to the right, with the obstacles as they are at ``t``."""
    positions = np.asarray(positions, dtype=float)
    N = len(positions) - 1
    lift = lambda t: (0.6 * layer * t, layer * t)  # noqa: E731
    c = _Canvas(s.bounds, scale=45.0, extra_w=0.6 * layer * N, extra_h=layer * N)
    _box(c, s, style='fill="none" stroke="#bbbbbb"')
    _box(c, s, lift(N), style='fill="none" stroke="#bbbbbb"')
    for name in sorted(s.regions):
        for poly in s.regions[name].polygons:
            c.polygon(poly.vertices, STYLE["region"])
        cx, cy = s.regions[name].polygons[0].centroid
        c.text(cx, cy, name, size=12)
    for t in range(N + 1):
        for o in s.static_obstacles:
            c.polygon(o.vertices, STYLE["static"].replace('"#9a9a9a"', '"#9a9a9a" fill-opacity="0.15"'), lift(t))
        for o in s.moving_obstacles:
            c.polygon(obstacle_at(o, t, s.dt).vertices, STYLE["moving"].replace("0.35", "0.2"), lift(t))
    if len(positions):
        c.polyline(positions, STYLE["path"], lift)
        for t, (x, y) in enumerate(positions):
            c.dot(x, y, 2.5, lift(t))
    xmin, ymin, _, _ = s.bounds
    a0 = c.pt(xmin, ymin)
    a1 = c.pt(xmin, ymin, lift(N))
    c.raw(f'<line x1="{_f(a0[0])}" y1="{_f(a0[1])}" x2="{_f(a1[0])}" y2="{_f(a1[1])}" stroke="black"/>')
    c.raw(f'<text x="{_f(a1[0] - 6)}" y="{_f(a1[1] - 6)}" font-size="12" font-family="sans-serif">t = {N}</text>')
    return c.render(f"{s.name or 'scenario'}: time-space view")
