"""Axis-aligned boxes, IoU, ellipse bounds, and the window-list CSV format.

Boxes use half-open pixel coordinates: a window covers the pixel set
[x0, x1) x [y0, y1), so its area is exactly the number of member pixels and
integral-image rectangle sums need no off-by-one adjustment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .ioutil import atomic_write_text, data_rows

# Outward rounding tolerance: extents that miss an integer by float noise
# (e.g. sqrt round-off for rotated circles) snap to it instead of widening.
_SNAP = 1e-9


@dataclass(frozen=True)
class Window:
    """Half-open pixel box with an optional generic-proposal score and an id."""

    x0: int
    y0: int
    x1: int
    y1: int
    proposal_score: float | None = None
    id: int = 0

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(
                f"degenerate window ({self.x0},{self.y0},{self.x1},{self.y1})"
            )

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0

    def clipped(self, width: int, height: int) -> "Window | None":
        """Intersect with [0,width) x [0,height); None when nothing remains."""
        x0, y0 = max(self.x0, 0), max(self.y0, 0)
        x1, y1 = min(self.x1, width), min(self.y1, height)
        if x0 >= x1 or y0 >= y1:
            return None
        return replace(self, x0=x0, y0=y0, x1=x1, y1=y1)


@dataclass(frozen=True)
class Ellipse:
    """Rotated ellipse: center, semi-axes in pixels, rotation in radians."""

    cx: float
    cy: float
    ra: float
    rb: float
    theta: float

    def __post_init__(self):
        if not (self.ra > 0 and self.rb > 0):
            raise ValueError(f"ellipse semi-axes must be positive, got {self.ra}, {self.rb}")


def iou(a: Window, b: Window) -> float:
    """Intersection over union of two windows; 0 when disjoint, 1 when equal."""
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / float(a.area + b.area - inter)


def ellipse_to_box(e: Ellipse) -> Window:
    """Tightest axis-aligned box containing the rotated ellipse, rounded outward.

    Half extents of a rotated ellipse along the axes:
    half_w = sqrt(ra^2 cos^2 t + rb^2 sin^2 t), half_h with sin/cos swapped.
    """
    c, s = math.cos(e.theta), math.sin(e.theta)
    half_w = math.sqrt((e.ra * c) ** 2 + (e.rb * s) ** 2)
    half_h = math.sqrt((e.ra * s) ** 2 + (e.rb * c) ** 2)
    x0 = math.floor(e.cx - half_w + _SNAP)
    y0 = math.floor(e.cy - half_h + _SNAP)
    x1 = math.ceil(e.cx + half_w - _SNAP)
    y1 = math.ceil(e.cy + half_h - _SNAP)
    return Window(x0, y0, max(x1, x0 + 1), max(y1, y0 + 1))


def load_windows(
    path: str | Path,
    bounds: tuple[int, int] | None = None,
) -> list[Window]:
    """Read a window list CSV: `x0,y0,x1,y1[,score]`, `#` comments ignored.

    Coordinates are rounded to the nearest integer. Ids follow data-row order.
    When `bounds = (width, height)` is given, windows are clipped at ingestion;
    windows that fall entirely outside are dropped (their id is not reused).
    """
    out: list[Window] = []
    next_id = 0
    for lineno, fields in data_rows(path):
        if len(fields) not in (4, 5):
            raise ValueError(f"{path}:{lineno}: expected 4 or 5 fields, got {len(fields)}")
        try:
            x0, y0, x1, y1 = (int(round(float(tok))) for tok in fields[:4])
            score = float(fields[4]) if len(fields) == 5 else None
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        try:
            win = Window(x0, y0, x1, y1, proposal_score=score, id=next_id)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        next_id += 1
        if bounds is not None:
            clipped = win.clipped(*bounds)
            if clipped is None:
                continue
            win = clipped
        out.append(win)
    return out


def save_windows(path: str | Path, windows: Sequence[Window]) -> None:
    """Write a window list CSV; the score column is present iff any window has one."""
    with_scores = any(w.proposal_score is not None for w in windows)
    lines = ["# x0,y0,x1,y1,score" if with_scores else "# x0,y0,x1,y1"]
    for w in windows:
        row = f"{w.x0},{w.y0},{w.x1},{w.y1}"
        if with_scores:
            # repr round-trips the float exactly
            row += f",{w.proposal_score!r}" if w.proposal_score is not None else ","
        lines.append(row)
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_ellipses(path: str | Path) -> list[Ellipse]:
    """Read an ellipse list CSV: `cx,cy,ra,rb,theta`."""
    out = []
    for lineno, fields in data_rows(path):
        if len(fields) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
        try:
            cx, cy, ra, rb, theta = (float(tok) for tok in fields)
            out.append(Ellipse(cx, cy, ra, rb, theta))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out
