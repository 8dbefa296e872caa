"""Window re-ranking, greedy box NMS, and partness-map peak localization."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import IdMismatch
from .faceness import FacenessScore, round_half_up
from .geometry import Window, iou
from .ioutil import atomic_write_text, data_rows
from .pmap import PART_CHANNELS, Channel, PartnessMap, parse_channel

DEFAULT_NMS_RADIUS = 8
DEFAULT_REL_THRESHOLD = 0.3
DEFAULT_BOX_FRACTION = 0.25


@dataclass(frozen=True)
class RankedList:
    """Windows sorted by combined faceness, scores kept alongside."""

    windows: tuple[Window, ...]
    scores: tuple[FacenessScore, ...]

    def __post_init__(self):
        if len(self.windows) != len(self.scores):
            raise IdMismatch("window and score lists differ in length")
        for w, s in zip(self.windows, self.scores):
            if w.id != s.window_id:
                raise IdMismatch(f"window id {w.id} paired with score id {s.window_id}")
        combined = [s.combined for s in self.scores]
        if any(a < b for a, b in zip(combined, combined[1:])):
            raise ValueError("ranked scores must be non-increasing")

    def __len__(self) -> int:
        return len(self.windows)

    def __iter__(self) -> Iterator[tuple[Window, FacenessScore]]:
        return iter(zip(self.windows, self.scores))

    def top(self, n: int) -> "RankedList":
        return RankedList(self.windows[:n], self.scores[:n])


@dataclass(frozen=True)
class PartDetection:
    """One NMS peak: its center pixel, emitted box, and peak response."""

    channel: Channel
    cx: int
    cy: int
    box: Window
    peak: float


def rerank(windows: Sequence[Window], scores: Sequence[FacenessScore]) -> RankedList:
    """Stable descending sort by combined score; equal scores keep input order."""
    if len(windows) != len(scores):
        raise IdMismatch(
            f"{len(windows)} windows but {len(scores)} scores"
        )
    for w, s in zip(windows, scores):
        if w.id != s.window_id:
            raise IdMismatch(f"window id {w.id} paired with score id {s.window_id}")
    order = sorted(range(len(windows)), key=lambda i: -scores[i].combined)
    return RankedList(
        tuple(windows[i] for i in order),
        tuple(scores[i] for i in order),
    )


def nms_boxes(ranked: RankedList, iou_thresh: float) -> RankedList:
    """Greedy suppression in score order; survivors have pairwise IoU < threshold."""
    if not (0.0 < iou_thresh < 1.0):
        raise ValueError(f"iou threshold must lie in (0, 1), got {iou_thresh}")
    kept_w: list[Window] = []
    kept_s: list[FacenessScore] = []
    for w, s in ranked:
        if all(iou(w, k) < iou_thresh for k in kept_w):
            kept_w.append(w)
            kept_s.append(s)
    return RankedList(tuple(kept_w), tuple(kept_s))


def localize_parts(
    m: PartnessMap,
    radius: int = DEFAULT_NMS_RADIUS,
    threshold: float | None = None,
    box_w: int | None = None,
    box_h: int | None = None,
) -> list[PartDetection]:
    """Greedy peak picking on a partness map.

    Repeatedly takes the strongest remaining pixel at or above the threshold,
    emits a box centered on it (clipped to the map), and suppresses everything
    within Chebyshev distance `radius`. Zero-valued pixels never form peaks,
    so an all-zero map yields no detections. The caller's map is not modified.

    Defaults: threshold = 0.3 x map peak; box = a square of side
    0.25 x min(map dimensions).
    """
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    work = m.values.astype(np.float64).copy()
    if threshold is None:
        threshold = DEFAULT_REL_THRESHOLD * float(work.max())
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    side = max(1, round_half_up(DEFAULT_BOX_FRACTION * min(m.width, m.height)))
    bw = box_w if box_w is not None else side
    bh = box_h if box_h is not None else side
    if bw < 1 or bh < 1:
        raise ValueError("box dimensions must be >= 1")

    h, w = work.shape
    out: list[PartDetection] = []
    while True:
        flat = int(np.argmax(work))
        cy, cx = divmod(flat, w)
        peak = float(work[cy, cx])
        if peak < threshold or peak <= 0.0:
            break
        bx0 = cx - bw // 2
        by0 = cy - bh // 2
        box = Window(bx0, by0, bx0 + bw, by0 + bh, id=len(out)).clipped(w, h)
        out.append(PartDetection(m.channel, cx, cy, box, peak))
        work[max(0, cy - radius) : cy + radius + 1, max(0, cx - radius) : cx + radius + 1] = -1.0
    return out


_RANKED_HEADER = (
    "# rank,id,x0,y0,x1,y1,combined,"
    "delta_hair,delta_eye,delta_nose,delta_mouth,delta_beard"
)


def save_ranked_csv(path: str | Path, ranked: RankedList) -> None:
    lines = [_RANKED_HEADER]
    for rank, (w, s) in enumerate(ranked, 1):
        deltas = ",".join(
            f"{s.per_part[ch]:.9g}" if ch in s.per_part else "" for ch in PART_CHANNELS
        )
        lines.append(
            f"{rank},{w.id},{w.x0},{w.y0},{w.x1},{w.y1},{s.combined:.9g},{deltas}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_ranked_csv(path: str | Path) -> tuple[list[Window], list[float]]:
    """Read ranked.csv back as (windows in rank order, combined scores)."""
    windows: list[Window] = []
    combined: list[float] = []
    for lineno, fields in data_rows(path):
        if len(fields) < 7:
            raise ValueError(f"{path}:{lineno}: expected >= 7 fields, got {len(fields)}")
        _rank, wid = int(fields[0]), int(fields[1])
        x0, y0, x1, y1 = (int(tok) for tok in fields[2:6])
        windows.append(Window(x0, y0, x1, y1, id=wid))
        combined.append(float(fields[6]))
    return windows, combined


def save_part_detections_csv(path: str | Path, detections: Sequence[PartDetection]) -> None:
    lines = ["# channel,cx,cy,x0,y0,x1,y1,peak"]
    for d in detections:
        b = d.box
        lines.append(f"{d.channel},{d.cx},{d.cy},{b.x0},{b.y0},{b.x1},{b.y1},{d.peak:.9g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_part_detections_csv(path: str | Path) -> list[PartDetection]:
    out: list[PartDetection] = []
    for lineno, fields in data_rows(path):
        if len(fields) != 8:
            raise ValueError(f"{path}:{lineno}: expected 8 fields, got {len(fields)}")
        channel = parse_channel(fields[0])
        cx, cy = int(fields[1]), int(fields[2])
        x0, y0, x1, y1 = (int(tok) for tok in fields[3:7])
        out.append(PartDetection(channel, cx, cy, Window(x0, y0, x1, y1, id=len(out)), float(fields[7])))
    return out
