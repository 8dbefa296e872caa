"""Detection-rate curves, precision-recall, AP, and refinement-target prep.

Matching uses the strict IoU-0.5 detection protocol: a proposal covers a
ground-truth box when their IoU is at least the threshold, and each side of a
match is used at most once. Refinement-target labeling is stricter: a proposal
becomes a face only when its best IoU is strictly greater than the threshold.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyGroundTruth
from .geometry import Window
from .ioutil import atomic_write_text, data_rows

RECALL_TARGETS = (0.75, 0.80, 0.85, 0.90)
SENTINEL = (-1.0, -1.0, -1.0, -1.0)


@dataclass(frozen=True)
class PRCurve:
    """One (recall, precision) point per detection in score order, plus AP."""

    points: tuple[tuple[float, float], ...]
    ap: float


@dataclass(frozen=True)
class RefinementTarget:
    """Per-proposal class label and box-regression target.

    Face targets hold the matched ground-truth corners normalized to the
    proposal frame: ((gt - proposal_origin) / proposal_size) per axis.
    Non-faces carry the (-1, -1, -1, -1) sentinel.
    """

    window_id: int
    is_face: bool
    target: tuple[float, float, float, float]

    @property
    def label(self) -> str:
        return "face" if self.is_face else "non-face"


@dataclass(frozen=True)
class EvalReport:
    dr_table: tuple[tuple[int, float], ...]
    needed: Mapping[float, int | None]
    pr: PRCurve
    counts: Mapping[str, int]
    iou_thresh: float

    def to_json_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_thresh,
            "counts": dict(self.counts),
            "ap": self.pr.ap,
            "dr": [[n, dr] for n, dr in self.dr_table],
            "needed": {f"{t:.2f}": n for t, n in self.needed.items()},
        }


def _iou_matrix(proposals: Sequence[Window], gt: Sequence[Window]) -> np.ndarray:
    """(len(proposals), len(gt)) IoU matrix."""
    if not proposals or not gt:
        return np.zeros((len(proposals), len(gt)))
    p = np.array([[w.x0, w.y0, w.x1, w.y1] for w in proposals], dtype=np.float64)
    g = np.array([[w.x0, w.y0, w.x1, w.y1] for w in gt], dtype=np.float64)
    iw = np.minimum(p[:, None, 2], g[None, :, 2]) - np.maximum(p[:, None, 0], g[None, :, 0])
    ih = np.minimum(p[:, None, 3], g[None, :, 3]) - np.maximum(p[:, None, 1], g[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    pa = (p[:, 2] - p[:, 0]) * (p[:, 3] - p[:, 1])
    ga = (g[:, 2] - g[:, 0]) * (g[:, 3] - g[:, 1])
    return inter / (pa[:, None] + ga[None, :] - inter)


def _greedy_match_count(ious: np.ndarray, iou_thresh: float) -> int:
    """Greedy one-to-one matching over IoU-descending pairs; ties by rank then gt index."""
    pairs = [
        (float(ious[p, g]), p, g)
        for p in range(ious.shape[0])
        for g in range(ious.shape[1])
        if ious[p, g] >= iou_thresh
    ]
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_p = [False] * ious.shape[0]
    used_g = [False] * ious.shape[1]
    matched = 0
    for _, p, g in pairs:
        if not used_p[p] and not used_g[g]:
            used_p[p] = used_g[g] = True
            matched += 1
    return matched


def _ranked_windows(ranked) -> list[Window]:
    """Accept either a RankedList or a plain window sequence in rank order."""
    if hasattr(ranked, "windows"):
        return list(ranked.windows)
    return list(ranked)


def detection_rate(
    ranked,
    gt: Sequence[Window],
    n: int,
    iou_thresh: float = 0.5,
) -> float:
    """Fraction of ground-truth boxes covered by the top-n proposals."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not gt:
        raise EmptyGroundTruth("detection rate is undefined without ground truth")
    windows = _ranked_windows(ranked)[:n]
    ious = _iou_matrix(windows, gt)
    return _greedy_match_count(ious, iou_thresh) / len(gt)


def pr_curve(
    detections: Sequence[Window],
    scores: Sequence[float],
    gt: Sequence[Window],
    iou_thresh: float = 0.5,
) -> PRCurve:
    """Greedy score-ordered matching and the all-points precision envelope.

    AP is the area under the precision envelope over recall, computed in exact
    rational arithmetic, so a perfect detector yields exactly 1.0.
    """
    if not gt:
        raise EmptyGroundTruth("precision-recall is undefined without ground truth")
    if len(detections) != len(scores):
        raise ValueError(f"{len(detections)} detections but {len(scores)} scores")
    order = sorted(range(len(detections)), key=lambda i: -scores[i])
    ious = _iou_matrix([detections[i] for i in order], gt)
    gt_used = [False] * len(gt)
    tp_flags: list[bool] = []
    for row in range(len(order)):
        best_g, best_iou = -1, 0.0
        for g in range(len(gt)):
            v = float(ious[row, g])
            if v > best_iou:
                best_iou, best_g = v, g
        if best_g >= 0 and best_iou >= iou_thresh and not gt_used[best_g]:
            gt_used[best_g] = True
            tp_flags.append(True)
        else:
            tp_flags.append(False)

    npos = len(gt)
    tp = 0
    recalls: list[Fraction] = []
    precisions: list[Fraction] = []
    for k, flag in enumerate(tp_flags, 1):
        tp += int(flag)
        recalls.append(Fraction(tp, npos))
        precisions.append(Fraction(tp, k))

    # Precision envelope from the high-recall end, then sum recall steps.
    envelope = list(precisions)
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    ap = Fraction(0)
    prev_recall = Fraction(0)
    for r, p in zip(recalls, envelope):
        if r != prev_recall:
            ap += (r - prev_recall) * p
            prev_recall = r
    points = tuple((float(r), float(p)) for r, p in zip(recalls, precisions))
    return PRCurve(points, float(ap))


def prepare_refinement_targets(
    proposals: Sequence[Window],
    gt: Sequence[Window],
    iou_thresh: float = 0.5,
) -> list[RefinementTarget]:
    """Label each proposal and derive its regression target from the nearest GT.

    A proposal is a face iff its max-IoU ground truth exceeds the threshold
    strictly; IoU exactly at the threshold is negative. Non-faces carry the
    sentinel target.
    """
    ious = _iou_matrix(proposals, gt)
    out: list[RefinementTarget] = []
    for i, p in enumerate(proposals):
        best_g, best_iou = -1, 0.0
        for g in range(len(gt)):
            v = float(ious[i, g])
            if v > best_iou:
                best_iou, best_g = v, g
        if best_g >= 0 and best_iou > iou_thresh:
            g = gt[best_g]
            target = (
                (g.x0 - p.x0) / p.width,
                (g.y0 - p.y0) / p.height,
                (g.x1 - p.x0) / p.width,
                (g.y1 - p.y0) / p.height,
            )
            out.append(RefinementTarget(p.id, True, target))
        else:
            out.append(RefinementTarget(p.id, False, SENTINEL))
    return out


def denormalize_target(target: Sequence[float], proposal: Window) -> Window:
    """Invert the proposal-frame normalization back to an integer-grid box."""
    t0, t1, t2, t3 = target
    return Window(
        int(round(proposal.x0 + t0 * proposal.width)),
        int(round(proposal.y0 + t1 * proposal.height)),
        int(round(proposal.x0 + t2 * proposal.width)),
        int(round(proposal.y0 + t3 * proposal.height)),
    )


def recall_vs_proposals(
    ranked,
    gt: Sequence[Window],
    n_values: Sequence[int],
    iou_thresh: float = 0.5,
    targets: Sequence[float] = RECALL_TARGETS,
) -> tuple[tuple[tuple[int, float], ...], dict[float, int | None]]:
    """DR at each requested N plus the minimum N reaching each target recall.

    `n_values` must be sorted ascending. A target maps to None when even the
    full list misses it.
    """
    if list(n_values) != sorted(n_values):
        raise ValueError("n_values must be sorted ascending")
    if not gt:
        raise EmptyGroundTruth("recall table is undefined without ground truth")
    windows = _ranked_windows(ranked)
    ious = _iou_matrix(windows, gt)
    def dr_at(n: int) -> float:
        return _greedy_match_count(ious[: min(n, len(windows))], iou_thresh) / len(gt)

    table = tuple((int(n), dr_at(int(n))) for n in n_values)
    needed: dict[float, int | None] = {}
    full = list(range(1, len(windows) + 1))
    drs = [dr_at(n) for n in full]
    for t in targets:
        needed[t] = next((n for n, dr in zip(full, drs) if dr >= t), None)
    return table, needed


def make_report(
    ranked,
    gt: Sequence[Window],
    scores: Sequence[float],
    n_values: Sequence[int],
    iou_thresh: float = 0.5,
) -> EvalReport:
    windows = _ranked_windows(ranked)
    table, needed = recall_vs_proposals(ranked, gt, n_values, iou_thresh)
    pr = pr_curve(windows, scores, gt, iou_thresh)
    matched = _greedy_match_count(_iou_matrix(windows, gt), iou_thresh)
    counts = {"gt": len(gt), "proposals": len(windows), "matched": matched}
    return EvalReport(table, needed, pr, counts, iou_thresh)


def save_report_json(path: str | Path, report: EvalReport) -> None:
    atomic_write_text(path, json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n")


def save_dr_csv(path: str | Path, table: Sequence[tuple[int, float]]) -> None:
    lines = ["# n,dr"] + [f"{n},{dr:.9g}" for n, dr in table]
    atomic_write_text(path, "\n".join(lines) + "\n")


def save_pr_csv(path: str | Path, points: Sequence[tuple[float, float]]) -> None:
    lines = ["# recall,precision"] + [f"{r:.9g},{p:.9g}" for r, p in points]
    atomic_write_text(path, "\n".join(lines) + "\n")


def save_targets_csv(path: str | Path, targets: Sequence[RefinementTarget]) -> None:
    lines = ["# id,label,t0,t1,t2,t3"]
    for t in targets:
        vals = ",".join(f"{v:.12g}" for v in t.target)
        lines.append(f"{t.window_id},{t.label},{vals}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_targets_csv(path: str | Path) -> list[RefinementTarget]:
    out: list[RefinementTarget] = []
    for lineno, fields in data_rows(path):
        if len(fields) != 6:
            raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(fields)}")
        wid = int(fields[0])
        label = fields[1]
        if label not in ("face", "non-face"):
            raise ValueError(f"{path}:{lineno}: bad label {label!r}")
        vals = tuple(float(tok) for tok in fields[2:])
        out.append(RefinementTarget(wid, label == "face", vals))
    return out
