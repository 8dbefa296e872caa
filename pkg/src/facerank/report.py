"""Render evaluation curves to image files next to the CSV output."""
from __future__ import annotations

import io
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .ioutil import atomic_write_bytes  # noqa: E402


def _save(fig, path: str | Path) -> None:
    # Strip the Software metadata chunk so re-runs are byte-identical.
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120, metadata={"Software": None})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def render_dr_curve(table: Sequence[tuple[int, float]], path: str | Path) -> None:
    """Detection rate against the number of proposals kept."""
    ns = [n for n, _ in table]
    drs = [dr for _, dr in table]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(ns, drs, marker="o", ms=4, lw=1.2, color="tab:blue")
    if ns and ns[-1] / max(ns[0], 1) >= 8:
        ax.set_xscale("log", base=2)
    ax.set_xlabel("proposals kept (N)")
    ax.set_ylabel("detection rate")
    ax.set_ylim(0.0, 1.05)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def render_pr_curve(points: Sequence[tuple[float, float]], ap: float, path: str | Path) -> None:
    """Precision-recall curve with the AP in the title."""
    recalls = [r for r, _ in points]
    precisions = [p for _, p in points]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(recalls, precisions, lw=1.2, color="tab:red", drawstyle="steps-post")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0.0, 1.02)
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"AP = {ap:.4f}")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
