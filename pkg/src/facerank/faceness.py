"""Per-part faceness ratios under lambda-parameterized window splits.

A part score is the response mass inside the sub-region where the part is
expected, divided by the mass outside it, both smoothed by a small epsilon so
empty regions stay finite. Split conventions:

- TOP_OVER_BOTTOM / BOTTOM_OVER_TOP use a single lambda with the split row
  interpolated as `lam * y0 + (1 - lam) * y1`, so lam = 1 pins the split to
  the window top and lam = 0 to the bottom.
- BAND_OVER_OUTSIDE uses a (lam_top, lam_bot) pair of fractional offsets from
  the window top, lam_top < lam_bot; the rows between them form the inner band.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ChannelMismatch, EmptyScoreSet, OutOfBounds
from .geometry import Window
from .ioutil import atomic_write_text
from .pmap import Channel, IntegralImage, rect_sum

DEFAULT_EPSILON = 1e-6


class SplitGeometry(enum.Enum):
    TOP_OVER_BOTTOM = "top_over_bottom"
    BAND_OVER_OUTSIDE = "band_over_outside"
    BOTTOM_OVER_TOP = "bottom_over_top"

    def __str__(self) -> str:
        return self.value


class Aggregate(enum.Enum):
    ARITH = "arith"
    GEO = "geo"

    def __str__(self) -> str:
        return self.value


#: Which split geometry each part channel uses unless overridden.
DEFAULT_GEOMETRY: Mapping[Channel, SplitGeometry] = {
    Channel.HAIR: SplitGeometry.TOP_OVER_BOTTOM,
    Channel.EYE: SplitGeometry.BAND_OVER_OUTSIDE,
    Channel.NOSE: SplitGeometry.BAND_OVER_OUTSIDE,
    Channel.MOUTH: SplitGeometry.BAND_OVER_OUTSIDE,
    Channel.BEARD: SplitGeometry.BOTTOM_OVER_TOP,
}


def round_half_up(v: float) -> int:
    """Nearest integer with .5 rounding up; used for every split-row decision."""
    return math.floor(v + 0.5)


def split_row(y0: int, y1: int, lam: float) -> int:
    """Split row for the single-lambda geometries: lam=1 -> y0, lam=0 -> y1."""
    return round_half_up(lam * y0 + (1.0 - lam) * y1)


def band_rows(y0: int, y1: int, lam_top: float, lam_bot: float) -> tuple[int, int]:
    """Inner-band rows [top, bot); lambdas are fractional offsets from the window top."""
    h = y1 - y0
    return round_half_up(y0 + lam_top * h), round_half_up(y0 + lam_bot * h)


@dataclass(frozen=True)
class SpatialConfig:
    """Split geometry plus its fitted parameters for one part channel."""

    channel: Channel
    geometry: SplitGeometry
    lam: float | None = None
    lam_top: float | None = None
    lam_bot: float | None = None
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.geometry is SplitGeometry.BAND_OVER_OUTSIDE:
            if self.lam is not None:
                raise ValueError("band geometry takes lam_top/lam_bot, not lam")
            if self.lam_top is None or self.lam_bot is None:
                raise ValueError("band geometry needs both lam_top and lam_bot")
            if not (0.0 <= self.lam_top < self.lam_bot <= 1.0):
                raise ValueError(
                    f"band needs 0 <= lam_top < lam_bot <= 1, got "
                    f"({self.lam_top}, {self.lam_bot})"
                )
        else:
            if self.lam_top is not None or self.lam_bot is not None:
                raise ValueError(f"{self.geometry} takes a single lam")
            if self.lam is None or not (0.0 <= self.lam <= 1.0):
                raise ValueError(f"lam must lie in [0, 1], got {self.lam}")

    @property
    def lambdas(self) -> tuple[float, ...]:
        if self.geometry is SplitGeometry.BAND_OVER_OUTSIDE:
            return (self.lam_top, self.lam_bot)
        return (self.lam,)

    def to_json_dict(self) -> dict:
        d: dict = {"channel": str(self.channel), "geometry": str(self.geometry)}
        if self.geometry is SplitGeometry.BAND_OVER_OUTSIDE:
            d["lambda_top"] = self.lam_top
            d["lambda_bot"] = self.lam_bot
        else:
            d["lambda"] = self.lam
        d["epsilon"] = self.epsilon
        return d

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "SpatialConfig":
        geometry = SplitGeometry(d["geometry"])
        return cls(
            channel=Channel(d["channel"]),
            geometry=geometry,
            lam=d.get("lambda"),
            lam_top=d.get("lambda_top"),
            lam_bot=d.get("lambda_bot"),
            epsilon=d.get("epsilon", DEFAULT_EPSILON),
        )


@dataclass(frozen=True)
class FacenessScore:
    window_id: int
    per_part: Mapping[Channel, float]
    combined: float


def part_faceness(integral: IntegralImage, window: Window, config: SpatialConfig) -> float:
    """Smoothed in/out response ratio of one window under one spatial config.

    The window must already be clipped to the map; an unclipped window
    surfaces as OutOfBounds from the rectangle lookup.
    """
    if config.channel is not integral.channel:
        raise ChannelMismatch(
            f"config for {config.channel} applied to a {integral.channel} integral"
        )
    x0, y0, x1, y1 = window.x0, window.y0, window.x1, window.y1
    eps = config.epsilon
    if config.geometry is SplitGeometry.BAND_OVER_OUTSIDE:
        top, bot = band_rows(y0, y1, config.lam_top, config.lam_bot)
        band = rect_sum(integral, x0, top, x1, bot)
        outside = rect_sum(integral, x0, y0, x1, y1) - band
        return (band + eps) / (max(outside, 0.0) + eps)
    ys = split_row(y0, y1, config.lam)
    upper = rect_sum(integral, x0, y0, x1, ys)
    lower = rect_sum(integral, x0, ys, x1, y1)
    if config.geometry is SplitGeometry.TOP_OVER_BOTTOM:
        return (upper + eps) / (lower + eps)
    return (lower + eps) / (upper + eps)


def combined_faceness(
    scores: Mapping[Channel, float] | Iterable[float],
    mode: Aggregate = Aggregate.ARITH,
) -> float:
    """Aggregate per-part ratios; parts absent from the input are excluded.

    ARITH is the plain mean. GEO is exp of the mean log, which keeps one large
    part ratio from dominating.
    """
    vals = list(scores.values()) if isinstance(scores, Mapping) else list(scores)
    if not vals:
        raise EmptyScoreSet("no part scores to aggregate")
    if mode is Aggregate.ARITH:
        return sum(vals) / len(vals)
    return math.exp(sum(math.log(v) for v in vals) / len(vals))


def score_windows(
    integrals: Mapping[Channel, IntegralImage],
    windows: Sequence[Window],
    configs: Sequence[SpatialConfig],
    mode: Aggregate = Aggregate.ARITH,
) -> list[FacenessScore]:
    """Score every window against every configured channel, preserving order."""
    if not configs:
        raise EmptyScoreSet("no spatial configurations given")
    for cfg in configs:
        if cfg.channel not in integrals:
            raise ChannelMismatch(f"no integral image for configured channel {cfg.channel}")
    out: list[FacenessScore] = []
    for w in windows:
        per_part: dict[Channel, float] = {}
        for cfg in configs:
            try:
                per_part[cfg.channel] = part_faceness(integrals[cfg.channel], w, cfg)
            except (OutOfBounds, ChannelMismatch) as exc:
                raise type(exc)(f"window {w.id}: {exc}") from exc
        out.append(FacenessScore(w.id, per_part, combined_faceness(per_part, mode)))
    return out


def save_configs(
    path: str | Path,
    configs: Sequence[SpatialConfig],
    mode: Aggregate = Aggregate.ARITH,
    extras: Sequence[Mapping] | None = None,
) -> None:
    """Write the config-file schema: aggregate mode plus one object per channel.

    `extras`, when given, is merged into the corresponding config object
    (used for fit diagnostics such as alpha and log_posterior).
    """
    entries = []
    for i, cfg in enumerate(configs):
        d = cfg.to_json_dict()
        if extras is not None:
            d.update(extras[i])
        entries.append(d)
    payload = {"mode": str(mode), "configs": entries}
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_configs(path: str | Path) -> tuple[list[SpatialConfig], Aggregate]:
    """Read a config file; unknown keys (fit diagnostics) are ignored."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    mode = Aggregate(payload.get("mode", "arith"))
    configs = [SpatialConfig.from_json_dict(d) for d in payload["configs"]]
    return configs, mode
