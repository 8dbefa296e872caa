"""Partness-map storage, the PMAP file format, and integral-image queries.

A partness map is a non-negative response grid for one facial-part channel.
Its integral image holds cumulative sums over half-open prefixes so any
rectangle sum costs four lookups.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadMagic,
    ChannelMismatch,
    DimensionMismatch,
    DuplicateChannel,
    NegativeValue,
    NonFiniteValue,
    OutOfBounds,
    TruncatedPayload,
)
from .ioutil import atomic_write_bytes


class Channel(enum.Enum):
    HAIR = "hair"
    EYE = "eye"
    NOSE = "nose"
    MOUTH = "mouth"
    BEARD = "beard"
    FACE = "face"

    def __str__(self) -> str:
        return self.value


PART_CHANNELS: tuple[Channel, ...] = (
    Channel.HAIR,
    Channel.EYE,
    Channel.NOSE,
    Channel.MOUTH,
    Channel.BEARD,
)


def parse_channel(token: str) -> Channel:
    try:
        return Channel(token.lower())
    except ValueError:
        raise ValueError(f"unknown channel token {token!r}") from None


@dataclass(frozen=True)
class PartnessMap:
    """Immutable float32 response grid tagged with its channel."""

    channel: Channel
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"map must be a non-empty 2-D grid, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise NonFiniteValue(f"{self.channel} map contains non-finite values")
        if (v < 0).any():
            raise NegativeValue(f"{self.channel} map contains negative values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def peak(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True)
class IntegralImage:
    """(height+1) x (width+1) prefix sums; first row and column are zero."""

    channel: Channel
    cum: np.ndarray

    @property
    def width(self) -> int:
        return self.cum.shape[1] - 1

    @property
    def height(self) -> int:
        return self.cum.shape[0] - 1


def build_integral(m: PartnessMap) -> IntegralImage:
    """Summed-area table of a map, accumulated in float64 regardless of storage."""
    h, w = m.values.shape
    cum = np.zeros((h + 1, w + 1), dtype=np.float64)
    cum[1:, 1:] = m.values.astype(np.float64).cumsum(axis=0).cumsum(axis=1)
    cum.setflags(write=False)
    return IntegralImage(m.channel, cum)


def rect_sum(integral: IntegralImage, x0: int, y0: int, x1: int, y1: int) -> float:
    """Sum of the source map over [x0,x1) x [y0,y1); four-corner lookup."""
    if not (0 <= x0 <= x1 <= integral.width and 0 <= y0 <= y1 <= integral.height):
        raise OutOfBounds(
            f"rectangle ({x0},{y0},{x1},{y1}) exceeds map extent "
            f"{integral.width}x{integral.height}"
        )
    c = integral.cum
    return float(c[y1, x1] - c[y0, x1] - c[y1, x0] + c[y0, x0])


def fuse_face_map(stack: Sequence[PartnessMap], method: str = "mean") -> PartnessMap:
    """Fuse part maps into a face map.

    Each input is rescaled to peak 1 (all-zero maps pass through unscaled),
    then fused per pixel: `mean` (default) or `max`.
    """
    maps = list(stack)
    if not maps:
        raise DimensionMismatch("cannot fuse an empty map stack")
    if method not in ("mean", "max"):
        raise ValueError(f"unknown fusion method {method!r}")
    shape = maps[0].values.shape
    seen: set[Channel] = set()
    for m in maps:
        if m.channel is Channel.FACE:
            raise ChannelMismatch("face maps cannot be fused into a face map")
        if m.channel in seen:
            raise DuplicateChannel(f"channel {m.channel} appears twice in the stack")
        seen.add(m.channel)
        if m.values.shape != shape:
            raise DimensionMismatch(
                f"{m.channel} map has shape {m.values.shape}, expected {shape}"
            )
    scaled = []
    for m in maps:
        peak = m.values.max()
        v = m.values.astype(np.float64)
        scaled.append(v / peak if peak > 0 else v)
    if method == "mean":
        fused = np.mean(scaled, axis=0)
    else:
        fused = np.max(scaled, axis=0)
    return PartnessMap(Channel.FACE, fused)


def integral_stack(maps: Iterable[PartnessMap]) -> dict[Channel, IntegralImage]:
    """Integral image per channel, keyed by channel."""
    out: dict[Channel, IntegralImage] = {}
    for m in maps:
        if m.channel in out:
            raise DuplicateChannel(f"channel {m.channel} appears twice in the stack")
        out[m.channel] = build_integral(m)
    return out


_MAGIC_BINARY = b"PMAP"
_MAGIC_TEXT = b"PMAPTXT"


def _parse_header(data: bytes, path) -> tuple[bytes, Channel, int, int, bytes]:
    newline = data.find(b"\n")
    if newline < 0:
        raise BadMagic(f"{path}: missing header line")
    fields = data[:newline].split()
    if len(fields) != 4:
        raise BadMagic(f"{path}: malformed header {data[:newline]!r}")
    magic, chan_tok, w_tok, h_tok = fields
    if magic not in (_MAGIC_BINARY, _MAGIC_TEXT):
        raise BadMagic(f"{path}: unknown magic {magic!r}")
    try:
        channel = parse_channel(chan_tok.decode("ascii"))
        width, height = int(w_tok), int(h_tok)
    except (ValueError, UnicodeDecodeError) as exc:
        raise BadMagic(f"{path}: {exc}") from None
    if width < 1 or height < 1:
        raise BadMagic(f"{path}: non-positive dimensions {width}x{height}")
    return magic, channel, width, height, data[newline + 1 :]


def read_pmap(path: str | Path) -> PartnessMap:
    """Read a PMAP (binary float32) or PMAPTXT (whitespace decimals) file."""
    data = Path(path).read_bytes()
    magic, channel, width, height, payload = _parse_header(data, path)
    count = width * height
    if magic == _MAGIC_BINARY:
        need = count * 4
        if len(payload) < need:
            raise TruncatedPayload(
                f"{path}: payload holds {len(payload)} bytes, header promises {need}"
            )
        values = np.frombuffer(payload[:need], dtype="<f4").reshape(height, width)
    else:
        tokens = payload.split()
        if len(tokens) < count:
            raise TruncatedPayload(
                f"{path}: payload holds {len(tokens)} values, header promises {count}"
            )
        try:
            flat = np.array([float(t) for t in tokens[:count]], dtype=np.float32)
        except ValueError as exc:
            raise TruncatedPayload(f"{path}: {exc}") from None
        values = flat.reshape(height, width)
    return PartnessMap(channel, values)


def write_pmap(m: PartnessMap, path: str | Path) -> None:
    """Write the binary PMAP format: ASCII header + little-endian float32 grid."""
    header = f"PMAP {m.channel} {m.width} {m.height}\n".encode("ascii")
    atomic_write_bytes(path, header + m.values.astype("<f4").tobytes(order="C"))
