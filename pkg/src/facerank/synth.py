"""Deterministic synthetic scenes: planted faces, partness maps, proposals.

Stands in for an upstream response-map producer so every downstream stage has
a ground-truth oracle: the planted split parameters use exactly the same
conventions as the scoring geometries, so fitting should recover them.

Part layout inside a face box mirrors the scoring conventions:

- hair responses fill the rows above the split at `hair_lambda`
  (split row = lam * y0 + (1 - lam) * y1, as in TOP_OVER_BOTTOM scoring);
- eye / nose / mouth responses fill fractional row bands measured from the
  box top, as in BAND_OVER_OUTSIDE scoring;
- beard responses fill the rows below the split at `beard_lambda`
  (BOTTOM_OVER_TOP scoring).

All randomness flows through seeded PCG64 generators (one stream per
purpose), so a (spec, seed) pair produces byte-identical map files on any
platform.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidSpec
from .faceness import band_rows, round_half_up, split_row
from .fit import TrainingSample
from .geometry import Window, iou, load_windows, save_windows
from .ioutil import atomic_write_text
from .pmap import PART_CHANNELS, Channel, PartnessMap, integral_stack, read_pmap, write_pmap

_STREAM_FACES = 0
_STREAM_CLUTTER = 1
_STREAM_NOISE = 2
_STREAM_PROPOSALS = 3
_STREAM_TRAINING = 4

_BUMP_TAPER = 0.2
_PART_X_INSET = 0.08


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


@dataclass(frozen=True)
class PartLayout:
    """Planted split parameters; the fit module should recover these."""

    hair_lambda: float = 0.30
    eye_band: tuple[float, float] = (0.32, 0.46)
    nose_band: tuple[float, float] = (0.50, 0.64)
    mouth_band: tuple[float, float] = (0.68, 0.80)
    beard_lambda: float = 0.16

    def __post_init__(self):
        for name, value in (("hair_lambda", self.hair_lambda), ("beard_lambda", self.beard_lambda)):
            if not 0.0 <= value <= 1.0:
                raise InvalidSpec(f"{name} must lie in [0, 1], got {value}")
        for name, (top, bot) in (
            ("eye_band", self.eye_band),
            ("nose_band", self.nose_band),
            ("mouth_band", self.mouth_band),
        ):
            if not (0.0 <= top < bot <= 1.0):
                raise InvalidSpec(f"{name} must satisfy 0 <= top < bot <= 1, got ({top}, {bot})")
        centers = [self._center(ch) for ch in PART_CHANNELS]
        if any(a >= b for a, b in zip(centers, centers[1:])):
            raise InvalidSpec(
                "part band centers must be ordered top to bottom "
                f"(hair < eye < nose < mouth < beard), got {centers}"
            )

    def _center(self, channel: Channel) -> float:
        """Band center as a fraction of face height, measured from the top."""
        if channel is Channel.HAIR:
            return (1.0 - self.hair_lambda) / 2.0
        if channel is Channel.EYE:
            return sum(self.eye_band) / 2.0
        if channel is Channel.NOSE:
            return sum(self.nose_band) / 2.0
        if channel is Channel.MOUTH:
            return sum(self.mouth_band) / 2.0
        return 1.0 - self.beard_lambda / 2.0

    def planted(self) -> dict:
        return {
            "hair": self.hair_lambda,
            "eye": list(self.eye_band),
            "nose": list(self.nose_band),
            "mouth": list(self.mouth_band),
            "beard": self.beard_lambda,
        }

    def part_regions(self, box: Window) -> dict[Channel, tuple[int, int, int, int]]:
        """Pixel region (x0, y0, x1, y1) of each part inside a face box."""
        inset = round_half_up(_PART_X_INSET * box.width)
        x0, x1 = box.x0 + inset, box.x1 - inset
        eye_top, eye_bot = _band(box, self.eye_band)
        nose_top, nose_bot = _band(box, self.nose_band)
        mouth_top, mouth_bot = _band(box, self.mouth_band)
        return {
            Channel.HAIR: (x0, box.y0, x1, split_row(box.y0, box.y1, self.hair_lambda)),
            Channel.EYE: (x0, eye_top, x1, eye_bot),
            Channel.NOSE: (x0, nose_top, x1, nose_bot),
            Channel.MOUTH: (x0, mouth_top, x1, mouth_bot),
            Channel.BEARD: (x0, split_row(box.y0, box.y1, self.beard_lambda), x1, box.y1),
        }

    def part_centers(self, box: Window) -> dict[Channel, tuple[float, float]]:
        """Pixel center of each planted part region."""
        out = {}
        for ch, (rx0, ry0, rx1, ry1) in self.part_regions(box).items():
            out[ch] = ((rx0 + rx1 - 1) / 2.0, (ry0 + ry1 - 1) / 2.0)
        return out

    def to_json_dict(self) -> dict:
        return {
            "hair_lambda": self.hair_lambda,
            "eye_band": list(self.eye_band),
            "nose_band": list(self.nose_band),
            "mouth_band": list(self.mouth_band),
            "beard_lambda": self.beard_lambda,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "PartLayout":
        return cls(
            hair_lambda=d["hair_lambda"],
            eye_band=tuple(d["eye_band"]),
            nose_band=tuple(d["nose_band"]),
            mouth_band=tuple(d["mouth_band"]),
            beard_lambda=d["beard_lambda"],
        )


def _band(box: Window, frac: tuple[float, float]) -> tuple[int, int]:
    return band_rows(box.y0, box.y1, frac[0], frac[1])


@dataclass(frozen=True)
class FaceSpec:
    box: Window
    occluded: frozenset[Channel] = frozenset()

    def __post_init__(self):
        bad = set(self.occluded) - set(PART_CHANNELS)
        if bad:
            raise InvalidSpec(f"cannot occlude non-part channels {sorted(str(c) for c in bad)}")


@dataclass(frozen=True)
class SceneSpec:
    width: int = 320
    height: int = 320
    faces: tuple[FaceSpec, ...] = ()
    layout: PartLayout = field(default_factory=PartLayout)
    clutter_count: int = 10
    clutter_amplitude: float = 0.6
    noise_sigma: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise InvalidSpec(f"canvas must be at least 8x8, got {self.width}x{self.height}")
        if self.clutter_count < 0 or self.clutter_amplitude < 0 or self.noise_sigma < 0:
            raise InvalidSpec("clutter and noise parameters must be non-negative")
        if self.seed < 0:
            raise InvalidSpec(f"seed must be non-negative, got {self.seed}")
        for f in self.faces:
            b = f.box
            if b.x0 < 0 or b.y0 < 0 or b.x1 > self.width or b.y1 > self.height:
                raise InvalidSpec(
                    f"face ({b.x0},{b.y0},{b.x1},{b.y1}) lies outside the "
                    f"{self.width}x{self.height} canvas"
                )

    def to_json_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "seed": self.seed,
            "clutter_count": self.clutter_count,
            "clutter_amplitude": self.clutter_amplitude,
            "noise_sigma": self.noise_sigma,
            "layout": self.layout.to_json_dict(),
            "faces": [
                {
                    "box": [f.box.x0, f.box.y0, f.box.x1, f.box.y1],
                    "occluded": sorted(str(c) for c in f.occluded),
                }
                for f in self.faces
            ],
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "SceneSpec":
        try:
            faces = tuple(
                FaceSpec(
                    Window(*[int(v) for v in f["box"]], id=i),
                    frozenset(Channel(tok) for tok in f.get("occluded", [])),
                )
                for i, f in enumerate(d.get("faces", []))
            )
        except ValueError as exc:
            raise InvalidSpec(str(exc)) from None
        return cls(
            width=int(d["width"]),
            height=int(d["height"]),
            faces=faces,
            layout=PartLayout.from_json_dict(d["layout"]) if "layout" in d else PartLayout(),
            clutter_count=int(d.get("clutter_count", 10)),
            clutter_amplitude=float(d.get("clutter_amplitude", 0.6)),
            noise_sigma=float(d.get("noise_sigma", 0.02)),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class SyntheticScene:
    spec: SceneSpec
    maps: Mapping[Channel, PartnessMap]
    gt: tuple[Window, ...]
    proposals: tuple[Window, ...] = ()

    @property
    def layout(self) -> PartLayout:
        return self.spec.layout


def default_spec(
    seed: int = 0,
    faces: int = 4,
    width: int = 320,
    height: int = 320,
    occluded: Sequence[Channel] = (),
    clutter_count: int = 10,
    clutter_amplitude: float = 0.6,
    noise_sigma: float = 0.02,
) -> SceneSpec:
    """Seeded default scene: one face per grid cell, all sharing one occlusion mask."""
    if faces < 0:
        raise InvalidSpec(f"face count must be non-negative, got {faces}")
    rng = _rng(seed, _STREAM_FACES)
    cols = max(1, math.ceil(math.sqrt(faces)))
    rows = max(1, math.ceil(faces / cols))
    cell_w, cell_h = width // cols, height // rows
    margin = 6
    mask = frozenset(occluded)
    face_specs = []
    for k in range(faces):
        r, c = divmod(k, cols)
        fw = int(rng.integers(64, min(96, cell_w - 2 * margin) + 1))
        fh = min(round_half_up(fw * rng.uniform(1.05, 1.3)), cell_h - 2 * margin)
        x0 = c * cell_w + int(rng.integers(margin, cell_w - fw - margin + 1))
        y0 = r * cell_h + int(rng.integers(margin, cell_h - fh - margin + 1))
        face_specs.append(FaceSpec(Window(x0, y0, x0 + fw, y0 + fh, id=k), mask))
    return SceneSpec(
        width=width,
        height=height,
        faces=tuple(face_specs),
        clutter_count=clutter_count,
        clutter_amplitude=clutter_amplitude,
        noise_sigma=noise_sigma,
        seed=seed,
    )


def _bump_profile(n: int, taper: float = _BUMP_TAPER) -> np.ndarray:
    """Flat-topped cosine-tapered profile with a gentle dome; peak exactly 1."""
    t = (np.arange(n) + 0.5) / n
    w = np.ones(n)
    rise = t < taper
    fall = t > 1.0 - taper
    w[rise] = 0.5 * (1.0 - np.cos(np.pi * t[rise] / taper))
    w[fall] = 0.5 * (1.0 - np.cos(np.pi * (1.0 - t[fall]) / taper))
    profile = w * (0.75 + 0.25 * np.cos(np.pi * (2.0 * t - 1.0)))
    return profile / profile.max()


def _render_bump(grid: np.ndarray, region: tuple[int, int, int, int]) -> None:
    x0, y0, x1, y1 = region
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, grid.shape[1]), min(y1, grid.shape[0])
    if x1 <= x0 or y1 <= y0:
        return
    grid[y0:y1, x0:x1] += np.outer(_bump_profile(y1 - y0), _bump_profile(x1 - x0))


def _render_clutter(grids: Mapping[Channel, np.ndarray], rng, count: int, amplitude: float) -> None:
    if count == 0 or amplitude == 0:
        return
    h, w = next(iter(grids.values())).shape
    for _ in range(count):
        ch = PART_CHANNELS[int(rng.integers(len(PART_CHANNELS)))]
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        radius = rng.uniform(6.0, 14.0)
        x0, x1 = max(0, math.floor(cx - radius)), min(w, math.ceil(cx + radius) + 1)
        y0, y1 = max(0, math.floor(cy - radius)), min(h, math.ceil(cy + radius) + 1)
        if x1 <= x0 or y1 <= y0:
            continue
        ys, xs = np.ogrid[y0:y1, x0:x1]
        r = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
        blob = amplitude * 0.5 * (1.0 + np.cos(np.pi * np.minimum(r / radius, 1.0)))
        grids[ch][y0:y1, x0:x1] += np.where(r <= radius, blob, 0.0)


def generate(spec: SceneSpec) -> SyntheticScene:
    """Render the scene's five part maps; fully determined by (spec, seed)."""
    grids = {
        ch: np.zeros((spec.height, spec.width), dtype=np.float64) for ch in PART_CHANNELS
    }
    for face in spec.faces:
        regions = spec.layout.part_regions(face.box)
        for ch, region in regions.items():
            if ch in face.occluded:
                continue
            _render_bump(grids[ch], region)
    _render_clutter(grids, _rng(spec.seed, _STREAM_CLUTTER), spec.clutter_count, spec.clutter_amplitude)
    if spec.noise_sigma > 0:
        noise_rng = _rng(spec.seed, _STREAM_NOISE)
        for ch in PART_CHANNELS:
            grids[ch] += noise_rng.normal(0.0, spec.noise_sigma, grids[ch].shape)
            np.maximum(grids[ch], 0.0, out=grids[ch])
    maps = {ch: PartnessMap(ch, grids[ch]) for ch in PART_CHANNELS}
    gt = tuple(replace(f.box, id=i) for i, f in enumerate(spec.faces))
    return SyntheticScene(spec, maps, gt)


def _jitter_window(rng, box: Window, sigma: float, width: int, height: int) -> Window | None:
    """Gaussian center/scale jitter; sigma = 0 reproduces the box exactly."""
    cx, cy = box.center
    dx = rng.normal(0.0, sigma * box.width)
    dy = rng.normal(0.0, sigma * box.height)
    sw = box.width * math.exp(rng.normal(0.0, sigma))
    sh = box.height * math.exp(rng.normal(0.0, sigma))
    x0 = round_half_up(cx + dx - sw / 2.0)
    y0 = round_half_up(cy + dy - sh / 2.0)
    w = max(1, round_half_up(sw))
    h = max(1, round_half_up(sh))
    return Window(x0, y0, x0 + w, y0 + h).clipped(width, height)


def _random_negative(rng, sizes: Sequence[tuple[int, int]], width: int, height: int) -> Window:
    tw, th = sizes[int(rng.integers(len(sizes)))]
    nw = int(np.clip(round_half_up(tw * math.exp(rng.normal(0.0, 0.15))), 8, width))
    nh = int(np.clip(round_half_up(th * math.exp(rng.normal(0.0, 0.15))), 8, height))
    x0 = int(rng.integers(0, width - nw + 1))
    y0 = int(rng.integers(0, height - nh + 1))
    return Window(x0, y0, x0 + nw, y0 + nh)


def sample_proposals(
    scene: SyntheticScene,
    n_pos_jitter: int = 10,
    n_neg: int = 400,
    jitter_sigma: float = 0.05,
    seed: int | None = None,
) -> list[Window]:
    """Candidate windows: jittered positives plus face-sized uniform negatives.

    Proposal scores are uniform random and independent of content, and the
    output order is shuffled, so neither the score column nor the file order
    carries face information.
    """
    if n_neg < 0 or n_pos_jitter < 0:
        raise InvalidSpec("proposal counts must be non-negative")
    spec = scene.spec
    rng = _rng(spec.seed if seed is None else seed, _STREAM_PROPOSALS)
    raw: list[Window] = []
    for face in scene.gt:
        for _ in range(n_pos_jitter):
            win = _jitter_window(rng, face, jitter_sigma, spec.width, spec.height)
            if win is not None:
                raw.append(win)
    sizes = [(f.width, f.height) for f in scene.gt] or [(64, 80)]
    for _ in range(n_neg):
        raw.append(_random_negative(rng, sizes, spec.width, spec.height))
    perm = rng.permutation(len(raw))
    shuffled = [raw[i] for i in perm]
    scores = rng.uniform(0.0, 1.0, len(shuffled))
    return [
        replace(w, proposal_score=float(s), id=i)
        for i, (w, s) in enumerate(zip(shuffled, scores))
    ]


def sample_training(
    scene: SyntheticScene,
    n_pos: int = 200,
    n_neg: int = 200,
    jitter_sigma: float = 0.03,
    seed: int | None = None,
) -> list[TrainingSample]:
    """Labeled windows for fitting: positives overlap a face at IoU >= 0.5,
    negatives stay below 0.5 against every face."""
    spec = scene.spec
    if n_pos > 0 and not scene.gt:
        raise InvalidSpec("cannot sample positives from a scene without faces")
    integrals = integral_stack(scene.maps.values())
    rng = _rng(spec.seed if seed is None else seed, _STREAM_TRAINING)
    windows: list[Window] = []
    labels: list[int] = []
    for i in range(n_pos):
        face = scene.gt[i % len(scene.gt)]
        win = None
        for _ in range(20):
            cand = _jitter_window(rng, face, jitter_sigma, spec.width, spec.height)
            if cand is not None and iou(cand, face) >= 0.5:
                win = cand
                break
        windows.append(win if win is not None else face)
        labels.append(1)
    sizes = [(f.width, f.height) for f in scene.gt] or [(64, 80)]
    tries = 0
    negs = 0
    while negs < n_neg:
        tries += 1
        if tries > 50 * n_neg + 1000:
            raise InvalidSpec("could not sample negatives clear of the ground truth")
        cand = _random_negative(rng, sizes, spec.width, spec.height)
        if all(iou(cand, g) < 0.5 for g in scene.gt):
            windows.append(cand)
            labels.append(0)
            negs += 1
    return [
        TrainingSample(replace(w, id=i), lab, integrals)
        for i, (w, lab) in enumerate(zip(windows, labels))
    ]


def write_scene(scene: SyntheticScene, out_dir: str | Path) -> None:
    """Write <channel>.pmap files, gt.csv, plant.json, and proposals.csv if present."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for ch in PART_CHANNELS:
        write_pmap(scene.maps[ch], out / f"{ch}.pmap")
    save_windows(out / "gt.csv", scene.gt)
    centers = []
    for face in scene.spec.faces:
        per_face = scene.layout.part_centers(face.box)
        centers.append(
            {str(ch): list(per_face[ch]) for ch in PART_CHANNELS if ch not in face.occluded}
        )
    plant = {
        "spec": scene.spec.to_json_dict(),
        "lambda": scene.layout.planted(),
        "part_centers": centers,
    }
    atomic_write_text(out / "plant.json", json.dumps(plant, indent=2, sort_keys=True) + "\n")
    if scene.proposals:
        save_windows(out / "proposals.csv", scene.proposals)


def read_scene(scene_dir: str | Path) -> SyntheticScene:
    """Load a scene directory written by write_scene (plus proposals.csv if any)."""
    d = Path(scene_dir)
    with open(d / "plant.json", encoding="utf-8") as fh:
        plant = json.load(fh)
    spec = SceneSpec.from_json_dict(plant["spec"])
    maps = {ch: read_pmap(d / f"{ch}.pmap") for ch in PART_CHANNELS}
    gt = tuple(load_windows(d / "gt.csv"))
    proposals: tuple[Window, ...] = ()
    if (d / "proposals.csv").exists():
        proposals = tuple(load_windows(d / "proposals.csv", bounds=(spec.width, spec.height)))
    return SyntheticScene(spec, maps, gt, proposals)


def load_spec(path: str | Path) -> SceneSpec:
    with open(path, encoding="utf-8") as fh:
        return SceneSpec.from_json_dict(json.load(fh))


def save_spec(spec: SceneSpec, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(spec.to_json_dict(), indent=2, sort_keys=True) + "\n")
