"""MAP estimation of spatial-configuration parameters by exhaustive grid search.

The likelihood of a labeled window is a sigmoid in alpha / delta, where delta
is the window's part-faceness ratio. With a uniform prior on lambda and data
priors independent of the searched parameters, the prior terms are constant
over the grid, so the optimized objective is the plain sum of log likelihoods.
The search is exhaustive over a lambda grid (a triangular pair grid for band
geometries) crossed with a signed, log-spaced alpha grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ChannelMismatch, DegenerateLabels, FacerankError, OutOfBounds
from .faceness import (
    DEFAULT_EPSILON,
    DEFAULT_GEOMETRY,
    Aggregate,
    SpatialConfig,
    SplitGeometry,
    save_configs,
)
from .geometry import Window
from .ioutil import atomic_write_text
from .pmap import Channel, IntegralImage

# Grid rows are evaluated in fixed-size blocks to bound peak memory; the
# summation order is fixed, so results are bit-reproducible.
_BLOCK = 512


@dataclass(frozen=True)
class TrainingSample:
    """Labeled window tied to the integral images of the scene it came from."""

    window: Window
    label: int
    integrals: Mapping[Channel, IntegralImage]

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class GridSpec:
    """Search grid: lambda points per dimension and a signed alpha grid."""

    lambda_points: int = 101
    alpha_points: int = 41
    alpha_min: float = 0.01
    alpha_max: float = 10.0

    def __post_init__(self):
        if self.lambda_points < 1 or self.alpha_points < 1:
            raise ValueError("grid spec must be non-empty")
        if not (0 < self.alpha_min <= self.alpha_max):
            raise ValueError(f"need 0 < alpha_min <= alpha_max, got "
                             f"({self.alpha_min}, {self.alpha_max})")

    def lambda_grid(self) -> np.ndarray:
        if self.lambda_points == 1:
            return np.array([0.5])
        return np.linspace(0.0, 1.0, self.lambda_points)

    def alpha_grid(self) -> np.ndarray:
        """Signed grid, log-spaced in magnitude on each side of zero, zero excluded."""
        if self.alpha_points == 1:
            return np.array([-self.alpha_min])
        s = np.linspace(-1.0, 1.0, self.alpha_points)
        mag = self.alpha_min * (self.alpha_max / self.alpha_min) ** np.abs(s)
        return np.where(s > 0, 1.0, -1.0) * mag


@dataclass(frozen=True)
class GridPoint:
    """Diagnostics: best objective at one lambda grid point."""

    lambdas: tuple[float, ...]
    alpha: float
    objective: float


@dataclass(frozen=True)
class FitResult:
    config: SpatialConfig
    alpha: float
    log_posterior: float
    grid: tuple[GridPoint, ...]


def likelihood(delta: float, r: int, alpha: float) -> float:
    """Sigmoid face likelihood of one sample; stable for |alpha/delta| up to ~700.

    Returns p = 1 / (1 + exp(-alpha / delta)) for r = 1 and 1 - p for r = 0.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if alpha == 0:
        raise ValueError("alpha must be non-zero")
    z = alpha / delta
    if z >= 0:
        p = 1.0 / (1.0 + math.exp(-z))
    else:
        ez = math.exp(z)
        p = ez / (1.0 + ez)
    return p if r == 1 else 1.0 - p


def _sample_arrays(
    samples: Sequence[TrainingSample], channel: Channel
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, list[np.ndarray], np.ndarray]:
    """Window corners, labels, and per-sample index into the unique integral list."""
    n = len(samples)
    x0 = np.empty(n, dtype=np.int64)
    y0 = np.empty(n, dtype=np.int64)
    x1 = np.empty(n, dtype=np.int64)
    y1 = np.empty(n, dtype=np.int64)
    labels = np.empty(n, dtype=np.int64)
    cums: list[np.ndarray] = []
    cum_ids: dict[int, int] = {}
    cum_index = np.empty(n, dtype=np.int64)
    for i, s in enumerate(samples):
        try:
            integral = s.integrals[channel]
        except KeyError:
            raise ChannelMismatch(f"sample {i} has no {channel} integral") from None
        w = s.window
        if not (0 <= w.x0 and w.x1 <= integral.width and 0 <= w.y0 and w.y1 <= integral.height):
            raise OutOfBounds(
                f"sample {i} window ({w.x0},{w.y0},{w.x1},{w.y1}) exceeds map extent "
                f"{integral.width}x{integral.height}"
            )
        key = id(integral.cum)
        if key not in cum_ids:
            cum_ids[key] = len(cums)
            cums.append(integral.cum)
        cum_index[i] = cum_ids[key]
        x0[i], y0[i], x1[i], y1[i] = w.x0, w.y0, w.x1, w.y1
        labels[i] = s.label
    return x0, y0, x1, y1, labels, cums, cum_index


def _delta_block(
    lam_block: np.ndarray,
    geometry: SplitGeometry,
    arrays,
    epsilon: float,
) -> np.ndarray:
    """Delta matrix (block of lambda grid points) x (samples)."""
    x0, y0, x1, y1, _labels, cums, cum_index = arrays
    out = np.empty((lam_block.shape[0], x0.size), dtype=np.float64)
    for u, cum in enumerate(cums):
        cols = np.nonzero(cum_index == u)[0]
        sx0, sx1 = x0[cols][None, :], x1[cols][None, :]
        sy0, sy1 = y0[cols][None, :], y1[cols][None, :]
        if geometry is SplitGeometry.BAND_OVER_OUTSIDE:
            h = sy1 - sy0
            top = np.floor(sy0 + lam_block[:, 0:1] * h + 0.5).astype(np.int64)
            bot = np.floor(sy0 + lam_block[:, 1:2] * h + 0.5).astype(np.int64)
            band = cum[bot, sx1] - cum[top, sx1] - cum[bot, sx0] + cum[top, sx0]
            total = cum[sy1, sx1] - cum[sy0, sx1] - cum[sy1, sx0] + cum[sy0, sx0]
            outside = np.maximum(total - band, 0.0)
            delta = (band + epsilon) / (outside + epsilon)
        else:
            ys = np.floor(
                lam_block[:, 0:1] * sy0 + (1.0 - lam_block[:, 0:1]) * sy1 + 0.5
            ).astype(np.int64)
            upper = cum[ys, sx1] - cum[sy0, sx1] - cum[ys, sx0] + cum[sy0, sx0]
            lower = cum[sy1, sx1] - cum[ys, sx1] - cum[sy1, sx0] + cum[ys, sx0]
            if geometry is SplitGeometry.TOP_OVER_BOTTOM:
                delta = (upper + epsilon) / (lower + epsilon)
            else:
                delta = (lower + epsilon) / (upper + epsilon)
        out[:, cols] = delta
    return out


def _lambda_points(geometry: SplitGeometry, grid: np.ndarray) -> np.ndarray:
    """(G, 1) column for single-lambda geometries, (G, 2) ordered pairs for bands."""
    if geometry is SplitGeometry.BAND_OVER_OUTSIDE:
        if grid.size < 2:
            raise ValueError("band geometry needs at least 2 lambda grid points")
        ii, jj = np.triu_indices(grid.size, k=1)
        return np.column_stack([grid[ii], grid[jj]])
    return grid[:, None]


def fit_map(
    samples: Sequence[TrainingSample],
    channel: Channel,
    geometry: SplitGeometry,
    search: GridSpec = GridSpec(),
    epsilon: float = DEFAULT_EPSILON,
) -> FitResult:
    """Maximize the summed log likelihood over the (lambda, alpha) grid.

    Ties are broken by smallest |lambda - 0.5| (summed over dimensions), then
    smallest |alpha|, then ascending lambda, then ascending alpha, so the
    result is deterministic for a given grid regardless of evaluation order.
    """
    if not samples:
        raise DegenerateLabels("no training samples")
    arrays = _sample_arrays(samples, channel)
    labels = arrays[4]
    if labels.min() == labels.max():
        raise DegenerateLabels(
            "need at least one positive and one negative sample, got all "
            + ("positive" if labels[0] == 1 else "negative")
        )
    lam_points = _lambda_points(geometry, search.lambda_grid())
    alphas = search.alpha_grid()
    sign = np.where(labels == 1, 1.0, -1.0)

    n_grid = lam_points.shape[0]
    objective = np.empty((n_grid, alphas.size), dtype=np.float64)
    for start in range(0, n_grid, _BLOCK):
        block = lam_points[start : start + _BLOCK]
        delta = _delta_block(block, geometry, arrays, epsilon)
        signed_inv = sign[None, :] / delta
        for k, alpha in enumerate(alphas):
            # log sigmoid(alpha/delta) for positives, log(1 - .) for negatives
            objective[start : start + block.shape[0], k] = -np.logaddexp(
                0.0, -alpha * signed_inv
            ).sum(axis=1)

    best = float(objective.max())
    gi, ki = np.nonzero(objective == best)
    def tie_key(pair):
        g, k = pair
        lams = tuple(lam_points[g])
        return (
            sum(abs(l - 0.5) for l in lams),
            abs(alphas[k]),
            lams,
            alphas[k],
        )
    g_best, k_best = min(zip(gi.tolist(), ki.tolist()), key=tie_key)

    # Per-lambda diagnostics: best alpha at each grid point, same tie rule.
    per_lambda_k = np.argmax(objective, axis=1)
    grid_points = []
    for g in range(n_grid):
        row = objective[g]
        k = int(per_lambda_k[g])
        ties = np.nonzero(row == row[k])[0]
        if ties.size > 1:
            k = min(ties.tolist(), key=lambda j: (abs(alphas[j]), alphas[j]))
        grid_points.append(GridPoint(tuple(lam_points[g]), float(alphas[k]), float(row[k])))

    lams = lam_points[g_best]
    if geometry is SplitGeometry.BAND_OVER_OUTSIDE:
        config = SpatialConfig(
            channel, geometry, lam_top=float(lams[0]), lam_bot=float(lams[1]), epsilon=epsilon
        )
    else:
        config = SpatialConfig(channel, geometry, lam=float(lams[0]), epsilon=epsilon)
    return FitResult(config, float(alphas[k_best]), best, tuple(grid_points))


def fit_all(
    samples: Sequence[TrainingSample],
    channels: Sequence[Channel],
    geometries: Mapping[Channel, SplitGeometry] | None = None,
    search: GridSpec = GridSpec(),
    epsilon: float = DEFAULT_EPSILON,
) -> list[FitResult]:
    """Independent fit per channel; alpha is fitted jointly with lambda each time."""
    geo = DEFAULT_GEOMETRY if geometries is None else geometries
    results = []
    for ch in channels:
        try:
            results.append(fit_map(samples, ch, geo[ch], search, epsilon))
        except FacerankError as exc:
            raise type(exc)(f"channel {ch}: {exc}") from exc
    return results


def save_fit_results(
    path: str | Path,
    results: Sequence[FitResult],
    mode: Aggregate = Aggregate.ARITH,
    grid_dump_dir: str | Path | None = None,
) -> None:
    """Write fitted configs in the shared config-file schema plus fit diagnostics."""
    extras = []
    for r in results:
        d: dict = {"alpha": r.alpha, "log_posterior": r.log_posterior}
        if grid_dump_dir is not None:
            dump = Path(grid_dump_dir) / f"grid_{r.config.channel}.csv"
            save_grid_dump(dump, r)
            d["grid_dump"] = dump.name
        extras.append(d)
    save_configs(path, [r.config for r in results], mode, extras)


def save_grid_dump(path: str | Path, result: FitResult) -> None:
    """Diagnostics CSV: `lambda[,lambda_bot],alpha,objective` per lambda grid point."""
    band = result.config.geometry is SplitGeometry.BAND_OVER_OUTSIDE
    lines = ["# lambda,lambda_bot,alpha,objective" if band else "# lambda,alpha,objective"]
    for gp in result.grid:
        lam_cols = ",".join(f"{l:.10g}" for l in gp.lambdas)
        lines.append(f"{lam_cols},{gp.alpha:.10g},{gp.objective:.10g}")
    atomic_write_text(path, "\n".join(lines) + "\n")
