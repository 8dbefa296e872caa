import json
import math

import numpy as np
import pytest

import facerank as fr
from facerank.errors import ChannelMismatch, EmptyScoreSet, OutOfBounds
from facerank.faceness import (
    Aggregate,
    SpatialConfig,
    SplitGeometry,
    band_rows,
    combined_faceness,
    load_configs,
    part_faceness,
    save_configs,
    score_windows,
    split_row,
)
from facerank.geometry import Window, iou
from facerank.pmap import Channel, PartnessMap, build_integral

EPS = 1e-6


def oracle_part_faceness(values, window, config):
    """Independent pixel-summation oracle with its own split arithmetic."""
    v = np.asarray(values, dtype=np.float32).astype(np.float64)
    x0, y0, x1, y1 = window.x0, window.y0, window.x1, window.y1
    eps = config.epsilon
    if config.geometry is SplitGeometry.BAND_OVER_OUTSIDE:
        top = math.floor(y0 + config.lam_top * (y1 - y0) + 0.5)
        bot = math.floor(y0 + config.lam_bot * (y1 - y0) + 0.5)
        band = v[top:bot, x0:x1].sum()
        outside = v[y0:top, x0:x1].sum() + v[bot:y1, x0:x1].sum()
        return (band + eps) / (outside + eps)
    ys = math.floor(config.lam * y0 + (1.0 - config.lam) * y1 + 0.5)
    upper = v[y0:ys, x0:x1].sum()
    lower = v[ys:y1, x0:x1].sum()
    if config.geometry is SplitGeometry.TOP_OVER_BOTTOM:
        return (upper + eps) / (lower + eps)
    return (lower + eps) / (upper + eps)


def random_config(rng, geometry, channel=Channel.HAIR):
    if geometry is SplitGeometry.BAND_OVER_OUTSIDE:
        top, bot = sorted(rng.uniform(0, 1, size=2))
        if top == bot:
            top, bot = 0.25, 0.75
        return SpatialConfig(channel, geometry, lam_top=float(top), lam_bot=float(bot))
    return SpatialConfig(channel, geometry, lam=float(rng.uniform(0, 1)))


class TestSplitHelpers:
    def test_split_row_convention(self):
        # lam = 1 pins the split to the window top, lam = 0 to the bottom
        assert split_row(10, 50, 1.0) == 10
        assert split_row(10, 50, 0.0) == 50
        assert split_row(10, 50, 0.5) == 30

    def test_band_rows_from_top(self):
        assert band_rows(10, 50, 0.25, 0.75) == (20, 40)

    def test_half_rounds_up(self):
        # 0.3*10 + 0.7*15 = 13.5 -> 14
        assert split_row(10, 15, 0.3) == 14


class TestPartFaceness:
    def test_top_heavy_window(self):
        values = np.array([[1.0] * 4, [1.0] * 4, [0.1] * 4, [0.1] * 4])
        integral = build_integral(PartnessMap(Channel.HAIR, values))
        cfg = SpatialConfig(Channel.HAIR, SplitGeometry.TOP_OVER_BOTTOM, lam=0.5)
        delta = part_faceness(integral, Window(0, 0, 4, 4), cfg)
        v32 = values.astype(np.float32).astype(np.float64)
        expected = (v32[:2].sum() + EPS) / (v32[2:].sum() + EPS)
        assert delta == pytest.approx(expected, rel=1e-12)
        assert delta == pytest.approx(10.0, rel=1e-3)

    def test_uniform_map_equal_split_is_one(self):
        integral = build_integral(PartnessMap(Channel.EYE, np.full((20, 20), 0.7)))
        w = Window(2, 4, 18, 16)
        top = SpatialConfig(Channel.EYE, SplitGeometry.TOP_OVER_BOTTOM, lam=0.5)
        bot = SpatialConfig(Channel.EYE, SplitGeometry.BOTTOM_OVER_TOP, lam=0.5)
        band = SpatialConfig(Channel.EYE, SplitGeometry.BAND_OVER_OUTSIDE, lam_top=0.25, lam_bot=0.75)
        for cfg in (top, bot, band):
            assert part_faceness(integral, w, cfg) == pytest.approx(1.0, abs=1e-9)

    def test_zero_map_gives_one(self):
        integral = build_integral(PartnessMap(Channel.NOSE, np.zeros((8, 8))))
        cfg = SpatialConfig(Channel.NOSE, SplitGeometry.TOP_OVER_BOTTOM, lam=0.3)
        assert part_faceness(integral, Window(0, 0, 8, 8), cfg) == 1.0

    def test_lambda_extremes(self):
        values = np.full((10, 10), 0.5)
        integral = build_integral(PartnessMap(Channel.HAIR, values))
        w = Window(0, 0, 10, 10)
        total = values.sum()
        at_one = part_faceness(
            integral, w, SpatialConfig(Channel.HAIR, SplitGeometry.TOP_OVER_BOTTOM, lam=1.0)
        )
        at_zero = part_faceness(
            integral, w, SpatialConfig(Channel.HAIR, SplitGeometry.TOP_OVER_BOTTOM, lam=0.0)
        )
        assert at_one == pytest.approx(EPS / (total + EPS), rel=1e-9)
        assert at_zero == pytest.approx((total + EPS) / EPS, rel=1e-9)

    @pytest.mark.parametrize("geometry", list(SplitGeometry))
    def test_matches_pixel_oracle(self, geometry):
        rng = np.random.default_rng(abs(hash(geometry.value)) % 2**32)
        for _ in range(300):
            h, w = int(rng.integers(6, 60)), int(rng.integers(6, 60))
            values = rng.uniform(0, 2, size=(h, w))
            m = PartnessMap(Channel.MOUTH, values)
            integral = build_integral(m)
            x0, x1 = sorted(rng.choice(w + 1, size=2, replace=False))
            y0, y1 = sorted(rng.choice(h + 1, size=2, replace=False))
            window = Window(int(x0), int(y0), int(x1), int(y1))
            cfg = random_config(rng, geometry, Channel.MOUTH)
            got = part_faceness(integral, window, cfg)
            assert got == pytest.approx(oracle_part_faceness(m.values, window, cfg), rel=1e-5)

    def test_scale_invariance(self):
        rng = np.random.default_rng(12)
        values = rng.uniform(0.1, 1.0, size=(40, 40))
        w = Window(4, 4, 36, 36)
        cfg = SpatialConfig(Channel.HAIR, SplitGeometry.TOP_OVER_BOTTOM, lam=0.4)
        base = part_faceness(build_integral(PartnessMap(Channel.HAIR, values)), w, cfg)
        for k in (3.0, 250.0):
            scaled = part_faceness(build_integral(PartnessMap(Channel.HAIR, values * k)), w, cfg)
            assert scaled == pytest.approx(base, rel=1e-6)

    def test_translation_equivariance_exact(self):
        # Values quantized to 1/1024 keep every float64 accumulation exact,
        # so translated content + translated window give bit-equal ratios.
        rng = np.random.default_rng(13)
        patch = rng.integers(0, 1024, size=(12, 9)).astype(np.float64) / 1024.0
        results = []
        for dx, dy in ((0, 0), (17, 23)):
            canvas = np.zeros((64, 64))
            canvas[5 + dy : 17 + dy, 3 + dx : 12 + dx] = patch
            integral = build_integral(PartnessMap(Channel.BEARD, canvas))
            w = Window(2 + dx, 4 + dy, 14 + dx, 19 + dy)
            cfg = SpatialConfig(Channel.BEARD, SplitGeometry.BOTTOM_OVER_TOP, lam=0.37)
            results.append(part_faceness(integral, w, cfg))
        assert results[0] == results[1]

    def test_channel_mismatch(self):
        integral = build_integral(PartnessMap(Channel.HAIR, np.ones((4, 4))))
        cfg = SpatialConfig(Channel.EYE, SplitGeometry.TOP_OVER_BOTTOM, lam=0.5)
        with pytest.raises(ChannelMismatch):
            part_faceness(integral, Window(0, 0, 4, 4), cfg)

    def test_unclipped_window(self):
        integral = build_integral(PartnessMap(Channel.HAIR, np.ones((4, 4))))
        cfg = SpatialConfig(Channel.HAIR, SplitGeometry.TOP_OVER_BOTTOM, lam=0.5)
        with pytest.raises(OutOfBounds):
            part_faceness(integral, Window(0, 0, 8, 8), cfg)


class TestCombinedFaceness:
    def test_arith_mean(self):
        assert combined_faceness([2.0, 4.0], Aggregate.ARITH) == 3.0

    def test_singleton(self):
        assert combined_faceness([5.0], Aggregate.ARITH) == 5.0
        assert combined_faceness([5.0], Aggregate.GEO) == pytest.approx(5.0, rel=1e-12)

    def test_geo_mean(self):
        expected = math.exp((math.log(1.0) + math.log(4.0)) / 2)
        assert combined_faceness([1.0, 4.0], Aggregate.GEO) == pytest.approx(expected, rel=1e-12)
        assert combined_faceness([1.0, 4.0], Aggregate.GEO) == pytest.approx(2.0, rel=1e-12)

    def test_empty_raises(self):
        with pytest.raises(EmptyScoreSet):
            combined_faceness([], Aggregate.ARITH)

    def test_arith_monotone_in_each_part(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            vals = list(rng.uniform(0.1, 10, size=4))
            bumped = list(vals)
            i = int(rng.integers(4))
            bumped[i] += rng.uniform(0.01, 5)
            assert combined_faceness(bumped) >= combined_faceness(vals)

    def test_mapping_input(self):
        scores = {Channel.HAIR: 2.0, Channel.EYE: 4.0}
        assert combined_faceness(scores) == 3.0


class TestScoreWindows:
    def test_single_window_single_part(self):
        integral = build_integral(PartnessMap(Channel.HAIR, np.ones((10, 10))))
        cfg = SpatialConfig(Channel.HAIR, SplitGeometry.TOP_OVER_BOTTOM, lam=0.5)
        (score,) = score_windows({Channel.HAIR: integral}, [Window(0, 0, 10, 10, id=3)], [cfg])
        assert score.window_id == 3
        assert score.combined == score.per_part[Channel.HAIR]

    def test_empty_window_list(self):
        integral = build_integral(PartnessMap(Channel.HAIR, np.ones((10, 10))))
        cfg = SpatialConfig(Channel.HAIR, SplitGeometry.TOP_OVER_BOTTOM, lam=0.5)
        assert score_windows({Channel.HAIR: integral}, [], [cfg]) == []

    def test_planted_face_beats_background(self, small_scene):
        from facerank.cli import default_configs

        integrals = fr.integral_stack(small_scene.maps.values())
        face = small_scene.gt[0]
        background = next(
            w
            for x0 in range(0, small_scene.spec.width - 48, 8)
            for y0 in range(0, small_scene.spec.height - 60, 8)
            if all(iou((w := Window(x0, y0, x0 + 48, y0 + 60)), g) == 0.0 for g in small_scene.gt)
        )
        scores = score_windows(integrals, [face, background], default_configs())
        assert scores[0].combined > scores[1].combined

    def test_missing_integral(self):
        cfg = SpatialConfig(Channel.EYE, SplitGeometry.BAND_OVER_OUTSIDE, lam_top=0.2, lam_bot=0.6)
        with pytest.raises(ChannelMismatch):
            score_windows({}, [Window(0, 0, 4, 4)], [cfg])

    def test_error_carries_window_id(self):
        integral = build_integral(PartnessMap(Channel.HAIR, np.ones((4, 4))))
        cfg = SpatialConfig(Channel.HAIR, SplitGeometry.TOP_OVER_BOTTOM, lam=0.5)
        with pytest.raises(OutOfBounds, match="window 9"):
            score_windows({Channel.HAIR: integral}, [Window(0, 0, 9, 9, id=9)], [cfg])

    def test_no_configs(self):
        with pytest.raises(EmptyScoreSet):
            score_windows({}, [], [])


class TestSpatialConfig:
    def test_band_order_enforced(self):
        with pytest.raises(ValueError):
            SpatialConfig(Channel.EYE, SplitGeometry.BAND_OVER_OUTSIDE, lam_top=0.7, lam_bot=0.3)

    def test_lambda_range_enforced(self):
        with pytest.raises(ValueError):
            SpatialConfig(Channel.HAIR, SplitGeometry.TOP_OVER_BOTTOM, lam=1.5)

    def test_epsilon_positive(self):
        with pytest.raises(ValueError):
            SpatialConfig(Channel.HAIR, SplitGeometry.TOP_OVER_BOTTOM, lam=0.5, epsilon=0.0)

    def test_band_takes_no_single_lam(self):
        with pytest.raises(ValueError):
            SpatialConfig(Channel.EYE, SplitGeometry.BAND_OVER_OUTSIDE, lam=0.5)

    def test_json_round_trip(self, tmp_path):
        configs = [
            SpatialConfig(Channel.HAIR, SplitGeometry.TOP_OVER_BOTTOM, lam=0.3),
            SpatialConfig(Channel.EYE, SplitGeometry.BAND_OVER_OUTSIDE, lam_top=0.32, lam_bot=0.46),
        ]
        path = tmp_path / "config.json"
        save_configs(path, configs, Aggregate.GEO)
        back, mode = load_configs(path)
        assert back == configs
        assert mode is Aggregate.GEO

    def test_loader_ignores_extra_keys(self, tmp_path):
        payload = {
            "mode": "arith",
            "configs": [
                {
                    "channel": "hair",
                    "geometry": "top_over_bottom",
                    "lambda": 0.3,
                    "epsilon": 1e-6,
                    "alpha": -2.0,
                    "log_posterior": -12.5,
                }
            ],
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(payload))
        configs, _mode = load_configs(path)
        assert configs[0].lam == 0.3
