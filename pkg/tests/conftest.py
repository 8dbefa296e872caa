import pytest

import facerank as fr


@pytest.fixture(scope="session")
def small_scene():
    """Two-face scene, small enough for unit tests to stay fast."""
    return fr.generate(fr.default_spec(seed=11, faces=2, width=192, height=192))


@pytest.fixture(scope="session")
def small_samples(small_scene):
    return fr.sample_training(small_scene, n_pos=80, n_neg=80)


def random_map(rng, channel, width, height, lo=0.0, hi=1.0):
    return fr.PartnessMap(channel, rng.uniform(lo, hi, size=(height, width)))
