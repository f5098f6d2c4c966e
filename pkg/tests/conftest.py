import numpy as np
import pytest

from gne_mesh.config import load_preset, resolve
from gne_mesh.game import energy_game


@pytest.fixture
def game():
    return energy_game()


@pytest.fixture
def preset():
    return load_preset("energy-demand")


@pytest.fixture
def setup_factory(preset):
    def make(**changes):
        horizon = changes.pop("horizon", 200)
        cfg = preset.replace(**changes) if changes else preset
        s = resolve(cfg)
        s.horizon = horizon
        return s

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
