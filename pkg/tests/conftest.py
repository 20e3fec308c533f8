import numpy as np
import pytest

from vadkit.synth import gen_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def hook_dataset(tmp_path_factory):
    """Tiny loop-scene dataset on the hook checkpoint (no flips, fastest)."""
    root = tmp_path_factory.mktemp("hookds")
    info = gen_dataset(root, "loop", n_normal=3, n_anomalous=2, seed=77,
                       checkpoint="hook", raw_px=288)
    return info


@pytest.fixture(scope="session")
def cortex_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cortexds")
    info = gen_dataset(root, "cortex", n_normal=3, n_anomalous=2, seed=78, raw_px=288)
    return info
