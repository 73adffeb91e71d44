import numpy as np
import pytest

from gridpaint import checkpoint, grids, toydata

ASSETS = checkpoint.__file__.rsplit("/", 1)[0] + "/assets"


@pytest.fixture(scope="session")
def toy_checkpoint():
    return checkpoint.load_checkpoint(ASSETS + "/toy_checkpoint.pt")


@pytest.fixture(scope="session")
def toy_library():
    return toydata.toy_training_library(200, seed=0)


@pytest.fixture(scope="session")
def toy_truth():
    return toydata.toy_truth_season()


@pytest.fixture(scope="session")
def toy_pad_spec(toy_checkpoint):
    return grids.make_pad_spec(toy_checkpoint.data_shape)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
