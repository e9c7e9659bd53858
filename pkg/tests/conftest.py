import numpy as np
import pytest
import torch


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(max(1, torch.get_num_threads()))
    yield
