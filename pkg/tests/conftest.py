import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _torch_single_thread_guard():
    # keep CI runtimes predictable on small machines
    if torch.get_num_threads() > 4:
        torch.set_num_threads(4)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
