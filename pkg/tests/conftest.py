import numpy as np
import pytest
from hypothesis import settings

from bogc.model import CLASSIFICATION, Batch, ToyMultiModalNet

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# Lines recorded by the acceptance checks, echoed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_net_and_batch(gen: np.random.Generator, mode=CLASSIFICATION, M=None, T=None):
    M = M or int(gen.integers(1, 4))
    dims = [int(d) for d in gen.integers(2, 7, size=M)]
    H, F, C = int(gen.integers(2, 7)), int(gen.integers(2, 5)), int(gen.integers(2, 5))
    net = ToyMultiModalNet.init(dims, H, F, C, rng=gen, mode=mode)
    # Non-zero biases so their gradients are exercised too.
    for k, v in net.params.items():
        if k.endswith("b") or k.endswith("b1") or k.endswith("b2"):
            net.params[k] = 0.3 * gen.standard_normal(v.shape)
    T = T or int(gen.integers(1, 6))
    batch = Batch([gen.standard_normal((T, d)) for d in dims], gen.integers(0, C, size=T))
    return net, batch


@pytest.fixture
def gen():
    return np.random.default_rng(1234)


@pytest.fixture
def small_net_batch(gen):
    return random_net_and_batch(gen, M=2, T=5)
