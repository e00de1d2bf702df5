import numpy as np
import pytest
from hypothesis import settings

from evsfa.events import EventStream

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_stream(seed, n=1000, width=32, height=32, duration=500000):
    rng = np.random.default_rng(seed)
    return EventStream.from_arrays(
        rng.integers(0, width, n),
        rng.integers(0, height, n),
        rng.integers(0, duration, n),
        rng.integers(0, 2, n).astype(np.uint8),
        width=width,
        height=height,
    )


@pytest.fixture
def rstream():
    return random_stream
