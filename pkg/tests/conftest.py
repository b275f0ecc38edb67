import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from deepvqe.config import preset
from deepvqe.model import build_model
from deepvqe.weights import random_init


@pytest.fixture(scope="session")
def small_cfg():
    return preset("deepvqe-s")


@pytest.fixture(scope="session")
def small_model(small_cfg):
    return build_model(small_cfg, random_init(small_cfg, seed=1234))


def stream_utterance(engine, mic, far):
    """Feed whole signals packet by packet, return the concatenated output."""
    hop = engine.hop
    n = len(mic) // hop
    out = np.zeros(n * hop)
    for i in range(n):
        sl = slice(i * hop, (i + 1) * hop)
        out[sl] = engine.process_frame(mic[sl], far[sl])
    return out
