import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stereomem.features import TokenGrid


def random_grid(rng, height, width, channels, scale=0.25) -> TokenGrid:
    return TokenGrid(scale=scale, data=rng.standard_normal((height, width, channels)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
