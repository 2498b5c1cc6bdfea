import numpy as np
import pytest

from bornsim import RngStream


@pytest.fixture
def rng():
    return RngStream(20240817)


def binomial_sigma(p: float, n: int) -> float:
    return float(np.sqrt(max(p * (1.0 - p), 1e-300) / n))
