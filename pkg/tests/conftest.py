import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lanehmm.model_core import HmmParams, RuntimeConfig

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def cfg():
    return RuntimeConfig()


@pytest.fixture
def params3():
    return HmmParams(n=3, sigma1=0.4, sigma2=0.4, p1=0.9, p2=0.9, p3=0.8, p4=0.8, bv=2.0)


def random_params(rng: np.random.Generator, n: int, sigma_lo: float = 0.05) -> HmmParams:
    return HmmParams(
        n=n,
        sigma1=float(rng.uniform(sigma_lo, 3.0)),
        sigma2=float(rng.uniform(sigma_lo, 3.0)),
        p1=float(rng.uniform(0.01, 0.999)),
        p2=float(rng.uniform(0.01, 0.999)),
        p3=float(rng.uniform(0.01, 0.999)),
        p4=float(rng.uniform(0.01, 0.999)),
        bv=float(rng.integers(0, 11)),
    )
