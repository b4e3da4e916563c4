"""
Pytest configuration and fixtures
"""

import json
import math
import tempfile
from pathlib import Path

import numpy as np
import pytest

from boussinesq_lab import logger
from boussinesq_lab.spectral_core import GridSpec

FIXTURES = Path(__file__).parent / "fixtures"
SCENARIOS = Path(__file__).parent.parent / "scenarios"


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests"""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def small_grid():
    """64 x 64 grid on the 2pi torus; integer wavenumbers"""
    return GridSpec(n=64, length=2.0 * math.pi)


@pytest.fixture
def records():
    """Structured records emitted by the global logger during the test"""
    collected = []
    handler_id = logger.add(lambda text: collected.append(json.loads(text)), serialize=True)
    yield collected
    logger.remove(handler_id)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


SMALL_SCENARIO = """
[grid]
n = 64
length = 2pi

[time]
dt = 2e-2
t_end = 0.2
diagnostics_every = 5

[patch]
kind = disc
radius = 1.0
singular_set = none
contour_points = 256

[density]
profile = {profile}
amplitude = {amplitude}

[analysis]
sample_pairs = 1000

[checks]
{checks}
"""


@pytest.fixture
def scenario_text():
    """Factory for a small disc scenario"""

    def make(checks="conservation = assert", profile="linear", amplitude=0.05):
        return SMALL_SCENARIO.format(checks=checks, profile=profile, amplitude=amplitude)

    return make
