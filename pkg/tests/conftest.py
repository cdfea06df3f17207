import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(Path(__file__).parent))

from bidesp import network as netmod  # noqa: E402


@pytest.fixture(scope="session")
def root():
    return ROOT


@pytest.fixture(scope="session")
def tiny_net():
    return netmod.load(ROOT / "fixtures" / "tiny_network.json")


@pytest.fixture(scope="session")
def small_net():
    return netmod.generate(netmod.NetworkGenConfig(layers=5, molecules_per_layer=10, seed=11))
