from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from qread.decide.discriminate import ChannelPair  # noqa: E402


@pytest.fixture
def twin_beam_pair() -> ChannelPair:
    """Measured efficiencies, N = 1.15e5, read noise 1e4 per region."""
    return ChannelPair(
        tau0=0.993,
        tau1=1.0,
        eta_s=0.78,
        eta_i=0.77,
        mean_signal_photons=1.15e5,
        electronic_variance=1.0e4,
    )
