import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from sweeper.model import AttenuationMode, default_scenario  # noqa: E402


@pytest.fixture
def scenario():
    return default_scenario()


@pytest.fixture
def symmetric():
    return default_scenario(factor=1.0)


def single_beam(scenario, drift=0.0):
    """The scenario with the attenuated beam switched off entirely."""
    from dataclasses import replace
    beams = list(scenario.beams)
    beams[scenario.strong] = replace(beams[scenario.strong], drift=drift)
    return scenario.with_beams(beams).with_attenuation(0.0, AttenuationMode.STOCHASTIC)
