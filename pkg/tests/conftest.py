"""
Pytest configuration and fixtures for hts_capacity tests
"""

import pytest
from helpers import random_problem

from hts_capacity import (
    MalagaParams,
    RngStream,
    ScenarioConfig,
    ShadowedRicianParams,
    load_presets,
)

PRESETS = load_presets()
TURBULENCE = sorted(PRESETS["turbulence"])
SHADOWING = sorted(PRESETS["shadowing"])


@pytest.fixture(params=TURBULENCE)
def malaga(request):
    """Every shipped turbulence preset"""
    return MalagaParams(**PRESETS["turbulence"][request.param])


@pytest.fixture(params=SHADOWING)
def shadowing(request):
    """Every shipped shadowing preset"""
    return ShadowedRicianParams(**PRESETS["shadowing"][request.param])


@pytest.fixture
def average_shadowing():
    return ShadowedRicianParams(**PRESETS["shadowing"]["average"])


@pytest.fixture
def strong_turbulence():
    return MalagaParams(**PRESETS["turbulence"]["strong"])


@pytest.fixture
def stream():
    """Reproducible random stream"""
    return RngStream(2024)


@pytest.fixture
def problem():
    return random_problem(7)


@pytest.fixture
def scenario():
    """Built-in default scenario"""
    return ScenarioConfig.from_dict({})


@pytest.fixture
def geo_problem(scenario, stream):
    """Beamforming problem on the default hexagonal layout"""
    ul = scenario.userlink
    return ul.problem(ul.geometry(stream.child(0)))


@pytest.fixture
def scenario_file(tmp_path):
    """Write a TOML scenario and return its path"""

    def write(text, name="scenario.toml"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write
