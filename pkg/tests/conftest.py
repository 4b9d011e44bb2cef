from __future__ import annotations

import os

import pytest
from hypothesis import HealthCheck, settings

from qenergy.calibration.pipeline import calibrate
from qenergy.synth import default_plant, synth_dataset

settings.register_profile(
    "qenergy",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("qenergy")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("QENERGY_LIVE") == "1":
        return
    skip = pytest.mark.skip(reason="live measurement; set QENERGY_LIVE=1 to run")
    for item in items:
        if "live" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def plant():
    return default_plant()


@pytest.fixture(scope="session")
def dataset(plant):
    return synth_dataset(plant)


@pytest.fixture(scope="session")
def bundle(plant, dataset):
    return calibrate(dataset, plant.topology)
