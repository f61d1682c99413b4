from __future__ import annotations

import math

import pytest
from hypothesis import settings

from nonplanar_brake.force_model import VehicleParams
from nonplanar_brake.road_surface import RoadSurface
from nonplanar_brake.scenarios import u_turn, winding_hill

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

OFF_CAMBER = -math.atan(0.3)


@pytest.fixture(scope="session")
def params() -> VehicleParams:
    return VehicleParams()


@pytest.fixture(scope="session")
def plane() -> RoadSurface:
    return RoadSurface.plane(200.0, 4.0)


@pytest.fixture(scope="session")
def crest() -> RoadSurface:
    return RoadSurface.crest(100.0, s_max=60.0, half_width=4.0, apex_s=30.0)


@pytest.fixture(scope="session")
def banked() -> RoadSurface:
    """R = 50 m left arc with a 30% stabilising bank."""
    return RoadSurface.banked_arc(50.0, 30.0, math.pi, half_width=4.0)


@pytest.fixture(scope="session")
def uturn() -> RoadSurface:
    return u_turn()


@pytest.fixture(scope="session")
def hill() -> RoadSurface:
    return winding_hill()


@pytest.fixture(scope="session")
def shipped_roads(plane, crest, banked, uturn, hill) -> dict:
    return {"plane": plane, "crest": crest, "banked": banked, "uturn": uturn, "hill": hill}
