import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by tests/test_acceptance.py
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  [{detail}]")


def make_tiny_gazetteer():
    from usergeo.geo import GeoPoint
    from usergeo.ingest import Gazetteer, GazetteerEntry
    return Gazetteer([
        GazetteerEntry(10, "Buenos Aires", ("BA", "Capital Federal"), GeoPoint(-34.6037, -58.3816), "AR", 3_000_000),
        GazetteerEntry(20, "Cordoba", ("Córdoba",), GeoPoint(-31.4201, -64.1888), "AR", 1_300_000),
        GazetteerEntry(30, "Springfield", (), GeoPoint(39.7817, -89.6501), "US", 114_000),
        GazetteerEntry(31, "Springfield", (), GeoPoint(39.9, -89.5), "US", 5_000),
        GazetteerEntry(40, "Paris", (), GeoPoint(48.8566, 2.3522), "FR", 2_100_000),
        GazetteerEntry(41, "Paris", (), GeoPoint(33.6609, -95.5555), "US", 25_000),
    ])


@pytest.fixture
def tiny_gazetteer():
    return make_tiny_gazetteer()
