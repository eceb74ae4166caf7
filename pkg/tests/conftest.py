import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from scenesmith.geo import GeoTransform, LVCSOrigin, RasterGrid, geodetic_from_lvcs

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def origin():
    return LVCSOrigin(40.0, -77.0, 100.0)


def grid_at(origin, values, gsd=1.0, x0=0.0, y0=None, nodata=None):
    """Raster whose NW corner sits at LVCS (x0, y0); y0 defaults to the raster height."""
    values = np.asarray(values, dtype=float)
    h, w = values.shape[-2:]
    if y0 is None:
        y0 = h * gsd
    lat, lon, _ = geodetic_from_lvcs((x0, y0, 0.0), origin)
    return RasterGrid(GeoTransform(lon, lat, gsd, gsd, w, h), values, nodata)


@pytest.fixture(scope="session")
def e2e(tmp_path_factory):
    """The synthetic fixture with the full pipeline run once."""
    from scenesmith.config import load_config
    from scenesmith.fixtures import make_fixture
    from scenesmith.pipeline import run

    root = tmp_path_factory.mktemp("e2e")
    fx = make_fixture(root)
    report = run(load_config(fx.config), "all")
    return fx, report


ACCEPTANCE: list[str] = []   # one line per acceptance criterion, filled by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
