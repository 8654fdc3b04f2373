import math
import sys

import numpy as np
import pytest

from solitonlab.graph_shrinker import near_plane_shrinker
from solitonlab.surfaces import Cylinder, Hyperplane, Sphere, TiltedPlaneGraph, make_catalog
from solitonlab.translators import bowl_solve

E3 = (0.0, 0.0, 1.0)
GIRTH = (math.sqrt(2.0), 0.0, 0.0)


@pytest.fixture(scope="session")
def sphere():
    return make_catalog(Sphere(2))


@pytest.fixture(scope="session")
def cylinder():
    return make_catalog(Cylinder(1, 2), None, 10.5)


@pytest.fixture(scope="session")
def cylinder6():
    return make_catalog(Cylinder(1, 2), None, 6.0)


@pytest.fixture(scope="session")
def plane():
    return make_catalog(Hyperplane(E3), None, 8.5)


@pytest.fixture(scope="session")
def plane10():
    return make_catalog(Hyperplane(E3), 0.1, 10.0)


@pytest.fixture(scope="session")
def tilted():
    return make_catalog(TiltedPlaneGraph((0.3, 0.0, 1.0)), None, 6.0)


@pytest.fixture(scope="session")
def shrinker():
    """Newton-solved graph shrinker close to the plane (about 8 s)."""
    return near_plane_shrinker()


@pytest.fixture(scope="session")
def bowl2():
    return bowl_solve(2, 10.0, 0.01)


@pytest.fixture(scope="session")
def bowl3():
    return bowl_solve(3, 10.0, 0.01)


def nearest(surface, point):
    return surface.x[int(np.argmin(np.linalg.norm(surface.x - np.asarray(point), axis=1)))]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, "rep_" + rep.when, rep)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if mod.RESULTS[n] else 'FAIL'}")
