import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fractal_forms import BoundaryMeasure, SnowflakeCurve, build_averaged, build_level, estimate_constants

settings.register_profile("repo", max_examples=30, deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def curve():
    return SnowflakeCurve()


@pytest.fixture(scope="session")
def mu(curve):
    return BoundaryMeasure(curve)


@pytest.fixture(scope="session")
def constants(curve):
    return estimate_constants(curve)


@pytest.fixture(scope="session")
def level(curve):
    cache = {}

    def get(n):
        if n not in cache:
            cache[n] = build_level(curve, n)
        return cache[n]
    return get


@pytest.fixture(scope="session")
def averaged(mu, level):
    cache = {}

    def get(n):
        if n not in cache:
            cache[n] = build_averaged(mu, level(n))
        return cache[n]
    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
