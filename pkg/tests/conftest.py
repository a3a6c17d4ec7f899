from __future__ import annotations

from importlib import resources

import pytest

from pbd import default_ruleset, parse_model


def example_text(filename: str) -> str:
    return resources.files("pbd.examples").joinpath(filename).read_text("utf-8")


@pytest.fixture(scope="session")
def ruleset():
    return default_ruleset()


@pytest.fixture(scope="session")
def smarthome(ruleset):
    return parse_model(example_text("smarthome.pbd"), ruleset)


@pytest.fixture(scope="session")
def cloud_middleware(ruleset):
    return parse_model(example_text("cloud-middleware.pbd"), ruleset)


@pytest.fixture(scope="session")
def prop_models(ruleset):
    from modelgen import propagation_family

    return propagation_family(ruleset)
