"""Shared fixtures: shipped scenarios and their solved models.

Expensive artifacts (stationary solutions, large chain ensembles) are
session-scoped so the suite computes them once.
"""
import os

import numpy as np
import pytest

import mflq
from mflq.scenario import parse_scenario

SCENARIO_DIR = os.path.join(os.path.dirname(mflq.__file__), "scenarios")


def scenario_path(name: str) -> str:
    return os.path.join(SCENARIO_DIR, f"{name}.json")


def load_model(name: str):
    scen = parse_scenario(scenario_path(name))
    return scen, mflq.decompose(scen.raw, scen.signals)


@pytest.fixture(scope="session")
def scalar_scenario():
    return load_model("scalar_analytic")


@pytest.fixture(scope="session")
def two_regime_scenario():
    return load_model("two_regime_homogeneous")


@pytest.fixture(scope="session")
def integrable_scenario():
    return load_model("integrable_forcing")


@pytest.fixture(scope="session")
def sinusoidal_scenario():
    return load_model("sinusoidal_lic")


@pytest.fixture(scope="session")
def constant_b_scenario():
    return load_model("constant_b_scalar")


@pytest.fixture(scope="session")
def scalar_stationary(scalar_scenario):
    scen, model = scalar_scenario
    return mflq.solve_are(model, tol=scen.solver.tol)


@pytest.fixture(scope="session")
def two_regime_stationary(two_regime_scenario):
    scen, model = two_regime_scenario
    return mflq.solve_are(model, tol=scen.solver.tol)


@pytest.fixture(scope="session")
def two_regime_chain_ensemble():
    """10^5 exact paths of the shipped 2-regime chain, reused by the
    statistics tests: (paths from regime 0 over [0, 12], generator)."""
    gen = mflq.validate_generator([[-1.0, 1.0], [2.0, -2.0]])
    paths = [
        mflq.sample_regime_path(gen, 0, 12.0, np.random.default_rng((777, p)))
        for p in range(100_000)
    ]
    return gen, paths
