import pytest
import os
import sys

# Set up the path first, before other imports
cwd = os.path.dirname(os.path.abspath(__file__))
sys.path.append(f"{cwd}/..")

os.environ["ENV"] = "pytest"

import rbsde_lab as rl

from tests.conftest_utils import setup_env

@pytest.fixture(autouse=True)
def lab_env(monkeypatch):
    """Isolate each test from RBSDE_* variables and cached settings"""
    setup_env(monkeypatch)
    rl.common.get_settings.cache_clear()
    yield
    rl.common.get_settings.cache_clear()

@pytest.fixture
def small_lattice():
    return rl.lattice.build_lattice(1.0, 4)

@pytest.fixture
def binding_problem():
    return rl.problem.scenario("binding-obstacle", {"kappa": 0.25}, steps=10)

@pytest.fixture
def tmp_csv(tmp_path):
    return str(tmp_path / "results.csv")
