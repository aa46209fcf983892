"""
Pytest configuration and shared fixtures for TWD Tools tests.

This file provides common test fixtures and configuration
for all test modules in the project.
"""

import os
import sys
from pathlib import Path
from unittest.mock import patch

import pytest
import yaml

sys.path.insert(0, str(Path(__file__).parent.parent))

from twd_tools.core.rng import RandomSource
from twd_tools.core.synthetic import GenConfig, generate
from twd_tools.core.types import Dataset, Scene

from tests.factories import random_scene


@pytest.fixture(scope="session")
def project_root():
    """Get the project root directory."""
    return Path(__file__).parent.parent


@pytest.fixture(scope="session")
def test_fixtures_dir(project_root):
    """Get the test fixtures directory."""
    return project_root / "tests" / "fixtures"


@pytest.fixture(scope="session")
def reference_values(test_fixtures_dir):
    """Load published metric pairs and golden vectors from fixtures."""
    with open(test_fixtures_dir / "reference_values.yaml", 'r') as f:
        return yaml.safe_load(f)


@pytest.fixture
def tiny_config_file(reference_values, tmp_path):
    """Write the tiny experiment config to a temporary flat key = value file."""
    path = tmp_path / "tiny.cfg"
    path.write_text(reference_values['tiny_experiment'], encoding='utf-8')
    return path


@pytest.fixture
def make_scene():
    """Factory for random scenes: make_scene(seed, num_agents, n, m)."""
    def factory(seed: int = 0, num_agents: int = 2, n: int = 8, m: int = 12) -> Scene:
        return random_scene(RandomSource(seed), num_agents, n, m)
    return factory


@pytest.fixture
def make_dataset():
    """Factory for random datasets: make_dataset(count, seed, n, m, max_agents)."""
    def factory(count: int = 5, seed: int = 0, n: int = 8, m: int = 12, max_agents: int = 3) -> Dataset:
        src = RandomSource(seed)
        scenes = [random_scene(src, src.uniform_index(max_agents), n, m) for _ in range(count)]
        return Dataset(tuple(scenes))
    return factory


@pytest.fixture(scope="session")
def small_synthetic():
    """A small mixed-motion synthetic dataset."""
    return generate(GenConfig(scene_count=40, n_obs=8, m_pred=12, seed=11))


@pytest.fixture
def clean_environment():
    """Provide a clean environment with no TWD variables set."""
    with patch.dict(os.environ, {}, clear=True):
        yield


# Test markers for categorizing tests
def pytest_configure(config):
    """Configure pytest markers."""
    config.addinivalue_line(
        "markers", "unit: mark test as a unit test"
    )
    config.addinivalue_line(
        "markers", "integration: mark test as an integration test"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as slow running"
    )


# Skip integration tests by default unless explicitly requested
def pytest_collection_modifyitems(config, items):
    """Modify test collection to handle markers."""
    if config.getoption("--integration"):
        # Don't skip anything if --integration is specified
        return

    skip_integration = pytest.mark.skip(reason="need --integration option to run")
    for item in items:
        if "integration" in item.keywords:
            item.add_marker(skip_integration)


def pytest_addoption(parser):
    """Add custom command line options."""
    parser.addoption(
        "--integration",
        action="store_true",
        default=False,
        help="run integration tests"
    )
