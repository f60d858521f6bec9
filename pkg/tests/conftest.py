import tempfile
from pathlib import Path

import hypothesis
import pytest

hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile("ci")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end fitting runs (deselect with -m 'not slow')")


@pytest.fixture
def tmpdir_repo():
    with tempfile.TemporaryDirectory() as d:
        yield Path(d)
