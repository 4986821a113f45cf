import sys
from pathlib import Path

import pytest

from markscan.layout import bundled_template

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def kind_a():
    return bundled_template("kind_a")


@pytest.fixture(scope="session")
def kind_b():
    return bundled_template("kind_b")
