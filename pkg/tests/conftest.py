import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from encx import bundled_model_path  # noqa: E402
from encx.bayes import normalize  # noqa: E402
from encx.model_format import load_model  # noqa: E402


@pytest.fixture(scope="session")
def toy_model():
    return load_model(bundled_model_path("toy.json"))


@pytest.fixture(scope="session")
def toy(toy_model):
    return normalize(toy_model)


@pytest.fixture(scope="session")
def toy_rades():
    return normalize(load_model(bundled_model_path("toy_rades.json")))


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance.summary_lines():
        terminalreporter.write_line(line)
