import pytest

from sasvfuse.synthetic import generate, preset


@pytest.fixture(scope="session")
def easy_corpus():
    return generate(preset("easy"))
