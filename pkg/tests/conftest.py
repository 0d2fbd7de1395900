import glob
import os

import pytest
from hypothesis import HealthCheck, settings

from acokit import logic, routing

settings.register_profile(
    "suite",
    derandomize=True,
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

CORPUS = os.path.join(os.path.dirname(__file__), os.pardir, "corpus")


def corpus_path(*parts) -> str:
    return os.path.abspath(os.path.join(CORPUS, *parts))


@pytest.fixture(scope="session")
def ring3():
    return routing.load_instance(corpus_path("ring3.json"))


@pytest.fixture(scope="session")
def multi2():
    return routing.load_instance(corpus_path("multi2.json"))


@pytest.fixture(scope="session")
def single_arc():
    return routing.load_instance(corpus_path("single_arc.json"))


@pytest.fixture(scope="session")
def disagree_repaired():
    return routing.load_instance(corpus_path("disagree_repaired.json"))


def logic_corpus_paths():
    return sorted(glob.glob(corpus_path("logic", "*.pl")))


@pytest.fixture(scope="session")
def logic_corpus():
    return [(os.path.basename(p), logic.load_program(p))
            for p in logic_corpus_paths()]
