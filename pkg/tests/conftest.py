import logging
import time

import pytest

from xtalbench.corpus import generate_corpus
from xtalbench.materials import load_materials

logging.getLogger("xtalbench").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def materials_by_name():
    return {spec.name: spec for spec in load_materials()}


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Two materials x two radii x ten poses; fast shared tree."""
    root = tmp_path_factory.mktemp("corpus_small")
    return generate_corpus(root, materials=["Au", "ZnO"], radii=[0.7, 0.8])


@pytest.fixture(scope="session")
def full_corpus(tmp_path_factory):
    """The canonical 10 x 4 x 10 corpus; returns (index, build_seconds)."""
    root = tmp_path_factory.mktemp("corpus_full")
    start = time.perf_counter()
    index = generate_corpus(root)
    return index, time.perf_counter() - start
