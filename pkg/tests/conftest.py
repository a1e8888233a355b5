from __future__ import annotations

import numpy as np
import pytest

from autogeo.builder import build_dataset
from autogeo.catalog import reference_catalog
from autogeo.config import Counts, GenConfig


@pytest.fixture(scope="session")
def catalog():
    return reference_catalog()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_build(tmp_path_factory):
    """A 10/20/20 dataset shared by read-only tests."""
    out = tmp_path_factory.mktemp("build")
    cfg = GenConfig(seed=11, counts=Counts(10, 20, 20), out=str(out))
    report = build_dataset(cfg)
    return cfg, report
