import os
from pathlib import Path

import numpy as np
import pytest

from lht.dataset import Dataset

ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = Path(os.environ.get("LHT_DATA_DIR", ROOT / "data"))


def blobs(n_per_class=20, k=2, m=3, spread=3.0, seed=0):
    """Well-separated Gaussian blobs; class c is centred at c * spread on every axis."""
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(c * spread, 1.0, size=(n_per_class, m)) for c in range(k)])
    y = np.repeat(np.arange(k), n_per_class)
    return Dataset.from_arrays(X, y, k)


@pytest.fixture
def toy():
    return blobs()


@pytest.fixture(scope="session")
def wine_path():
    return DATA_DIR / "wine.csv"
