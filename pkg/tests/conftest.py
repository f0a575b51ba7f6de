import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _factories import banknote_like, glass_like, wine_like  # noqa: E402

from conclusive_forest import TrainConfig, train  # noqa: E402


@pytest.fixture(scope="session")
def banknote_data():
    return banknote_like(seed=11, n=600)


@pytest.fixture(scope="session")
def banknote_model(banknote_data):
    X, y = banknote_data
    return train(
        X, y, "binary", TrainConfig(n_estimators=35, max_depth=10, seed=5)
    )


@pytest.fixture(scope="session")
def glass_data():
    return glass_like(seed=7)


@pytest.fixture(scope="session")
def glass_model(glass_data):
    X, y = glass_data
    return train(
        X, y, "multiclass", TrainConfig(n_estimators=25, max_depth=12, seed=3)
    )


@pytest.fixture(scope="session")
def wine_data():
    return wine_like(seed=13, n=800)


@pytest.fixture(scope="session")
def wine_model(wine_data):
    X, y = wine_data
    return train(
        X, y, "regression", TrainConfig(n_estimators=30, max_depth=6, seed=9)
    )
