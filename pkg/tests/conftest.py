import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from bankrisk_app.dataset import Dataset, FeatureSchema  # noqa: E402


def make_dataset(features, labels, codes=None) -> Dataset:
    matrix = np.asarray(features, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    schema = FeatureSchema.from_codes(codes or [f"x{index}" for index in range(matrix.shape[1])])
    return Dataset.from_arrays(schema, matrix, list(labels))


def gaussian_dataset(n_active: int, n_bankrupt: int, width: int, seed: int, shift: float = 1.5) -> Dataset:
    rng = np.random.default_rng(seed)
    labels = np.array([0] * n_active + [1] * n_bankrupt)
    features = rng.standard_normal((labels.size, width)) + shift * labels[:, np.newaxis]
    return make_dataset(features, labels)


class ConstantClassifier:
    kind = "constant"

    def __init__(self, label: int, width: int = 1) -> None:
        self.label = label
        self.schema_codes = tuple(f"x{index}" for index in range(width))
        self.converged = True

    def predict(self, features):
        return np.full(np.atleast_2d(features).shape[0], self.label, dtype=int)

    def predict_proba(self, features):
        return self.predict(features).astype(float)

    def to_dict(self):
        return {"label": self.label}


@pytest.fixture
def separable_dataset() -> Dataset:
    return gaussian_dataset(30, 30, 3, seed=11, shift=4.0)


@pytest.fixture
def overlapping_dataset() -> Dataset:
    return gaussian_dataset(40, 25, 4, seed=5, shift=1.0)
