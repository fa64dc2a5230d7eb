import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from imolab.store import CacheModel, EmbeddingSet, TextClassifier, l2_normalize


def class_names(n):
    return tuple(f"class_{c:03d}" for c in range(n))


def random_embedding_set(rng, rows, dim, num_classes, labels=None):
    """Random unit-row set; labels cycle through the classes unless given."""
    vectors = l2_normalize(rng.standard_normal((rows, dim)))
    if labels is None:
        labels = np.arange(rows) % num_classes
    return EmbeddingSet(vectors=vectors, labels=np.asarray(labels),
                        class_names=class_names(num_classes), normalized=True)


def random_cache(rng, num_classes, shots, dim):
    keys = l2_normalize(rng.standard_normal((num_classes * shots, dim)))
    values = np.zeros((num_classes * shots, num_classes), dtype=np.float32)
    labels = np.repeat(np.arange(num_classes), shots)
    values[np.arange(len(labels)), labels] = 1.0
    return CacheModel(keys=keys, values=values, num_classes=num_classes,
                      shots=shots)


def random_classifier(rng, num_classes, dim):
    return TextClassifier(weights=l2_normalize(rng.standard_normal((num_classes, dim))),
                          class_names=class_names(num_classes))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
