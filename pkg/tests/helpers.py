"""Sample builders shared by the test modules (usable inside hypothesis tests)."""
from typing import List, Sequence

import numpy as np

from harness.embedding_space import UNLABELED, GroundTruth, Sample, l2_normalize_rows


def make_sample(sample_id: int, embedding, kind: str = "id", index: int = 0,
                client: int = 0, split: str = UNLABELED) -> Sample:
    return Sample(sample_id, client, np.asarray(embedding, dtype=np.float64), GroundTruth(kind, index), split)


def random_pool(rng: np.random.Generator, n: int, dimension: int, num_classes: int,
                ood_fraction: float = 0.3, client: int = 0, first_id: int = 0) -> List[Sample]:
    """n unit-norm samples with random ID classes / OOD modes, ids shuffled."""
    points = l2_normalize_rows(rng.standard_normal((n, dimension)))
    is_ood = rng.random(n) < ood_fraction
    ids = rng.permutation(n) + first_id
    return [
        make_sample(int(ids[i]), points[i], "ood" if is_ood[i] else "id",
                    int(rng.integers(2 if is_ood[i] else num_classes)), client)
        for i in range(n)
    ]


def random_anchors(rng: np.random.Generator, num_classes: int, dimension: int) -> np.ndarray:
    return l2_normalize_rows(rng.standard_normal((num_classes + 1, dimension)))


def ids_of(samples: Sequence[Sample]) -> List[int]:
    return [s.sample_id for s in samples]
