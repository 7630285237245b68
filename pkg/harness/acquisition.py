"""
Acquisition strategies that pick each round's queries from the gated pool.
"""
import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.stats import entropy
from sklearn.cluster import KMeans
from sklearn.metrics import pairwise_distances

from .embedding_space import Sample, sort_by_id, stack_embeddings
from .errors import UntrainedModelError
from .task_model import LinearProbe, predict_probs

logger = logging.getLogger(__name__)


def select_random(pool: List[Sample], budget: int, rng: np.random.Generator) -> List[Sample]:
    """min(B, |pool|) samples uniformly without replacement, returned in sample_id order."""
    pool = sort_by_id(pool)
    if budget <= 0:
        return []
    if budget >= len(pool):
        return pool
    picked = np.sort(rng.choice(len(pool), size=budget, replace=False))
    return [pool[i] for i in picked]


def predictive_entropy(model: LinearProbe, samples: List[Sample]) -> np.ndarray:
    if not samples:
        return np.zeros(0)
    return entropy(predict_probs(model, stack_embeddings(samples)), axis=1)


def select_entropy(pool: List[Sample], model: LinearProbe, budget: int) -> List[Sample]:
    """Top-B by predictive entropy of the probe; ties broken by ascending sample_id."""
    if not model.trained:
        raise UntrainedModelError("entropy acquisition needs a trained probe")
    pool = sort_by_id(pool)
    if budget <= 0 or not pool:
        return []
    scores = predictive_entropy(model, pool)
    ids = np.array([s.sample_id for s in pool])
    order = np.lexsort((ids, -scores))
    return [pool[i] for i in order[:budget]]


def select_kmeans(
    pool: List[Sample],
    budget: int,
    rng: np.random.Generator,
    max_iters: int = 25,
) -> List[Sample]:
    """
    One representative per k-means cluster: the member nearest its centroid.

    k = min(B, |pool|, distinct embeddings); k-means++ init seeded from rng,
    Lloyd iterations capped at max_iters.
    """
    pool = sort_by_id(pool)
    if budget <= 0 or not pool:
        return []
    if budget >= len(pool):
        return pool

    x = stack_embeddings(pool)
    distinct = len(np.unique(x, axis=0))
    k = min(budget, distinct)
    if k < budget:
        logger.warning(f"k-means: only {distinct} distinct embeddings, clamping k from {budget} to {k}")

    km = KMeans(
        n_clusters=k,
        init='k-means++',
        n_init=1,
        max_iter=max_iters,
        algorithm='lloyd',
        random_state=int(rng.integers(2**31 - 1)),
    ).fit(x)
    dist = pairwise_distances(x, km.cluster_centers_)

    chosen = set()
    for j in range(k):
        members = np.flatnonzero(km.labels_ == j)
        if len(members) == 0:
            # nearest unchosen point overall
            members = np.array([i for i in range(len(pool)) if i not in chosen])
        # pool is in sample_id order, so argmin's first hit is the lowest id
        chosen.add(int(members[np.argmin(dist[members, j])]))
    return [pool[i] for i in sorted(chosen)]


# ----------------------------------------------------------------------
# Strategy objects
# ----------------------------------------------------------------------

class BaseStrategy(ABC):
    """Common interface: (gated pool, labeled set, task model, rng, budget) -> queries."""

    name = 'base'

    @abstractmethod
    def select(
        self,
        gated: List[Sample],
        labeled: List[Sample],
        model: Optional[LinearProbe],
        rng: np.random.Generator,
        budget: int,
    ) -> List[Sample]:
        pass


class RandomStrategy(BaseStrategy):
    name = 'random'

    def select(self, gated, labeled, model, rng, budget):
        return select_random(gated, budget, rng)


class EntropyStrategy(BaseStrategy):
    name = 'entropy'

    def select(self, gated, labeled, model, rng, budget):
        if model is None:
            raise UntrainedModelError("entropy acquisition needs a task model")
        return select_entropy(gated, model, budget)


class KMeansStrategy(BaseStrategy):
    name = 'kmeans'

    def __init__(self, max_iters: int = 25):
        if max_iters < 1:
            raise ValueError(f"kmeans max_iters must be >= 1, got {max_iters}")
        self.max_iters = max_iters

    def select(self, gated, labeled, model, rng, budget):
        return select_kmeans(gated, budget, rng, self.max_iters)


class StrategyFactory:
    """Build strategies from their config names."""

    STRATEGY_MAP = {
        'random': RandomStrategy,
        'entropy': EntropyStrategy,
        'kmeans': KMeansStrategy,
    }

    @staticmethod
    def create(name: str, options: Dict[str, Any] = None) -> BaseStrategy:
        strategy_class = StrategyFactory.STRATEGY_MAP.get(name)
        if not strategy_class:
            raise ValueError(f"Unsupported strategy: {name}")
        options = options or {}
        if strategy_class is KMeansStrategy:
            return KMeansStrategy(max_iters=options.get('kmeans_max_iters', 25))
        return strategy_class()
