"""Tests for the random, entropy and k-means acquisition strategies."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harness.acquisition import (
    KMeansStrategy,
    StrategyFactory,
    select_entropy,
    select_kmeans,
    select_random,
)
from harness.errors import UntrainedModelError
from harness.task_model import LinearProbe
from helpers import ids_of, make_sample, random_pool


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 30), budget=st.integers(0, 40))
def test_random_selection_properties(seed, n, budget):
    pool = random_pool(np.random.default_rng(seed), n, 4, 3)
    picked = select_random(pool, budget, np.random.default_rng(seed))
    assert len(picked) == min(budget, n)
    assert ids_of(picked) == sorted(set(ids_of(picked)))
    assert set(ids_of(picked)) <= set(ids_of(pool))
    again = select_random(pool, budget, np.random.default_rng(seed))
    assert ids_of(again) == ids_of(picked)


def test_entropy_requires_trained_probe(rng):
    pool = random_pool(rng, 5, 4, 3)
    with pytest.raises(UntrainedModelError):
        select_entropy(pool, LinearProbe.zeros(3, 4), 2)
    with pytest.raises(UntrainedModelError):
        StrategyFactory.create("entropy").select(pool, [], None, rng, 2)


def test_entropy_ties_break_by_id(rng):
    pool = random_pool(rng, 10, 4, 3)
    flat = LinearProbe(np.zeros((3, 4)), np.zeros(3), trained=True)
    assert ids_of(select_entropy(pool, flat, 4)) == [0, 1, 2, 3]


def test_entropy_picks_the_uncertain_sample():
    probe = LinearProbe(5.0 * np.eye(2), np.zeros(2), trained=True)
    pool = [
        make_sample(0, [1.0, 0.0]),
        make_sample(1, [0.7, 0.7]),
        make_sample(2, [0.0, 1.0], index=1),
    ]
    assert ids_of(select_entropy(pool, probe, 1)) == [1]
    assert ids_of(select_entropy(pool, probe, 5)) == [1, 0, 2]


def _three_clusters(rng):
    centers = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    pool, sid = [], 0
    for c, center in enumerate(centers):
        for _ in range(5):
            pool.append(make_sample(sid, center + 0.01 * rng.standard_normal(3), index=c))
            sid += 1
    return pool


def test_kmeans_covers_separated_clusters(rng):
    pool = _three_clusters(rng)
    picked = select_kmeans(pool, 3, np.random.default_rng(0))
    assert sorted(s.truth.index for s in picked) == [0, 1, 2]
    again = select_kmeans(pool, 3, np.random.default_rng(0))
    assert ids_of(again) == ids_of(picked)


def test_kmeans_budget_edges(rng):
    pool = _three_clusters(rng)
    assert select_kmeans(pool, 0, rng) == []
    assert ids_of(select_kmeans(pool, 50, rng)) == list(range(15))
    assert select_kmeans([], 3, rng) == []


def test_kmeans_clamps_to_distinct_embeddings():
    pool = [make_sample(i, [1.0, 0.0] if i % 2 else [0.0, 1.0]) for i in range(4)]
    picked = select_kmeans(pool, 3, np.random.default_rng(0))
    assert len(picked) == 2
    assert ids_of(picked) == [0, 1]


def test_strategy_factory():
    assert StrategyFactory.create("random").name == "random"
    kmeans = StrategyFactory.create("kmeans", {"kmeans_max_iters": 7})
    assert isinstance(kmeans, KMeansStrategy) and kmeans.max_iters == 7
    with pytest.raises(ValueError):
        StrategyFactory.create("coreset")
