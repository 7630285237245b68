"""Tests for QP / AQR / purity / BMA and the gate test metrics, against brute-force recounts."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harness.embedding_space import GroundTruth
from harness.errors import (
    EmptyPoolError,
    EmptyQuerySetError,
    InvalidClassError,
    MissingStratumError,
    NoLabelsError,
    ZeroDenominatorError,
)
from harness.gate import GateContext, GateMode, predict_is_id
from harness.metrics import (
    QueryHistory,
    accumulated_query_recall,
    balanced_multiclass_accuracy,
    exploration_leakage,
    gate_test_metrics,
    macro_average,
    or_absent,
    pool_purity,
    query_precision,
)
from harness.prompt_engine import FrozenTextMixer
from helpers import make_sample, random_anchors, random_pool


def test_query_precision_recount():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        queries = random_pool(rng, int(rng.integers(1, 40)), 3, 4, ood_fraction=float(rng.random()))
        expected = len([q for q in queries if q.truth.kind == "id"]) / len(queries)
        assert query_precision(queries) == pytest.approx(expected, abs=1e-12)
        assert pool_purity(queries) == pytest.approx(expected, abs=1e-12)


def test_query_precision_accepts_id_truth_pairs():
    assert query_precision([(1, GroundTruth.id_class(0)), (2, GroundTruth.ood_mode(1))]) == 0.5


def test_undefined_metrics_are_absent():
    with pytest.raises(EmptyQuerySetError):
        query_precision([])
    with pytest.raises(EmptyPoolError):
        pool_purity([])
    with pytest.raises(EmptyPoolError):
        exploration_leakage([])
    assert or_absent(query_precision, []) is None
    assert or_absent(pool_purity, []) is None


def test_exploration_leakage():
    exploration = [make_sample(0, [1.0, 0.0]), make_sample(1, [0.0, 1.0], "ood"), make_sample(2, [1.0, 1.0], "ood")]
    assert exploration_leakage(exploration) == pytest.approx(1 / 3)


def _history_fixture(seed):
    rng = np.random.default_rng(seed)
    pool = random_pool(rng, int(rng.integers(5, 40)), 3, 3, ood_fraction=0.4)
    history = QueryHistory.from_pools({0: pool})
    remaining = list(pool)
    rounds = int(rng.integers(1, 6))
    for r in range(1, rounds + 1):
        take = int(rng.integers(0, len(remaining) + 1)) if remaining else 0
        idx = sorted(rng.choice(len(remaining), size=take, replace=False).tolist()) if take else []
        picked = [remaining[i] for i in idx]
        remaining = [s for i, s in enumerate(remaining) if i not in set(idx)]
        history.record(r, 0, picked)
    return pool, history, rounds


def test_aqr_recount_and_monotone():
    for seed in range(100):
        pool, history, rounds = _history_fixture(seed)
        initial_id = {s.sample_id for s in pool if s.truth.kind == "id"}
        if not initial_id:
            with pytest.raises(ZeroDenominatorError):
                accumulated_query_recall(history, 0, rounds)
            continue
        values = []
        for r in range(1, rounds + 1):
            hit = {sid for rr in range(1, r + 1) for sid, _ in history.queries(rr, 0)} & initial_id
            expected = len(hit) / len(initial_id)
            values.append(accumulated_query_recall(history, 0, r))
            assert values[-1] == pytest.approx(expected, abs=1e-12)
        assert values == sorted(values)
        assert 0.0 <= values[-1] <= 1.0


def test_history_rejects_gaps_and_repeats():
    s = make_sample(0, [1.0, 0.0])
    history = QueryHistory.from_pools({0: [s]})
    with pytest.raises(ValueError):
        history.record(2, 0, [s])
    history.record(1, 0, [s])
    with pytest.raises(ValueError):
        history.record(2, 0, [s])
    with pytest.raises(KeyError):
        accumulated_query_recall(history, 0, 2)


def test_bma_examples():
    assert balanced_multiclass_accuracy([0, 1, 1, 1], [0, 0, 1, 1]) == pytest.approx(0.75)
    # OOD slot predictions count as misses; absent classes are skipped
    assert balanced_multiclass_accuracy([0, 3], [0, 0], num_classes=3) == pytest.approx(0.5)
    with pytest.raises(NoLabelsError):
        balanced_multiclass_accuracy([], [])
    with pytest.raises(InvalidClassError):
        balanced_multiclass_accuracy([0], [5], num_classes=3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 5)), min_size=1, max_size=60))
def test_bma_matches_brute_force(pairs):
    labels = [y for y, _ in pairs]
    preds = [p for _, p in pairs]
    recalls = []
    for c in sorted(set(labels)):
        members = [p for y, p in pairs if y == c]
        recalls.append(sum(p == c for p in members) / len(members))
    assert balanced_multiclass_accuracy(preds, labels) == pytest.approx(np.mean(recalls), abs=1e-12)


def _test_split(rng, n=40):
    pool = random_pool(rng, n, 5, 3, ood_fraction=0.4)
    pool.append(make_sample(1000, rng.standard_normal(5), "ood", 0))
    pool.append(make_sample(1001, rng.standard_normal(5), "id", 0))
    return pool


def test_gate_metrics_for_baselines(rng):
    test = _test_split(rng)
    cold = gate_test_metrics(test, GateMode.coldstart(), GateContext(client=0))
    assert cold["ood_recall"] == 0.0
    assert cold["id_bma"] is None
    true_id = np.mean([s.truth.is_id for s in test])
    assert cold["binary_accuracy"] == pytest.approx(true_id)
    oracle = gate_test_metrics(test, GateMode.upper_bound(), GateContext(client=0))
    assert oracle["binary_accuracy"] == 1.0 and oracle["ood_recall"] == 1.0


def test_gate_metrics_recount_for_static_gate(rng):
    test = _test_split(rng)
    mode = GateMode.static()
    ctx = GateContext(client=0, mixer=FrozenTextMixer.identity(random_anchors(rng, 3, 5)))
    metrics = gate_test_metrics(test, mode, ctx)
    pred, slots = predict_is_id(test, mode, ctx)
    ood = [i for i, s in enumerate(test) if not s.truth.is_id]
    assert metrics["ood_recall"] == pytest.approx(sum(not pred[i] for i in ood) / len(ood))
    assert 0.0 <= metrics["id_bma"] <= 1.0


def test_gate_metrics_need_both_strata(rng):
    only_id = [make_sample(i, rng.standard_normal(4)) for i in range(5)]
    with pytest.raises(MissingStratumError):
        gate_test_metrics(only_id, GateMode.coldstart(), GateContext(client=0))
    assert or_absent(gate_test_metrics, only_id, GateMode.coldstart(), GateContext(client=0)) is None


def test_macro_average_skips_absent():
    assert macro_average([0.5, None, 1.0]) == pytest.approx(0.75)
    assert macro_average([None, None]) is None
