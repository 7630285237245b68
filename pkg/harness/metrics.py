"""
Active-learning and gate-quality metrics.

QP | AQR | Purity | BMA, plus the gate's test-set binary accuracy, OOD recall
and ID BMA. Every metric is computed from raw sample ids / ground truth so
it can be recounted from the provenance CSVs.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from sklearn.metrics import recall_score

from .embedding_space import GroundTruth, Sample
from .errors import (
    EmptyPoolError,
    EmptyQuerySetError,
    InvalidClassError,
    MissingStratumError,
    NoLabelsError,
    ZeroDenominatorError,
)
from .gate import GateContext, GateMode, predict_is_id

logger = logging.getLogger(__name__)

Queried = Union[Sample, Tuple[int, GroundTruth]]

# metric errors that mean "undefined", written as empty cells
ABSENT_ERRORS = (EmptyQuerySetError, EmptyPoolError, MissingStratumError, NoLabelsError)


def _truth(item: Queried) -> GroundTruth:
    return item.truth if isinstance(item, Sample) else item[1]


def _sample_id(item: Queried) -> int:
    return item.sample_id if isinstance(item, Sample) else item[0]


@dataclass
class QueryHistory:
    """Per-round queried ids with their ground truth, per client."""
    initial_id_count: Dict[int, int]
    rounds: Dict[int, Dict[int, List[Tuple[int, GroundTruth]]]] = field(default_factory=dict)
    _seen: Set[int] = field(default_factory=set, repr=False)

    @classmethod
    def from_pools(cls, pools: Dict[int, Sequence[Sample]]) -> "QueryHistory":
        return cls({k: sum(s.truth.is_id for s in pool) for k, pool in pools.items()})

    @property
    def last_round(self) -> int:
        return max(self.rounds, default=0)

    def record(self, round_idx: int, client: int, queried: Sequence[Queried]):
        if round_idx not in self.rounds and round_idx != self.last_round + 1:
            raise ValueError(f"rounds must be contiguous from 1; got {round_idx} after {self.last_round}")
        entries = [(_sample_id(q), _truth(q)) for q in queried]
        repeated = [sid for sid, _ in entries if sid in self._seen]
        if repeated or len({sid for sid, _ in entries}) != len(entries):
            raise ValueError(f"client {client} round {round_idx}: sample ids queried twice {repeated}")
        self._seen.update(sid for sid, _ in entries)
        self.rounds.setdefault(round_idx, {}).setdefault(client, []).extend(entries)

    def queries(self, round_idx: int, client: int) -> List[Tuple[int, GroundTruth]]:
        return list(self.rounds.get(round_idx, {}).get(client, []))


# ----------------------------------------------------------------------
# Active-learning metrics
# ----------------------------------------------------------------------

def query_precision(queries: Sequence[Queried]) -> float:
    """Fraction of true-ID samples in one round's query set."""
    if not queries:
        raise EmptyQuerySetError("query precision of an empty query set is undefined")
    return sum(_truth(q).is_id for q in queries) / len(queries)


def accumulated_query_recall(history: QueryHistory, client: int, up_to: int) -> float:
    """True-ID queried in rounds 1..up_to over the client's initial unlabeled ID count."""
    if up_to not in history.rounds:
        raise KeyError(f"round {up_to} not recorded")
    denom = history.initial_id_count.get(client, 0)
    if denom == 0:
        raise ZeroDenominatorError(f"client {client} started with no ID samples in its pool")
    hits = sum(
        t.is_id
        for r in range(1, up_to + 1)
        for _, t in history.queries(r, client)
    )
    return hits / denom


def pool_purity(gated: Sequence[Sample]) -> float:
    if not gated:
        raise EmptyPoolError("purity of an empty gated pool is undefined")
    return sum(s.truth.is_id for s in gated) / len(gated)


def exploration_leakage(exploration: Sequence[Sample]) -> float:
    """Fraction of true-ID samples the gate set aside."""
    if not exploration:
        raise EmptyPoolError("exploration pool is empty")
    return sum(s.truth.is_id for s in exploration) / len(exploration)


def balanced_multiclass_accuracy(predictions, labels, num_classes: Optional[int] = None) -> float:
    """
    Mean per-class recall over the classes present in `labels`.

    Predictions outside the label set (e.g. the OOD slot) count as misses.
    """
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if len(labels) == 0:
        raise NoLabelsError("balanced accuracy needs at least one label")
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions for {len(labels)} labels")
    if num_classes is not None and (labels.min() < 0 or labels.max() >= num_classes):
        raise InvalidClassError(f"labels must lie in 0..{num_classes - 1}")
    present = np.unique(labels)
    return float(recall_score(labels, predictions, labels=present, average='macro', zero_division=0))


# ----------------------------------------------------------------------
# Gate test metrics
# ----------------------------------------------------------------------

def binary_accuracy(pred_is_id: np.ndarray, true_is_id: np.ndarray) -> float:
    if len(true_is_id) == 0:
        raise MissingStratumError("empty test set")
    return float(np.mean(np.asarray(pred_is_id) == np.asarray(true_is_id)))


def ood_recall(pred_is_id: np.ndarray, true_is_id: np.ndarray) -> float:
    ood = ~np.asarray(true_is_id, dtype=bool)
    if not ood.any():
        raise MissingStratumError("no OOD samples in the test set")
    return float(np.mean(~np.asarray(pred_is_id, dtype=bool)[ood]))


def gate_test_metrics(test: Sequence[Sample], mode: GateMode, ctx: GateContext) -> Dict[str, Optional[float]]:
    """
    Run the gate over a labeled test set.

    Returns:
        {'binary_accuracy', 'ood_recall', 'id_bma'}; id_bma is None for gates
        that never predict an ID class (coldstart, upper bound)
    """
    true_is_id = np.array([s.truth.is_id for s in test], dtype=bool)
    if not true_is_id.any() or true_is_id.all():
        raise MissingStratumError(
            f"gate test metrics need ID and OOD samples; got {int(true_is_id.sum())} ID of {len(test)}"
        )
    pred_is_id, slots = predict_is_id(list(test), mode, ctx)
    id_bma = None
    if slots is not None:
        id_labels = np.array([s.truth.index for s in test if s.truth.is_id])
        id_bma = balanced_multiclass_accuracy(slots[true_is_id], id_labels)
    return {
        'binary_accuracy': binary_accuracy(pred_is_id, true_is_id),
        'ood_recall': ood_recall(pred_is_id, true_is_id),
        'id_bma': id_bma,
    }


def or_absent(fn: Callable[..., float], *args, **kwargs) -> Optional[float]:
    """Evaluate a metric, mapping undefined cases to None."""
    try:
        return fn(*args, **kwargs)
    except ABSENT_ERRORS:
        return None
    except ZeroDenominatorError as e:
        logger.warning(f"{fn.__name__} undefined: {e}")
        return None


def macro_average(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None

