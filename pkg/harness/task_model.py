"""
Task model: the C-class linear probe each client trains on its labeled ID
embeddings, plus FedAvg aggregation.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import (
    DimensionMismatchError,
    InvalidClassError,
    ShapeMismatchError,
    ZeroWeightSumError,
)
from .prompt_engine import Batch, as_batch_arrays

logger = logging.getLogger(__name__)


@dataclass
class LinearProbe:
    weights: np.ndarray   # (C, D)
    biases: np.ndarray    # (C,)
    trained: bool = False

    @classmethod
    def zeros(cls, num_classes: int, dimension: int) -> "LinearProbe":
        return cls(np.zeros((num_classes, dimension)), np.zeros(num_classes), False)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dimension(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "LinearProbe":
        return LinearProbe(self.weights.copy(), self.biases.copy(), self.trained)


@dataclass
class ProbeHyper:
    epochs: int = 15
    batch_size: int = 32
    lr: float = 0.0005


def _logits(model: LinearProbe, z) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[1] != model.dimension:
        raise DimensionMismatchError(f"probe expects D={model.dimension}, got {z.shape[1]}")
    return z @ model.weights.T + model.biases


def predict_probs(model: LinearProbe, z) -> np.ndarray:
    """softmax(Wz + b) for one embedding or an (n, D) batch."""
    probs = softmax(_logits(model, z), axis=1)
    return probs[0] if np.ndim(z) == 1 else probs


def probe_loss(model: LinearProbe, z: np.ndarray, labels: np.ndarray) -> float:
    logp = log_softmax(_logits(model, z), axis=1)
    return float(-logp[np.arange(len(labels)), labels].mean())


def train_local(
    model: LinearProbe,
    labeled: Batch,
    hyper: ProbeHyper,
    rng: np.random.Generator,
) -> Tuple[LinearProbe, List[float]]:
    """
    Plain mini-batch SGD on cross-entropy.

    Returns:
        (new probe, mean loss per epoch)
    """
    z, labels = as_batch_arrays(labeled)
    if np.any(labels < 0) or np.any(labels >= model.num_classes):
        raise InvalidClassError(f"probe labels must lie in 0..{model.num_classes - 1}")
    if z.shape[1] != model.dimension:
        raise DimensionMismatchError(f"probe expects D={model.dimension}, got {z.shape[1]}")
    model = model.copy()
    if hyper.epochs <= 0:
        return model, []

    n = len(labels)
    trace = []
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            zb, yb = z[idx], labels[idx]
            logp = log_softmax(zb @ model.weights.T + model.biases, axis=1)
            epoch_loss -= logp[np.arange(len(idx)), yb].sum()
            dlogits = np.exp(logp)
            dlogits[np.arange(len(idx)), yb] -= 1.0
            dlogits /= len(idx)
            model.weights -= hyper.lr * (dlogits.T @ zb)
            model.biases -= hyper.lr * dlogits.sum(axis=0)
        trace.append(epoch_loss / n)
    model.trained = True
    return model, trace


# ----------------------------------------------------------------------
# Aggregation
# ----------------------------------------------------------------------

def weighted_mean(arrays: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """
    Coordinate-wise mean with weights normalized to sum 1.

    Computed as a_ref + sum_i w_i (a_i - a_ref) around the first positively
    weighted array, so identical inputs and one-hot weights return an exact copy.
    """
    if not arrays:
        raise ZeroWeightSumError("nothing to aggregate")
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != len(arrays):
        raise ShapeMismatchError(f"{len(arrays)} arrays but {len(w)} weights")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("aggregation weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise ZeroWeightSumError("aggregation weights sum to zero")
    shape = arrays[0].shape
    for a in arrays:
        if a.shape != shape:
            raise ShapeMismatchError(f"cannot aggregate shapes {shape} and {a.shape}")
    w = w / total
    ref = arrays[int(np.flatnonzero(w > 0)[0])]
    out = ref.astype(np.float64, copy=True)
    for a, wi in zip(arrays, w):
        if wi > 0 and a is not ref:
            out += wi * (a - ref)
    return out


def fedavg_linear(models: Sequence[LinearProbe], weights: Sequence[float]) -> LinearProbe:
    if not models:
        raise ZeroWeightSumError("no probes to aggregate")
    return LinearProbe(
        weighted_mean([m.weights for m in models], weights),
        weighted_mean([m.biases for m in models], weights),
        trained=any(m.trained for m, w in zip(models, weights) if w > 0),
    )


# ----------------------------------------------------------------------
# Checkpoints
# ----------------------------------------------------------------------

def save_probe(model: LinearProbe, path) -> Path:
    path = Path(path)
    with open(path, 'wb') as f:
        np.savez(f, weights=model.weights, biases=model.biases, trained=np.array(model.trained))
    return path


def load_probe(path) -> LinearProbe:
    with np.load(path, allow_pickle=False) as data:
        weights, biases = data['weights'].copy(), data['biases'].copy()
        if biases.shape != (weights.shape[0],):
            raise ShapeMismatchError(f"probe checkpoint {path}: biases {biases.shape} vs weights {weights.shape}")
        return LinearProbe(weights, biases, bool(data['trained']))

