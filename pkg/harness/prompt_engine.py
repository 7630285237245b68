"""
Prompt engine: class-specific learnable context tokens (global + local halves),
the frozen text mixer that stands in for the text encoder, the cosine/softmax
head, the cross-entropy prompt loss with analytic gradients, and SGD with
heavy-ball momentum.

Slots are 0..C-1 for the ID classes and C for the single OOD slot.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.special import log_softmax, softmax

from .embedding_space import NORM_EPS, l2_normalize_rows
from .errors import (
    EmptyBatchError,
    InvalidLabelError,
    InvalidShapeError,
    NonPositiveTemperatureError,
    ShapeMismatchError,
    ZeroNormError,
)

logger = logging.getLogger(__name__)

Batch = Union[Tuple[np.ndarray, np.ndarray], Sequence[Tuple[np.ndarray, int]]]


# ----------------------------------------------------------------------
# Parameters
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class PromptVariant:
    """How each class context splits into global (federated) and local (private) rows."""
    kind: str
    global_tokens: int
    local_tokens: int

    def __post_init__(self):
        g, l = self.global_tokens, self.local_tokens
        valid = {
            'mixed': g >= 1 and l >= 1,
            'global': g >= 1 and l == 0,
            'local': g == 0 and l >= 1,
        }
        if self.kind not in valid:
            raise InvalidShapeError(f"unknown prompt variant {self.kind!r}")
        if not valid[self.kind]:
            raise InvalidShapeError(f"invalid token counts for {self.kind}: global={g} local={l}")

    @classmethod
    def mixed(cls, global_tokens: int = 8, local_tokens: int = 8) -> "PromptVariant":
        return cls('mixed', global_tokens, local_tokens)

    @classmethod
    def global_only(cls, tokens: int = 16) -> "PromptVariant":
        return cls('global', tokens, 0)

    @classmethod
    def local_only(cls, tokens: int = 16) -> "PromptVariant":
        return cls('local', 0, tokens)

    @property
    def context_length(self) -> int:
        return self.global_tokens + self.local_tokens

    @property
    def label(self) -> str:
        """Short tag used in reports, e.g. '8G-8L'."""
        return f"{self.global_tokens}G-{self.local_tokens}L"


@dataclass
class PromptBank:
    """
    global_tokens: (C+1, d_g, D), the federated half (phi^g).
    local_tokens:  {client: (C+1, d_l, D)}, private halves (phi^k). A client's
                   working bank holds only its own entry; the server's holds none.
    """
    variant: PromptVariant
    global_tokens: np.ndarray
    local_tokens: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def num_slots(self) -> int:
        return self.global_tokens.shape[0]

    @property
    def num_classes(self) -> int:
        return self.num_slots - 1

    @property
    def dimension(self) -> int:
        return self.global_tokens.shape[2]

    def copy(self) -> "PromptBank":
        return PromptBank(
            self.variant,
            self.global_tokens.copy(),
            {k: v.copy() for k, v in self.local_tokens.items()},
        )

    def for_client(self, client: int) -> "PromptBank":
        """Copy holding the global tokens plus only this client's local tokens."""
        local = {client: self.local_tokens[client].copy()} if client in self.local_tokens else {}
        return PromptBank(self.variant, self.global_tokens.copy(), local)

    def local_for(self, client: int) -> np.ndarray:
        if client in self.local_tokens:
            return self.local_tokens[client]
        if self.variant.local_tokens == 0:
            return np.zeros((self.num_slots, 0, self.dimension))
        raise InvalidShapeError(f"bank holds no local tokens for client {client}")

    def context(self, client: int) -> np.ndarray:
        """Concatenated context [p^g_c; p^k_c] for every slot: (C+1, d_g+d_l, D)."""
        return np.concatenate([self.global_tokens, self.local_for(client)], axis=1)


def init_prompt_bank(
    variant: PromptVariant,
    num_classes: int,
    dimension: int,
    seed: int,
    num_clients: int = 1,
    init_std: float = 0.02,
) -> PromptBank:
    """Gaussian(0, init_std) tokens for C+1 slots; local tokens for clients 0..num_clients-1."""
    if num_classes < 2 or dimension < 2 or num_clients < 1:
        raise InvalidShapeError(
            f"need C>=2, D>=2, K>=1; got C={num_classes} D={dimension} K={num_clients}"
        )
    rng = np.random.default_rng(seed)
    slots = num_classes + 1
    global_tokens = rng.normal(0.0, init_std, (slots, variant.global_tokens, dimension))
    local_tokens = {
        k: rng.normal(0.0, init_std, (slots, variant.local_tokens, dimension))
        for k in range(num_clients)
    }
    return PromptBank(variant, global_tokens, local_tokens)


@dataclass(frozen=True, eq=False)
class FrozenTextMixer:
    """Fixed D x D mixing matrix plus the C+1 unit-norm template anchors."""
    mix_matrix: np.ndarray
    anchors: np.ndarray

    def __post_init__(self):
        d = self.anchors.shape[1]
        if self.mix_matrix.shape != (d, d):
            raise InvalidShapeError(f"mix_matrix {self.mix_matrix.shape} does not match D={d}")
        if not np.allclose(np.linalg.norm(self.anchors, axis=1), 1.0, atol=1e-9):
            raise InvalidShapeError("template anchors must be unit-norm")
        for name in ('mix_matrix', 'anchors'):
            frozen = np.array(getattr(self, name), dtype=np.float64)
            frozen.setflags(write=False)
            object.__setattr__(self, name, frozen)

    @classmethod
    def seeded(cls, anchors: np.ndarray, seed: int) -> "FrozenTextMixer":
        """Random Gaussian mixer rescaled to spectral norm 1."""
        d = anchors.shape[1]
        g = np.random.default_rng(seed).standard_normal((d, d))
        return cls(g / np.linalg.norm(g, 2), anchors)

    @classmethod
    def identity(cls, anchors: np.ndarray) -> "FrozenTextMixer":
        return cls(np.eye(anchors.shape[1]), anchors)


# ----------------------------------------------------------------------
# Forward pass
# ----------------------------------------------------------------------

def _pre_normalized(bank: PromptBank, mixer: FrozenTextMixer, client: int):
    if bank.num_slots != mixer.anchors.shape[0] or bank.dimension != mixer.anchors.shape[1]:
        raise ShapeMismatchError(
            f"bank has {bank.num_slots}x{bank.dimension}, mixer anchors {mixer.anchors.shape}"
        )
    u = bank.context(client).mean(axis=1)
    v = u @ mixer.mix_matrix.T + mixer.anchors
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms < NORM_EPS):
        raise ZeroNormError(f"prompted text embedding degenerated for slot {int(np.argmin(norms))}")
    return v, norms


def encode_all(bank: PromptBank, mixer: FrozenTextMixer, client: int) -> np.ndarray:
    """Prompted text embeddings t^k_c for every slot: (C+1, D), unit rows."""
    v, norms = _pre_normalized(bank, mixer, client)
    return v / norms[:, None]


def encode_class(bank: PromptBank, mixer: FrozenTextMixer, client: int, c: int) -> np.ndarray:
    """t^k_c = normalize(M . mean([p^g_c; p^k_c]) + e_c)."""
    if not 0 <= c < bank.num_slots:
        raise InvalidLabelError(f"slot {c} outside 0..{bank.num_classes}")
    return encode_all(bank, mixer, client)[c]


def cosine_logits(z, texts, tau: float) -> np.ndarray:
    if not tau > 0:
        raise NonPositiveTemperatureError(f"temperature must be positive, got {tau}")
    zn = l2_normalize_rows(np.atleast_2d(z))
    tn = l2_normalize_rows(texts)
    return zn @ tn.T / tau


def class_probabilities(z, texts, tau: float) -> np.ndarray:
    """Softmax over cosine similarities / tau. Accepts one embedding or an (n, D) batch."""
    probs = softmax(cosine_logits(z, texts, tau), axis=1)
    return probs[0] if np.ndim(z) == 1 else probs


# ----------------------------------------------------------------------
# Loss and gradients
# ----------------------------------------------------------------------

@dataclass
class PromptGrads:
    global_tokens: np.ndarray   # (C+1, d_g, D)
    local_tokens: np.ndarray    # (C+1, d_l, D)


def as_batch_arrays(batch: Batch) -> Tuple[np.ndarray, np.ndarray]:
    """Normalize (Z, labels) or [(z, label), ...] into two arrays."""
    if isinstance(batch, tuple) and len(batch) == 2 and isinstance(batch[0], np.ndarray) \
            and np.ndim(batch[0]) == 2:
        z, labels = batch
    else:
        batch = list(batch)
        if not batch:
            raise EmptyBatchError("prompt batch is empty")
        z = np.vstack([np.asarray(e, dtype=np.float64) for e, _ in batch])
        labels = np.array([lab for _, lab in batch])
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise EmptyBatchError("prompt batch is empty")
    return np.asarray(z, dtype=np.float64), labels


def _check_labels(labels: np.ndarray, num_slots: int):
    if np.any(labels < 0) or np.any(labels >= num_slots):
        bad = labels[(labels < 0) | (labels >= num_slots)][0]
        raise InvalidLabelError(f"label {bad} outside slots 0..{num_slots - 1}")


def prompt_loss(batch: Batch, bank: PromptBank, mixer: FrozenTextMixer, client: int, tau: float) -> float:
    """Mean cross-entropy of the prompted softmax over the batch."""
    z, labels = as_batch_arrays(batch)
    _check_labels(labels, bank.num_slots)
    texts = encode_all(bank, mixer, client)
    logp = log_softmax(cosine_logits(z, texts, tau), axis=1)
    return float(-logp[np.arange(len(labels)), labels].mean())


def prompt_loss_and_grads(
    batch: Batch,
    bank: PromptBank,
    mixer: FrozenTextMixer,
    client: int,
    tau: float,
) -> Tuple[float, PromptGrads]:
    """
    Cross-entropy loss and its gradient w.r.t. every token row.

    Chain: dL/ds = (p - onehot) / (tau B); dL/dt = dL/ds^T z_hat;
    dL/dv = (I - t t^T) dL/dt / ||v||; dL/du = M^T dL/dv; each of the
    d_g + d_l rows of a slot receives dL/du / (d_g + d_l).
    """
    z, labels = as_batch_arrays(batch)
    _check_labels(labels, bank.num_slots)
    n = len(labels)

    v, norms = _pre_normalized(bank, mixer, client)
    texts = v / norms[:, None]
    zn = l2_normalize_rows(z)
    logits = cosine_logits(zn, texts, tau)
    logp = log_softmax(logits, axis=1)
    loss = float(-logp[np.arange(n), labels].mean())

    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    ds = dlogits / (tau * n)
    g_t = ds.T @ zn
    g_v = (g_t - texts * np.sum(texts * g_t, axis=1, keepdims=True)) / norms[:, None]
    g_u = g_v @ mixer.mix_matrix
    row_grad = g_u / bank.variant.context_length

    slots, dim = row_grad.shape
    grads = PromptGrads(
        global_tokens=np.repeat(row_grad[:, None, :], bank.variant.global_tokens, axis=1),
        local_tokens=np.repeat(row_grad[:, None, :], bank.variant.local_tokens, axis=1),
    )
    return loss, grads


# ----------------------------------------------------------------------
# Optimizer
# ----------------------------------------------------------------------

@dataclass
class OptimizerState:
    buffers: Dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Dict[str, np.ndarray]) -> "OptimizerState":
        return cls({k: np.zeros_like(v) for k, v in params.items()}, 0)


def sgd_momentum_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    momentum: float,
    weight_decay: float,
) -> Tuple[Dict[str, np.ndarray], OptimizerState]:
    """Heavy-ball SGD with L2 folded into the gradient; returns new params and state."""
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if set(params) != set(grads) or set(params) != set(state.buffers):
        raise ShapeMismatchError(
            f"parameter groups differ: params={sorted(params)} grads={sorted(grads)} "
            f"buffers={sorted(state.buffers)}"
        )
    new_params, new_buffers = {}, {}
    for name, p in params.items():
        g, buf = grads[name], state.buffers[name]
        if g.shape != p.shape or buf.shape != p.shape:
            raise ShapeMismatchError(f"{name}: param {p.shape}, grad {g.shape}, buffer {buf.shape}")
        g = g + weight_decay * p
        buf = momentum * buf + g
        new_buffers[name] = buf
        new_params[name] = p - lr * buf
    return new_params, OptimizerState(new_buffers, state.step + 1)


# ----------------------------------------------------------------------
# Training
# ----------------------------------------------------------------------

@dataclass
class PromptHyper:
    lr: float = 0.002
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 15
    shot_cap: int = 128
    batch_size: int = 32
    tau: float = 0.07


def balanced_subsample(slots: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    """Class-balanced round-robin pick of at most `cap` indices; seeded shuffles break ties."""
    groups = {int(s): rng.permutation(np.flatnonzero(slots == s)) for s in np.unique(slots)}
    order = [int(s) for s in rng.permutation(sorted(groups))]
    picked: List[int] = []
    depth = 0
    while len(picked) < min(cap, len(slots)):
        for s in order:
            if depth < len(groups[s]):
                picked.append(int(groups[s][depth]))
                if len(picked) == cap:
                    break
        depth += 1
    return np.array(picked, dtype=np.int64)


def train_prompts(
    bank: PromptBank,
    mixer: FrozenTextMixer,
    client: int,
    labeled: Batch,
    hyper: PromptHyper,
    rng: np.random.Generator,
) -> Tuple[PromptBank, List[float]]:
    """
    Mini-batch SGD on the client's global copy and local tokens.

    Returns:
        (updated bank, mean loss per epoch)
    """
    z, labels = as_batch_arrays(labeled)
    _check_labels(labels, bank.num_slots)
    bank = bank.copy()
    if hyper.epochs <= 0:
        return bank, []

    keep = balanced_subsample(labels, hyper.shot_cap, rng)
    z, labels = z[keep], labels[keep]
    n = len(labels)

    params = {'global': bank.global_tokens, 'local': bank.local_for(client)}
    state = OptimizerState.zeros_like(params)
    trace: List[float] = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            bank.global_tokens = params['global']
            if bank.variant.local_tokens:
                bank.local_tokens[client] = params['local']
            loss, grads = prompt_loss_and_grads((z[idx], labels[idx]), bank, mixer, client, hyper.tau)
            params, state = sgd_momentum_step(
                params,
                {'global': grads.global_tokens, 'local': grads.local_tokens},
                state, hyper.lr, hyper.momentum, hyper.weight_decay,
            )
            epoch_loss += loss * len(idx)
        trace.append(epoch_loss / n)
        logger.debug(f"client {client} prompt epoch {epoch + 1}/{hyper.epochs}: loss={trace[-1]:.4f}")

    bank.global_tokens = params['global']
    if bank.variant.local_tokens:
        bank.local_tokens[client] = params['local']
    return bank, trace


# ----------------------------------------------------------------------
# Checkpoints
# ----------------------------------------------------------------------

def save_prompt_bank(bank: PromptBank, path) -> Path:
    """
    Write an .npz checkpoint: `header` = (C+1, d_g, d_l, D, K), `variant`,
    `global_tokens` (C+1, d_g, D) and `local_tokens` (K, C+1, d_l, D) for
    clients 0..K-1, all float64 so the round trip is exact.
    """
    path = Path(path)
    clients = sorted(bank.local_tokens)
    if clients != list(range(len(clients))):
        raise InvalidShapeError(f"checkpoint needs local tokens for clients 0..K-1, got {clients}")
    slots, d_g, dim = bank.global_tokens.shape
    d_l = bank.variant.local_tokens
    local = np.stack([bank.local_tokens[k] for k in clients]) if clients else np.zeros((0, slots, d_l, dim))
    with open(path, 'wb') as f:
        np.savez(
            f,
            header=np.array([slots, d_g, d_l, dim, len(clients)], dtype=np.int64),
            variant=np.array(bank.variant.kind),
            global_tokens=bank.global_tokens,
            local_tokens=local,
        )
    return path


def load_prompt_bank(path) -> PromptBank:
    with np.load(path, allow_pickle=False) as data:
        slots, d_g, d_l, dim, k = (int(x) for x in data['header'])
        variant = PromptVariant(str(data['variant']), d_g, d_l)
        global_tokens = data['global_tokens']
        local = data['local_tokens']
        if global_tokens.shape != (slots, d_g, dim) or local.shape != (k, slots, d_l, dim):
            raise InvalidShapeError(f"checkpoint {path} does not match its header")
        return PromptBank(variant, global_tokens.copy(), {i: local[i].copy() for i in range(k)})
