"""
Gate: pseudo-labels unlabeled samples against prompted (or frozen) text
embeddings and splits each client's pool into the ID-candidate pool and the
exploration pool.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .embedding_space import Sample, l2_normalize, sort_by_id, stack_embeddings
from .errors import MissingBankError
from .prompt_engine import FrozenTextMixer, PromptBank, PromptVariant, class_probabilities, encode_all

logger = logging.getLogger(__name__)

COLDSTART = 'coldstart'
UPPER_BOUND = 'upper_bound'
STATIC = 'static'
DYNAMIC = 'dynamic'


@dataclass(frozen=True)
class GateMode:
    kind: str
    num_ood_templates: int = 1
    variant: Optional[PromptVariant] = None

    def __post_init__(self):
        if self.kind not in (COLDSTART, UPPER_BOUND, STATIC, DYNAMIC):
            raise ValueError(f"unknown gate mode: {self.kind!r}")
        if self.kind == STATIC and self.num_ood_templates < 1:
            raise ValueError("static gate needs at least one OOD template")
        if self.kind == DYNAMIC and self.variant is None:
            raise ValueError("dynamic gate needs a prompt variant")

    @classmethod
    def coldstart(cls) -> "GateMode":
        return cls(COLDSTART)

    @classmethod
    def upper_bound(cls) -> "GateMode":
        return cls(UPPER_BOUND)

    @classmethod
    def static(cls, num_ood_templates: int = 1) -> "GateMode":
        return cls(STATIC, num_ood_templates=num_ood_templates)

    @classmethod
    def dynamic(cls, variant: PromptVariant) -> "GateMode":
        return cls(DYNAMIC, variant=variant)

    @property
    def name(self) -> str:
        """Config-facing name: coldstart, upper_bound, static, mixed, global or local."""
        return self.variant.kind if self.kind == DYNAMIC else self.kind

    @property
    def uses_prompts(self) -> bool:
        return self.kind == DYNAMIC

    @property
    def uses_text(self) -> bool:
        return self.kind in (STATIC, DYNAMIC)


@dataclass
class GateContext:
    """Everything a gate needs for one client: frozen text side, optional bank, tau."""
    client: int
    mixer: Optional[FrozenTextMixer] = None
    bank: Optional[PromptBank] = None
    tau: float = 0.07
    ood_template_noise: float = 0.1
    template_seed: int = 0
    # sample_id -> (slot, confidence), filled on first static partition
    static_cache: Optional[Dict[int, Tuple[int, float]]] = None

    @property
    def num_classes(self) -> int:
        return self._mixer().anchors.shape[0] - 1

    def _mixer(self) -> FrozenTextMixer:
        if self.mixer is None:
            raise MissingBankError(f"client {self.client}: gate has no template anchors")
        return self.mixer


@dataclass
class PoolPartition:
    gated: List[Sample] = field(default_factory=list)
    exploration: List[Sample] = field(default_factory=list)
    pseudo_labels: Dict[int, int] = field(default_factory=dict)
    confidences: Dict[int, float] = field(default_factory=dict)

    @property
    def gated_size(self) -> int:
        return len(self.gated)

    @property
    def exploration_size(self) -> int:
        return len(self.exploration)


# ----------------------------------------------------------------------
# Pseudo-labels
# ----------------------------------------------------------------------

def static_templates(anchors: np.ndarray, num_ood_templates: int, noise: float, seed: int) -> np.ndarray:
    """
    Frozen anchors plus num_ood_templates - 1 extra OOD anchors
    normalize(e_OOD + delta_j). Template j depends only on (seed, j), so a
    larger count extends a smaller one.
    """
    extra = []
    ood_anchor = anchors[-1]
    for j in range(1, num_ood_templates):
        delta = np.random.default_rng([seed, j]).standard_normal(anchors.shape[1])
        extra.append(l2_normalize(ood_anchor + noise * l2_normalize(delta)))
    return np.vstack([anchors] + extra) if extra else anchors.copy()


def pseudo_label(z, texts: np.ndarray, tau: float, num_classes: Optional[int] = None) -> Tuple[int, float]:
    """
    Argmax slot and max probability. Ties go to the lowest slot. With
    num_classes given, every slot >= num_classes collapses to the OOD slot.
    """
    probs = class_probabilities(z, texts, tau)
    slot = int(np.argmax(probs))
    if num_classes is not None:
        slot = min(slot, num_classes)
    return slot, float(probs.max())


def pseudo_label_batch(z: np.ndarray, texts: np.ndarray, tau: float, num_classes: int) -> Tuple[np.ndarray, np.ndarray]:
    probs = class_probabilities(np.atleast_2d(z), texts, tau)
    slots = np.minimum(np.argmax(probs, axis=1), num_classes)
    return slots, probs.max(axis=1)


def gate_texts(mode: GateMode, ctx: GateContext) -> np.ndarray:
    """Text embeddings the gate scores against (static templates or the prompted bank)."""
    mixer = ctx._mixer()
    if mode.kind == STATIC:
        return static_templates(mixer.anchors, mode.num_ood_templates, ctx.ood_template_noise, ctx.template_seed)
    if mode.kind == DYNAMIC:
        if ctx.bank is None:
            raise MissingBankError(f"client {ctx.client}: dynamic gate without a prompt bank")
        return encode_all(ctx.bank, mixer, ctx.client)
    raise ValueError(f"{mode.name} gate does not score against text")


def predict_slots(samples: List[Sample], mode: GateMode, ctx: GateContext) -> Tuple[np.ndarray, np.ndarray]:
    """Pseudo-label slots and confidences for samples in the given order."""
    if not samples:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    return pseudo_label_batch(stack_embeddings(samples), gate_texts(mode, ctx), ctx.tau, ctx.num_classes)


def predict_is_id(samples: List[Sample], mode: GateMode, ctx: GateContext) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    ID/OOD verdict per sample, plus class slots when the gate produces them.

    Coldstart calls everything ID; the oracle bound reads ground truth; neither
    yields class slots.
    """
    if mode.kind == COLDSTART:
        return np.ones(len(samples), dtype=bool), None
    if mode.kind == UPPER_BOUND:
        return np.array([s.truth.is_id for s in samples], dtype=bool), None
    slots, _ = predict_slots(samples, mode, ctx)
    return slots < ctx.num_classes, slots


# ----------------------------------------------------------------------
# Partition
# ----------------------------------------------------------------------

def _static_records(pool: List[Sample], mode: GateMode, ctx: GateContext) -> Tuple[np.ndarray, np.ndarray]:
    if ctx.static_cache is None:
        ctx.static_cache = {}
    missing = [s for s in pool if s.sample_id not in ctx.static_cache]
    if missing:
        slots, conf = predict_slots(missing, mode, ctx)
        for s, slot, c in zip(missing, slots, conf):
            ctx.static_cache[s.sample_id] = (int(slot), float(c))
    records = [ctx.static_cache[s.sample_id] for s in pool]
    return np.array([r[0] for r in records], dtype=np.int64), np.array([r[1] for r in records])


def partition_pool(pool: List[Sample], mode: GateMode, ctx: GateContext) -> PoolPartition:
    """
    Split a client's unlabeled pool into gated (ID-candidate) and exploration.

    Args:
        pool: current unlabeled samples of the client
        mode: gate mode
        ctx:  client gate context (anchors, bank, tau, static cache)

    Returns:
        PoolPartition with both sides in sample_id order
    """
    pool = sort_by_id(pool)
    if not pool:
        return PoolPartition()

    if mode.kind == COLDSTART:
        return PoolPartition(gated=pool)

    if mode.kind == UPPER_BOUND:
        return PoolPartition(
            gated=[s for s in pool if s.truth.is_id],
            exploration=[s for s in pool if not s.truth.is_id],
        )

    if mode.kind == STATIC:
        slots, conf = _static_records(pool, mode, ctx)
    else:
        slots, conf = predict_slots(pool, mode, ctx)

    num_classes = ctx.num_classes
    part = PoolPartition()
    for s, slot, c in zip(pool, slots, conf):
        part.pseudo_labels[s.sample_id] = int(slot)
        part.confidences[s.sample_id] = float(c)
        (part.gated if slot < num_classes else part.exploration).append(s)
    logger.debug(
        f"client {ctx.client} {mode.name} gate: {part.gated_size} gated, "
        f"{part.exploration_size} exploration"
    )
    return part
