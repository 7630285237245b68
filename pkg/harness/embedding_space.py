"""
Embedding space: samples, client datasets, the synthetic federated benchmark
generator and the embedding import path (CSV + data_manifest.yaml).
"""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import yaml

from .errors import (
    DimensionMismatchError,
    DuplicateSampleIdError,
    InvalidSpecError,
    ParseError,
    ZeroNormError,
)

logger = logging.getLogger(__name__)

NORM_EPS = 1e-12

SEED_LABELED = "seed_labeled"
UNLABELED = "unlabeled"
TEST = "test"
SPLITS = (SEED_LABELED, UNLABELED, TEST)

# import-file split names -> in-memory split names
CSV_SPLITS = {"seed": SEED_LABELED, "unlabeled": UNLABELED, "test": TEST}
FIXED_COLUMNS = ["sample_id", "client_id", "split", "label_kind", "label_index"]


# ----------------------------------------------------------------------
# Vector primitives
# ----------------------------------------------------------------------

def l2_normalize(v) -> np.ndarray:
    """Return v scaled to unit Euclidean norm; ZeroNormError if ||v|| < 1e-12."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot normalize a vector with non-finite entries")
    norm = np.linalg.norm(v)
    if norm < NORM_EPS:
        raise ZeroNormError(f"degenerate embedding (norm {norm:.3e})")
    return v / norm


def l2_normalize_rows(m) -> np.ndarray:
    """Row-wise l2_normalize for an (n, D) matrix."""
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValueError("cannot normalize rows with non-finite entries")
    norms = np.linalg.norm(m, axis=-1, keepdims=True)
    if np.any(norms < NORM_EPS):
        bad = int(np.argmin(norms.ravel()))
        raise ZeroNormError(f"degenerate embedding at row {bad}")
    return m / norms


# ----------------------------------------------------------------------
# Domain types
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class GroundTruth:
    """Hidden status of a sample: ID class index or OOD mode index (0-based)."""
    kind: str
    index: int

    def __post_init__(self):
        if self.kind not in ("id", "ood"):
            raise ValueError(f"unknown truth kind: {self.kind!r}")
        if self.index < 0:
            raise ValueError(f"negative {self.kind} index: {self.index}")

    @classmethod
    def id_class(cls, c: int) -> "GroundTruth":
        return cls("id", int(c))

    @classmethod
    def ood_mode(cls, m: int) -> "GroundTruth":
        return cls("ood", int(m))

    @property
    def is_id(self) -> bool:
        return self.kind == "id"


@dataclass(frozen=True, eq=False)
class Sample:
    sample_id: int
    client_id: int
    embedding: np.ndarray
    truth: GroundTruth
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split: {self.split!r}")
        if self.split == SEED_LABELED and not self.truth.is_id:
            raise ValueError(f"seed-labeled sample {self.sample_id} must be ID")
        embedding = np.array(self.embedding, dtype=np.float64)
        embedding.setflags(write=False)
        object.__setattr__(self, 'embedding', embedding)


@dataclass
class ClientDataset:
    client_id: int
    labeled: List[Sample] = field(default_factory=list)
    unlabeled: List[Sample] = field(default_factory=list)
    test: List[Sample] = field(default_factory=list)

    @property
    def ood_ratio_actual(self) -> float:
        if not self.unlabeled:
            return 0.0
        return sum(not s.truth.is_id for s in self.unlabeled) / len(self.unlabeled)

    def all_samples(self) -> List[Sample]:
        return self.labeled + self.unlabeled + self.test


@dataclass
class FederatedDataset:
    clients: List[ClientDataset]
    num_classes: int
    dimension: int
    num_ood_modes: int
    anchors: Optional[np.ndarray] = None  # (C+1, D), row C is the OOD anchor
    source: str = "synthetic"

    @property
    def num_clients(self) -> int:
        return len(self.clients)

    def all_samples(self) -> List[Sample]:
        return [s for c in self.clients for s in c.all_samples()]

    def validate_quality(self) -> Dict[str, bool]:
        """Run structural checks; return dict of check results."""
        checks = {}
        samples = self.all_samples()
        ids = [s.sample_id for s in samples]
        checks['unique_sample_ids'] = len(ids) == len(set(ids))
        checks['dimension_uniform'] = all(s.embedding.shape == (self.dimension,) for s in samples)
        checks['finite_embeddings'] = all(np.all(np.isfinite(s.embedding)) for s in samples)
        checks['unit_norm_embeddings'] = all(
            abs(np.linalg.norm(s.embedding) - 1.0) < 1e-9 for s in samples
        )
        checks['seed_sets_id_only'] = all(s.truth.is_id for c in self.clients for s in c.labeled)
        checks['client_ids_consistent'] = all(
            s.client_id == c.client_id for c in self.clients for s in c.all_samples()
        )
        checks['labels_in_range'] = all(
            s.truth.index < (self.num_classes if s.truth.is_id else max(self.num_ood_modes, 1))
            for s in samples
        )
        if self.anchors is None:
            checks['anchors_present'] = False
        else:
            checks['anchors_present'] = self.anchors.shape == (self.num_classes + 1, self.dimension)
            checks['anchors_unit_norm'] = bool(
                np.allclose(np.linalg.norm(self.anchors, axis=1), 1.0, atol=1e-9)
            )
        return checks


def stack_embeddings(samples: Sequence[Sample]) -> np.ndarray:
    if not samples:
        return np.zeros((0, 0))
    return np.vstack([s.embedding for s in samples])


def sort_by_id(samples: Sequence[Sample]) -> List[Sample]:
    return sorted(samples, key=lambda s: s.sample_id)


# ----------------------------------------------------------------------
# Synthetic benchmark
# ----------------------------------------------------------------------

@dataclass
class SyntheticSpec:
    """Knobs of the synthetic federated open-set benchmark."""
    num_clients: int = 4
    num_classes: int = 8
    num_ood_modes: int = 4
    dimension: int = 64
    mean_separation: float = 1.0
    within_class_std: float = 0.05
    ood_std: float = 0.05
    client_shift: float = 0.15
    # how far OOD mode centroids sit outside the span of the ID centroids
    ood_offset: float = 1.9
    seed_per_client: int = 128
    unlabeled_per_client: int = 2000
    test_per_client: int = 500
    ood_ratio: List[float] = field(default_factory=lambda: [0.322, 0.354, 0.357, 0.325])
    test_ood_ratio: Optional[List[float]] = None
    template_misalignment: float = 0.35
    exclusive_ood_modes: bool = False
    ood_mode_concentration: float = 1.0

    def validate(self):
        K, C, M, D = self.num_clients, self.num_classes, self.num_ood_modes, self.dimension
        if K < 1 or C < 2 or M < 1 or D < 2:
            raise InvalidSpecError(f"need K>=1, C>=2, M>=1, D>=2; got K={K} C={C} M={M} D={D}")
        if len(self.ood_ratio) != K:
            raise InvalidSpecError(f"ood_ratio has {len(self.ood_ratio)} entries for {K} clients")
        ratios = list(self.ood_ratio) + list(self.test_ood_ratio or [])
        if self.test_ood_ratio is not None and len(self.test_ood_ratio) != K:
            raise InvalidSpecError(f"test_ood_ratio has {len(self.test_ood_ratio)} entries for {K} clients")
        if not 0.0 <= self.template_misalignment <= 1.0:
            raise InvalidSpecError("template_misalignment must lie in [0, 1]")
        if any(not 0.0 <= r <= 1.0 for r in ratios):
            raise InvalidSpecError("all OOD ratios must lie in [0, 1]")
        if min(self.seed_per_client, self.unlabeled_per_client, self.test_per_client) < 0:
            raise InvalidSpecError("sample counts must be non-negative")
        if self.mean_separation <= 0:
            raise InvalidSpecError("mean_separation must be positive")
        if min(self.within_class_std, self.ood_std, self.client_shift, self.ood_offset) < 0:
            raise InvalidSpecError("standard deviations, shift and offset must be non-negative")
        if self.ood_mode_concentration <= 0:
            raise InvalidSpecError("ood_mode_concentration must be positive")


def _unit_directions(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """n directions, orthonormal when n <= dim, otherwise i.i.d. random unit vectors."""
    g = rng.standard_normal((n, dim))
    if n <= dim:
        q, _ = np.linalg.qr(g.T)
        return q.T[:n]
    logger.warning(f"{n} directions in {dim} dimensions: falling back to non-orthogonal centroids")
    return l2_normalize_rows(g)


def _min_pairwise_distance(points: np.ndarray) -> float:
    diff = points[:, None, :] - points[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    dist[np.diag_indices(len(points))] = np.inf
    return float(dist.min())


def _ood_mixture_weights(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    K, M = spec.num_clients, spec.num_ood_modes
    if spec.exclusive_ood_modes:
        weights = np.zeros((K, M))
        for k in range(K):
            owned = [m for m in range(M) if m % K == k] or [k % M]
            weights[k, owned] = 1.0 / len(owned)
        return weights
    return rng.dirichlet(np.full(M, spec.ood_mode_concentration), size=K)


def generate_synthetic(spec: SyntheticSpec, seed: int) -> FederatedDataset:
    """
    Build a seeded federated open-set benchmark.

    ID class c of client k ~ N(mu_c + shift_k, within_class_std^2 I); OOD mode m
    ~ N(nu_m + shift_k, ood_std^2 I), where nu_m leans on one ID centroid but
    carries an orthogonal component of relative size ood_offset. All samples
    and the C+1 template anchors are l2-normalized.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    K, C, M, D = spec.num_clients, spec.num_classes, spec.num_ood_modes, spec.dimension

    directions = _unit_directions(rng, C + M, D)
    id_dirs, ood_raw = directions[:C], directions[C:]
    radius = spec.mean_separation / _min_pairwise_distance(id_dirs)
    centroids = radius * id_dirs

    host = np.resize(rng.permutation(C), M)
    ood_dirs = l2_normalize_rows(id_dirs[host] + spec.ood_offset * ood_raw)
    ood_centroids = radius * ood_dirs

    shifts = spec.client_shift * l2_normalize_rows(rng.standard_normal((K, D)))
    mixture = _ood_mixture_weights(spec, rng)

    # perturbation is absolute, so its relative weight grows as centroids shrink
    perturb = l2_normalize_rows(rng.standard_normal((C + 1, D)))
    anchors = np.empty((C + 1, D))
    for c in range(C):
        anchors[c] = l2_normalize(centroids[c] + spec.template_misalignment * perturb[c])
    anchors[C] = l2_normalize(ood_centroids.mean(axis=0) + spec.template_misalignment * perturb[C])

    next_id = 0

    def draw(client: int, split: str, n: int, ood_ratio: float) -> List[Sample]:
        nonlocal next_id
        n_ood = 0 if split == SEED_LABELED else int(round(ood_ratio * n))
        n_id = n - n_ood
        if split == SEED_LABELED:
            classes = rng.permutation(np.arange(n_id) % C)
        else:
            classes = rng.integers(0, C, size=n_id)
        modes = rng.choice(M, size=n_ood, p=mixture[client])
        centers = np.vstack([centroids[classes], ood_centroids[modes]]) + shifts[client]
        stds = np.concatenate([np.full(n_id, spec.within_class_std), np.full(n_ood, spec.ood_std)])
        points = centers + stds[:, None] * rng.standard_normal((n, D))
        truths = [GroundTruth.id_class(c) for c in classes] + [GroundTruth.ood_mode(m) for m in modes]
        order = rng.permutation(n)
        points = l2_normalize_rows(points[order]) if n else points
        samples = []
        for row, idx in enumerate(order):
            samples.append(Sample(next_id, client, points[row], truths[idx], split))
            next_id += 1
        return samples

    clients = []
    test_ratios = spec.test_ood_ratio if spec.test_ood_ratio is not None else spec.ood_ratio
    for k in range(K):
        clients.append(ClientDataset(
            client_id=k,
            labeled=draw(k, SEED_LABELED, spec.seed_per_client, 0.0),
            unlabeled=draw(k, UNLABELED, spec.unlabeled_per_client, spec.ood_ratio[k]),
            test=draw(k, TEST, spec.test_per_client, test_ratios[k]),
        ))
        logger.debug(
            f"client {k}: {len(clients[-1].unlabeled)} unlabeled, "
            f"ood_ratio_actual={clients[-1].ood_ratio_actual:.3f}"
        )

    return FederatedDataset(
        clients=clients, num_classes=C, dimension=D, num_ood_modes=M,
        anchors=anchors, source=f"synthetic(seed={seed})",
    )


# ----------------------------------------------------------------------
# Import
# ----------------------------------------------------------------------
# csv.reader rather than pd.read_csv: every error reports the physical line
# of the offending row (reader.line_num), which read_csv does not expose.

def _value_columns(header: List[str], fixed: List[str], path: Path) -> int:
    if header[:len(fixed)] != fixed:
        raise ParseError(f"{path.name}: header must start with {','.join(fixed)}", line=1)
    values = header[len(fixed):]
    if values != [f"v{i}" for i in range(len(values))]:
        raise ParseError(f"{path.name}: value columns must be v0..v{{D-1}}", line=1)
    if len(values) < 2:
        raise ParseError(f"{path.name}: need at least two value columns", line=1)
    return len(values)


def _parse_vector(cells: List[str], line: int) -> np.ndarray:
    try:
        v = np.array([float(x) for x in cells], dtype=np.float64)
    except ValueError as e:
        raise ParseError(f"non-numeric embedding value ({e})", line=line)
    if not np.all(np.isfinite(v)):
        raise ParseError("embedding values must be finite", line=line)
    try:
        return l2_normalize(v)
    except ZeroNormError as e:
        raise ZeroNormError(f"line {line}: {e}")


def load_anchors_csv(path, dimension: Optional[int] = None) -> np.ndarray:
    """Read `class_index,v0..v{D-1}` rows for classes 0..C (C = OOD anchor)."""
    path = Path(path)
    rows: Dict[int, np.ndarray] = {}
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path.name}: empty anchors file", line=1)
        dim = _value_columns(header, ["class_index"], path)
        if dimension is not None and dim != dimension:
            raise DimensionMismatchError(f"anchors have D={dim}, samples have D={dimension}", line=1)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != dim + 1:
                raise DimensionMismatchError(f"expected {dim} values, got {len(row) - 1}", line=line)
            try:
                idx = int(row[0])
            except ValueError:
                raise ParseError(f"bad class_index {row[0]!r}", line=line)
            if idx in rows:
                raise ParseError(f"duplicate class_index {idx}", line=line)
            rows[idx] = _parse_vector(row[1:], line)
    if sorted(rows) != list(range(len(rows))) or len(rows) < 3:
        raise ParseError(f"{path.name}: class_index must cover 0..C with C >= 2")
    return np.vstack([rows[i] for i in range(len(rows))])


def load_embedding_csv(path, anchors_path=None) -> FederatedDataset:
    """
    Parse the embedding import CSV.

    Args:
        path:         `sample_id,client_id,split,label_kind,label_index,v0..v{D-1}`
        anchors_path: optional companion `class_index,v0..v{D-1}` file

    Returns:
        FederatedDataset with one Sample per row, embeddings l2-normalized
    """
    path = Path(path)
    samples: List[Sample] = []
    seen = set()
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path.name}: empty file", line=1)
        dim = _value_columns(header, FIXED_COLUMNS, path)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(FIXED_COLUMNS) + dim:
                raise DimensionMismatchError(
                    f"expected {dim} values, got {len(row) - len(FIXED_COLUMNS)}", line=line
                )
            sid_s, cid_s, split_s, kind, idx_s = row[:5]
            try:
                sid, cid, idx = int(sid_s), int(cid_s), int(idx_s)
            except ValueError:
                raise ParseError("sample_id, client_id and label_index must be integers", line=line)
            if split_s not in CSV_SPLITS:
                raise ParseError(f"unknown split {split_s!r}", line=line)
            if kind not in ("id", "ood"):
                raise ParseError(f"unknown label_kind {kind!r}", line=line)
            if cid < 0 or idx < 0:
                raise ParseError("client_id and label_index must be non-negative", line=line)
            if CSV_SPLITS[split_s] == SEED_LABELED and kind != "id":
                raise ParseError("seed rows must be ID", line=line)
            if sid in seen:
                raise DuplicateSampleIdError(f"line {line}: sample_id {sid} appears twice")
            seen.add(sid)
            samples.append(Sample(sid, cid, _parse_vector(row[5:], line),
                                  GroundTruth(kind, idx), CSV_SPLITS[split_s]))

    anchors = load_anchors_csv(anchors_path, dim) if anchors_path is not None else None
    max_id = max((s.truth.index for s in samples if s.truth.is_id), default=1)
    num_classes = anchors.shape[0] - 1 if anchors is not None else max(max_id + 1, 2)
    if max_id >= num_classes:
        raise ParseError(f"label_index {max_id} outside the {num_classes} anchored classes")
    num_modes = max((s.truth.index for s in samples if not s.truth.is_id), default=-1) + 1

    client_ids = sorted({s.client_id for s in samples})
    if client_ids != list(range(len(client_ids))):
        raise ParseError(f"client ids must be contiguous from 0, got {client_ids}")
    clients = [ClientDataset(client_id=k) for k in client_ids]
    for s in samples:
        target = clients[s.client_id]
        {SEED_LABELED: target.labeled, UNLABELED: target.unlabeled, TEST: target.test}[s.split].append(s)

    logger.info(f"Imported {len(samples)} samples (D={dim}, K={len(clients)}, C={num_classes}) from {path.name}")
    return FederatedDataset(
        clients=clients, num_classes=num_classes, dimension=dim,
        num_ood_modes=num_modes, anchors=anchors, source=f"import({path.name})",
    )


class EmbeddingLoader:
    """Load named embedding datasets declared in data_manifest.yaml."""

    def __init__(self, manifest_path: str, data_root: str = None):
        """
        Args:
            manifest_path: path to data_manifest.yaml
            data_root: override data root directory; falls back to manifest value
        """
        self.manifest_path = Path(manifest_path)
        with open(self.manifest_path, 'r', encoding='utf-8') as f:
            self.manifest = yaml.safe_load(f) or {}

        if data_root is None:
            data_root = self.manifest.get('data_root', './data')
        self.data_root = Path(data_root)
        if not self.data_root.is_absolute():
            self.data_root = (self.manifest_path.parent.parent / self.data_root).resolve()
        logger.debug(f"Data root: {self.data_root}")

    def get_available_datasets(self) -> List[str]:
        return list((self.manifest.get('datasets') or {}).keys())

    def load(self, dataset_id: str) -> FederatedDataset:
        entry = (self.manifest.get('datasets') or {}).get(dataset_id)
        if not entry:
            raise ValueError(f"Dataset {dataset_id} not found in manifest")
        samples_path = self.data_root / entry['samples_csv']
        if not samples_path.exists():
            raise FileNotFoundError(f"Embedding file not found: {samples_path}")
        anchors_path = None
        if entry.get('anchors_csv'):
            anchors_path = self.data_root / entry['anchors_csv']
            if not anchors_path.exists():
                raise FileNotFoundError(f"Anchors file not found: {anchors_path}")
        return load_embedding_csv(samples_path, anchors_path)
