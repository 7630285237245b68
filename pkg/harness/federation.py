"""
Federation: experiment configuration, seeding, budget split, warm-up and the
bulk-synchronous round loop (broadcast -> gate -> acquire -> oracle -> local
updates -> FedAvg).
"""
import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .acquisition import StrategyFactory
from .embedding_space import (
    EmbeddingLoader,
    FederatedDataset,
    Sample,
    SyntheticSpec,
    generate_synthetic,
    load_embedding_csv,
    sort_by_id,
    stack_embeddings,
)
from .errors import ExperimentError, ZeroWeightSumError
from .gate import GateContext, GateMode, PoolPartition, partition_pool
from .metrics import (
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
from .prompt_engine import (
    FrozenTextMixer,
    PromptBank,
    PromptHyper,
    PromptVariant,
    balanced_subsample,
    init_prompt_bank,
    train_prompts,
)
from .task_model import LinearProbe, ProbeHyper, fedavg_linear, predict_probs, train_local, weighted_mean
from .wire import BroadcastMsg, ClientUpdateMsg, loopback

logger = logging.getLogger(__name__)

SERVER = -1


# ----------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------

@dataclass
class DatasetConfig:
    source: str = 'synthetic'
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    # synthetic benchmark seed; None means the experiment's master seed
    seed: Optional[int] = None
    manifest: Optional[str] = None
    dataset_id: Optional[str] = None
    samples_csv: Optional[str] = None
    anchors_csv: Optional[str] = None


@dataclass
class ProtocolConfig:
    rounds: int = 5
    budget_per_round: int = 500
    tau: float = 0.07
    warmup_shots: int = 0
    ood_warmup: bool = False
    redistribute_unused_budget: bool = False
    prompt_aggregation: str = 'weighted'
    wire_loopback: bool = True


@dataclass
class ExperimentConfig:
    gate_mode: GateMode
    strategy: str = 'random'
    seed: int = 0
    name: str = 'promptgate'
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    prompt: PromptHyper = field(default_factory=PromptHyper)
    prompt_init_std: float = 0.02
    probe: ProbeHyper = field(default_factory=ProbeHyper)
    ood_template_noise: float = 0.1
    kmeans_max_iters: int = 25
    output_dir: Optional[Path] = None
    client_workers: int = 1
    log_partitions: bool = False

    @property
    def variant(self) -> Optional[PromptVariant]:
        return self.gate_mode.variant

    @property
    def subdir(self) -> Path:
        return Path(self.gate_mode.name) / self.strategy / f"seed{self.seed}"

    def validate(self, num_clients: Optional[int] = None):
        p = self.protocol
        if p.rounds < 1:
            raise ExperimentError(f"rounds must be >= 1, got {p.rounds}")
        if p.budget_per_round < 0:
            raise ExperimentError(f"budget_per_round must be >= 0, got {p.budget_per_round}")
        if num_clients is not None and p.budget_per_round < num_clients:
            raise ExperimentError(
                f"budget_per_round={p.budget_per_round} cannot give each of {num_clients} clients a query"
            )
        if not p.tau > 0:
            raise ExperimentError(f"tau must be positive, got {p.tau}")
        if p.warmup_shots < 0:
            raise ExperimentError("warmup_shots must be >= 0")
        if p.prompt_aggregation not in ('weighted', 'uniform'):
            raise ExperimentError(f"prompt_aggregation must be weighted or uniform, got {p.prompt_aggregation!r}")
        if self.strategy not in StrategyFactory.STRATEGY_MAP:
            raise ExperimentError(f"unknown strategy {self.strategy!r}")
        if self.seed < 0:
            raise ExperimentError("master seed must be non-negative")


def build_dataset(cfg: DatasetConfig, master_seed: int) -> FederatedDataset:
    if cfg.source == 'synthetic':
        seed = cfg.seed if cfg.seed is not None else master_seed
        return generate_synthetic(cfg.synthetic, seed)
    if cfg.source == 'import':
        if cfg.manifest and cfg.dataset_id:
            return EmbeddingLoader(cfg.manifest).load(cfg.dataset_id)
        if cfg.samples_csv:
            return load_embedding_csv(cfg.samples_csv, cfg.anchors_csv)
        raise ExperimentError("import dataset needs manifest + dataset_id or samples_csv")
    raise ExperimentError(f"unknown dataset source {cfg.source!r}")


# ----------------------------------------------------------------------
# Seeding, budgets, oracle
# ----------------------------------------------------------------------

def _stage_code(stage: str) -> int:
    return int.from_bytes(hashlib.sha256(stage.encode('utf-8')).digest()[:4], 'little')


def derive_rng(master_seed: int, client: int, round_idx: int, stage: str) -> np.random.Generator:
    """Independent stream per (master seed, client, round, stage); client -1 is the server."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, client + 1, round_idx, _stage_code(stage)]))


def derive_seed(master_seed: int, stage: str) -> int:
    return int(derive_rng(master_seed, SERVER, 0, stage).integers(2**32))


def split_budget(total: int, pool_sizes: Sequence[int]) -> List[int]:
    """
    Split a round budget over clients.

    One query per non-empty pool first (largest pools first if the budget is
    short), then the rest proportionally to remaining capacity: floors, plus
    one each to the largest fractional parts (ties by client id). The result
    sums to min(total, sum(pool_sizes)) and never exceeds a pool.
    """
    if total < 0:
        raise ValueError(f"budget must be non-negative, got {total}")
    sizes = np.asarray(pool_sizes, dtype=np.int64)
    budgets = np.zeros(len(sizes), dtype=np.int64)
    total = int(min(total, sizes.sum()))
    if total == 0:
        return budgets.tolist()

    nonempty = sorted(np.flatnonzero(sizes > 0), key=lambda k: (-sizes[k], k))
    for k in nonempty[:total]:
        budgets[k] = 1
    remaining = total - int(budgets.sum())
    capacity = sizes - budgets
    if remaining > 0:
        quotas = remaining * capacity / capacity.sum()
        floors = np.floor(quotas).astype(np.int64)
        budgets += floors
        leftover = remaining - int(floors.sum())
        order = sorted(range(len(sizes)), key=lambda k: (-(quotas[k] - floors[k]), k))
        for k in order[:leftover]:
            budgets[k] += 1
    return budgets.tolist()


def redistribute_budget(budgets: Sequence[int], capacities: Sequence[int]) -> List[int]:
    """Move budget a client cannot spend to clients with spare capacity."""
    budgets = np.asarray(budgets, dtype=np.int64)
    capacities = np.asarray(capacities, dtype=np.int64)
    unused = int(np.maximum(budgets - capacities, 0).sum())
    spent = np.minimum(budgets, capacities)
    if unused == 0:
        return spent.tolist()
    extra = split_budget(unused, (capacities - spent).tolist())
    return (spent + np.asarray(extra, dtype=np.int64)).tolist()


def oracle_label(sample: Sample, num_classes: int) -> int:
    """ID class c -> slot c; every OOD mode -> the single coarse OOD slot C."""
    return sample.truth.index if sample.truth.is_id else num_classes


# ----------------------------------------------------------------------
# State and reports
# ----------------------------------------------------------------------

@dataclass
class ClientState:
    client_id: int
    labeled: List[Sample]
    unlabeled: List[Sample]
    test: List[Sample]
    gate_ctx: GateContext
    probe: LinearProbe
    bank: Optional[PromptBank] = None
    ood_store: List[Sample] = field(default_factory=list)
    initial_total: int = 0

    def probe_training_set(self) -> Tuple[np.ndarray, np.ndarray]:
        return stack_embeddings(self.labeled), np.array([s.truth.index for s in self.labeled], dtype=np.int64)

    def prompt_training_set(self, num_classes: int) -> Tuple[np.ndarray, np.ndarray]:
        samples = self.labeled + self.ood_store
        labels = [oracle_label(s, num_classes) for s in samples]
        return stack_embeddings(samples), np.array(labels, dtype=np.int64)


@dataclass
class ServerState:
    global_tokens: np.ndarray   # (C+1, d_g, D); d_g = 0 when no prompts are learned
    probe: LinearProbe


@dataclass
class ClientRoundRecord:
    client_id: int
    round: int
    budget: int = 0
    queries: List[Sample] = field(default_factory=list)
    partition: Optional[PoolPartition] = None
    gated_size: int = 0
    exploration_size: int = 0
    qp: Optional[float] = None
    aqr: Optional[float] = None
    purity: Optional[float] = None
    leakage: Optional[float] = None
    bma: Optional[float] = None
    gate_binary_acc: Optional[float] = None
    ood_recall: Optional[float] = None
    gate_id_bma: Optional[float] = None
    prompt_loss_trace: List[float] = field(default_factory=list)
    probe_loss_trace: List[float] = field(default_factory=list)
    labeled_size: int = 0
    ood_store_size: int = 0
    unlabeled_size: int = 0

    @property
    def query_ids(self) -> List[int]:
        return [s.sample_id for s in self.queries]

    @property
    def prompt_loss_final(self) -> Optional[float]:
        return self.prompt_loss_trace[-1] if self.prompt_loss_trace else None

    @property
    def probe_loss_final(self) -> Optional[float]:
        return self.probe_loss_trace[-1] if self.probe_loss_trace else None


@dataclass
class RoundReport:
    round: int
    clients: List[ClientRoundRecord]

    def macro(self, metric: str) -> Optional[float]:
        return macro_average([getattr(c, metric) for c in self.clients])


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    dataset_source: str
    reports: List[RoundReport]
    history: QueryHistory
    probe: LinearProbe
    bank: Optional[PromptBank]
    warmup_queries: Dict[int, List[Sample]] = field(default_factory=dict)


def _fmt(v: Optional[float]) -> str:
    return 'n/a' if v is None else f"{v:.3f}"


# ----------------------------------------------------------------------
# Simulation
# ----------------------------------------------------------------------

class FederatedSimulation:
    """One experiment: a server plus K clients, run round by round."""

    def __init__(self, config: ExperimentConfig, dataset: FederatedDataset):
        config.validate(dataset.num_clients)
        self.config = config
        self.dataset = dataset
        self.mode = config.gate_mode
        self.C = dataset.num_classes
        self.D = dataset.dimension
        self.K = dataset.num_clients
        self.strategy = StrategyFactory.create(config.strategy, {'kmeans_max_iters': config.kmeans_max_iters})

        self.mixer = None
        if dataset.anchors is not None:
            self.mixer = FrozenTextMixer.seeded(dataset.anchors, derive_seed(config.seed, 'mixer'))
        elif self.mode.uses_text:
            raise ExperimentError(f"{self.mode.name} gate needs template anchors; dataset has none")

        bank = None
        if self.mode.uses_prompts:
            bank = init_prompt_bank(
                self.mode.variant, self.C, self.D, derive_seed(config.seed, 'prompt_init'),
                num_clients=self.K, init_std=config.prompt_init_std,
            )
            global_tokens = bank.global_tokens.copy()
        else:
            global_tokens = np.zeros((self.C + 1, 0, self.D))
        self.server = ServerState(global_tokens, LinearProbe.zeros(self.C, self.D))

        template_seed = derive_seed(config.seed, 'templates')
        self.clients: List[ClientState] = []
        for c in dataset.clients:
            ctx = GateContext(
                client=c.client_id, mixer=self.mixer, tau=config.protocol.tau,
                ood_template_noise=config.ood_template_noise, template_seed=template_seed,
            )
            self.clients.append(ClientState(
                client_id=c.client_id,
                labeled=sort_by_id(c.labeled),
                unlabeled=sort_by_id(c.unlabeled),
                test=sort_by_id(c.test),
                gate_ctx=ctx,
                probe=LinearProbe.zeros(self.C, self.D),
                bank=bank.for_client(c.client_id) if bank is not None else None,
                initial_total=len(c.labeled) + len(c.unlabeled),
            ))
        self.history = QueryHistory.from_pools({c.client_id: c.unlabeled for c in self.clients})
        self.warmup_charges: Dict[int, int] = {c.client_id: 0 for c in self.clients}
        self.warmup_queries: Dict[int, List[Sample]] = {}

    # -- helpers ---------------------------------------------------------

    def _map_clients(self, fn: Callable, *per_client_args) -> list:
        """Run fn(client, *args) for every client; results come back in client order."""
        jobs = list(zip(self.clients, *per_client_args))
        if self.config.client_workers <= 1:
            return [fn(*job) for job in jobs]
        with ThreadPoolExecutor(max_workers=self.config.client_workers) as pool:
            return list(pool.map(lambda job: fn(*job), jobs))

    def _send(self, msg):
        return loopback(msg) if self.config.protocol.wire_loopback else msg

    def _broadcast(self, round_idx: int) -> BroadcastMsg:
        return BroadcastMsg(
            round=round_idx,
            global_tokens=self.server.global_tokens,
            probe_weights=self.server.probe.weights,
            probe_biases=self.server.probe.biases,
            probe_trained=self.server.probe.trained,
        )

    def _client_update(self, client: ClientState, round_idx: int, n_prompt: int, m_probe: int) -> ClientUpdateMsg:
        tokens = client.bank.global_tokens if client.bank is not None else self.server.global_tokens
        return self._send(ClientUpdateMsg(
            client_id=client.client_id,
            round=round_idx,
            global_tokens=tokens,
            probe_weights=client.probe.weights,
            probe_biases=client.probe.biases,
            probe_trained=client.probe.trained,
            n_prompt=n_prompt,
            m_probe=m_probe,
        ))

    def _receive(self, client: ClientState, msg: BroadcastMsg):
        msg = self._send(msg)
        if client.bank is not None:
            client.bank.global_tokens = np.array(msg.global_tokens)
        client.probe = LinearProbe(np.array(msg.probe_weights), np.array(msg.probe_biases), msg.probe_trained)
        client.gate_ctx.bank = client.bank

    def _train_prompts(self, client: ClientState, z: np.ndarray, labels: np.ndarray, hyper: PromptHyper,
                       round_idx: int, stage: str) -> Tuple[int, List[float]]:
        rng = derive_rng(self.config.seed, client.client_id, round_idx, stage)
        client.bank, trace = train_prompts(client.bank, self.mixer, client.client_id, (z, labels), hyper, rng)
        return min(hyper.shot_cap, len(labels)) if hyper.epochs > 0 else 0, trace

    def _aggregate(self, updates: Sequence[ClientUpdateMsg]):
        if self.mode.uses_prompts:
            try:
                self.server.global_tokens = fedavg_prompts(
                    updates, uniform=self.config.protocol.prompt_aggregation == 'uniform'
                )
            except ZeroWeightSumError:
                logger.warning("no client trained prompts this round; global tokens unchanged")
        self._aggregate_probes(updates)

    def _aggregate_probes(self, updates: Sequence[ClientUpdateMsg]):
        m = [u.m_probe for u in updates]
        if sum(m) > 0:
            self.server.probe = fedavg_linear(
                [LinearProbe(u.probe_weights, u.probe_biases, u.probe_trained) for u in updates], m
            )

    # -- round 0 ---------------------------------------------------------

    def fit_initial_probes(self):
        """Fit every client's probe on its seed set and aggregate before round 1."""
        def fit(client: ClientState):
            if not client.labeled:
                return self._client_update(client, 0, 0, 0)
            rng = derive_rng(self.config.seed, client.client_id, 0, 'probe')
            client.probe, _ = train_local(client.probe, client.probe_training_set(), self.config.probe, rng)
            return self._client_update(client, 0, 0, len(client.labeled))

        self._aggregate_probes(self._map_clients(fit))

    def warm_up(self):
        """
        Few-shot prompt adaptation before round 1: stratified ID shots from the
        seed set plus, with ood_warmup, oracle-labeled OOD shots from the pool
        that are charged against the round-1 budget.
        """
        shots = self.config.protocol.warmup_shots
        if shots <= 0 or not self.mode.uses_prompts:
            return
        n_ood = max(1, shots // self.C) if self.config.protocol.ood_warmup else 0

        def warm(client: ClientState):
            rng = derive_rng(self.config.seed, client.client_id, 0, 'warmup')
            z_l, y_l = client.prompt_training_set(self.C)
            keep = balanced_subsample(y_l, shots, rng) if len(y_l) else np.zeros(0, dtype=np.int64)
            picked_ood: List[Sample] = []
            if n_ood:
                candidates = [s for s in client.unlabeled if not s.truth.is_id]
                take = min(n_ood, len(candidates))
                if take:
                    idx = np.sort(rng.choice(len(candidates), size=take, replace=False))
                    picked_ood = [candidates[i] for i in idx]
                    drop = {s.sample_id for s in picked_ood}
                    client.unlabeled = [s for s in client.unlabeled if s.sample_id not in drop]
                    client.ood_store.extend(picked_ood)
            parts = [z_l[keep]] if len(keep) else []
            labels = [y_l[keep]] if len(keep) else []
            if picked_ood:
                parts.append(stack_embeddings(picked_ood))
                labels.append(np.full(len(picked_ood), self.C, dtype=np.int64))
            if not parts:
                return picked_ood, self._client_update(client, 0, 0, 0)
            z, y = np.vstack(parts), np.concatenate(labels)
            hyper = replace(self.config.prompt, shot_cap=max(self.config.prompt.shot_cap, len(y)))
            n_k, trace = self._train_prompts(client, z, y, hyper, 0, 'warmup_prompt')
            logger.debug(f"client {client.client_id} warm-up on {len(y)} shots, loss {_fmt(trace[-1] if trace else None)}")
            return picked_ood, self._client_update(client, 0, n_k, 0)

        results = self._map_clients(warm)
        for client, (picked, _) in zip(self.clients, results):
            self.warmup_charges[client.client_id] = len(picked)
            self.warmup_queries[client.client_id] = picked
        self._aggregate([u for _, u in results])
        logger.info(f"Warm-up done: {shots} ID shots/client, {sum(self.warmup_charges.values())} OOD shots total")

    # -- rounds ----------------------------------------------------------

    def _gate(self, client: ClientState, msg: BroadcastMsg):
        self._receive(client, msg)
        partition = partition_pool(client.unlabeled, self.mode, client.gate_ctx)
        gate_metrics = or_absent(gate_test_metrics, client.test, self.mode, client.gate_ctx) or {}
        return partition, gate_metrics

    def _acquire_and_train(self, client: ClientState, partition: PoolPartition, budget: int, round_idx: int):
        k = client.client_id
        queries: List[Sample] = []
        if budget > 0 and partition.gated:
            rng = derive_rng(self.config.seed, k, round_idx, 'select')
            queries = self.strategy.select(partition.gated, client.labeled, client.probe, rng, budget)
        if not queries:
            return queries, [], [], self._client_update(client, round_idx, 0, 0)

        taken = {s.sample_id for s in queries}
        client.unlabeled = [s for s in client.unlabeled if s.sample_id not in taken]
        for s in queries:
            (client.labeled if oracle_label(s, self.C) < self.C else client.ood_store).append(s)
        client.labeled = sort_by_id(client.labeled)
        client.ood_store = sort_by_id(client.ood_store)

        n_k, prompt_trace = 0, []
        if self.mode.uses_prompts:
            z, y = client.prompt_training_set(self.C)
            n_k, prompt_trace = self._train_prompts(client, z, y, self.config.prompt, round_idx, 'prompt')

        m_k, probe_trace = 0, []
        if client.labeled:
            rng = derive_rng(self.config.seed, k, round_idx, 'probe')
            client.probe, probe_trace = train_local(client.probe, client.probe_training_set(), self.config.probe, rng)
            m_k = len(client.labeled)
        return queries, prompt_trace, probe_trace, self._client_update(client, round_idx, n_k, m_k)

    def round_budgets(self, round_idx: int, partitions: Sequence[PoolPartition]) -> List[int]:
        budgets = split_budget(self.config.protocol.budget_per_round, [len(c.unlabeled) for c in self.clients])
        if round_idx == 1:
            budgets = [max(0, b - self.warmup_charges[c.client_id]) for b, c in zip(budgets, self.clients)]
        if self.config.protocol.redistribute_unused_budget:
            budgets = redistribute_budget(budgets, [p.gated_size for p in partitions])
        for c, b, p in zip(self.clients, budgets, partitions):
            if p.gated_size < b:
                logger.warning(f"client {c.client_id} round {round_idx}: gated pool {p.gated_size} < budget {b}")
        return budgets

    def run_round(self, round_idx: int) -> RoundReport:
        broadcast = self._broadcast(round_idx)
        gated = self._map_clients(lambda c: self._gate(c, broadcast))
        partitions = [p for p, _ in gated]
        budgets = self.round_budgets(round_idx, partitions)
        outcomes = self._map_clients(lambda c, p, b: self._acquire_and_train(c, p, b, round_idx), partitions, budgets)
        self._aggregate([o[3] for o in outcomes])

        records = []
        for client, (partition, gm), budget, (queries, p_trace, q_trace, _) in zip(
                self.clients, gated, budgets, outcomes):
            k = client.client_id
            self.history.record(round_idx, k, queries)
            ids = [s for s in client.test if s.truth.is_id]
            bma = None
            if ids:
                preds = np.argmax(predict_probs(self.server.probe, stack_embeddings(ids)), axis=1)
                bma = balanced_multiclass_accuracy(preds, [s.truth.index for s in ids])
            records.append(ClientRoundRecord(
                client_id=k,
                round=round_idx,
                budget=budget,
                queries=queries,
                partition=partition,
                gated_size=partition.gated_size,
                exploration_size=partition.exploration_size,
                qp=or_absent(query_precision, queries),
                aqr=or_absent(accumulated_query_recall, self.history, k, round_idx),
                purity=or_absent(pool_purity, partition.gated),
                leakage=or_absent(exploration_leakage, partition.exploration),
                bma=bma,
                gate_binary_acc=gm.get('binary_accuracy'),
                ood_recall=gm.get('ood_recall'),
                gate_id_bma=gm.get('id_bma'),
                prompt_loss_trace=p_trace,
                probe_loss_trace=q_trace,
                labeled_size=len(client.labeled),
                ood_store_size=len(client.ood_store),
                unlabeled_size=len(client.unlabeled),
            ))
        report = RoundReport(round_idx, records)
        logger.info(
            f"[{self.config.gate_mode.name}/{self.config.strategy}/seed{self.config.seed}] "
            f"round {round_idx}/{self.config.protocol.rounds}: QP={_fmt(report.macro('qp'))} "
            f"purity={_fmt(report.macro('purity'))} OOD recall={_fmt(report.macro('ood_recall'))} "
            f"BMA={_fmt(report.macro('bma'))}"
        )
        return report

    def checkpoint_bank(self) -> Optional[PromptBank]:
        """Server global tokens with every client's private tokens, for saving."""
        if not self.mode.uses_prompts:
            return None
        local = {c.client_id: c.bank.local_for(c.client_id).copy() for c in self.clients}
        return PromptBank(self.mode.variant, self.server.global_tokens.copy(), local)

    def run(self) -> ExperimentResult:
        self.fit_initial_probes()
        self.warm_up()
        reports = [self.run_round(r) for r in range(1, self.config.protocol.rounds + 1)]
        return ExperimentResult(
            config=self.config,
            dataset_source=self.dataset.source,
            reports=reports,
            history=self.history,
            probe=self.server.probe,
            bank=self.checkpoint_bank(),
            warmup_queries=self.warmup_queries,
        )


def fedavg_prompts(updates: Sequence[ClientUpdateMsg], uniform: bool = False) -> np.ndarray:
    """
    Weighted coordinate-wise mean of the clients' global-token copies.

    Weights are the prompt-training counts n_k, or 1 for every client with
    n_k > 0 when uniform.
    """
    weights = [float(u.n_prompt > 0) if uniform else float(u.n_prompt) for u in updates]
    return weighted_mean([u.global_tokens for u in updates], weights)


def run_experiment(
    config: ExperimentConfig,
    dataset: Optional[FederatedDataset] = None,
) -> ExperimentResult:
    """
    Build the dataset (unless given), run warm-up and all rounds, and write
    the result files when config.output_dir is set.
    """
    from .reporting import write_experiment_outputs

    if dataset is None:
        dataset = build_dataset(config.dataset, config.seed)
    logger.info(
        f"Starting {config.gate_mode.name}/{config.strategy}/seed{config.seed} on {dataset.source}: "
        f"K={dataset.num_clients} C={dataset.num_classes} D={dataset.dimension} R={config.protocol.rounds}"
    )
    result = FederatedSimulation(config, dataset).run()
    if config.output_dir is not None:
        write_experiment_outputs(result, Path(config.output_dir))
    return result
