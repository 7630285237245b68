"""Harness module: embedding datasets, prompt gate, acquisition, federation and reporting."""
from .errors import PromptGateError, SchemaError, ExperimentError
from .embedding_space import (
    Sample,
    GroundTruth,
    ClientDataset,
    FederatedDataset,
    SyntheticSpec,
    generate_synthetic,
    load_embedding_csv,
    EmbeddingLoader,
)
from .prompt_engine import PromptVariant, PromptBank, FrozenTextMixer, PromptHyper, train_prompts
from .gate import GateMode, GateContext, PoolPartition, partition_pool
from .task_model import LinearProbe, ProbeHyper, train_local, fedavg_linear
from .acquisition import StrategyFactory
from .federation import (
    ExperimentConfig,
    ExperimentResult,
    FederatedSimulation,
    build_dataset,
    run_experiment,
)
from .config import ExperimentMatrix, parse_config
from .matrix_runner import run_matrix
from .manifest import PathSanitizer

__all__ = [
    'PromptGateError',
    'SchemaError',
    'ExperimentError',
    'Sample',
    'GroundTruth',
    'ClientDataset',
    'FederatedDataset',
    'SyntheticSpec',
    'generate_synthetic',
    'load_embedding_csv',
    'EmbeddingLoader',
    'PromptVariant',
    'PromptBank',
    'FrozenTextMixer',
    'PromptHyper',
    'train_prompts',
    'GateMode',
    'GateContext',
    'PoolPartition',
    'partition_pool',
    'LinearProbe',
    'ProbeHyper',
    'train_local',
    'fedavg_linear',
    'StrategyFactory',
    'ExperimentConfig',
    'ExperimentResult',
    'FederatedSimulation',
    'build_dataset',
    'run_experiment',
    'ExperimentMatrix',
    'parse_config',
    'run_matrix',
    'PathSanitizer',
]
