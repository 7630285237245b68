import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from harness.embedding_space import SyntheticSpec, generate_synthetic
from harness.federation import DatasetConfig, ExperimentConfig, ProtocolConfig
from harness.gate import GateMode
from harness.prompt_engine import PromptHyper, PromptVariant
from harness.task_model import ProbeHyper


@pytest.fixture
def repo_root() -> Path:
    return ROOT


@pytest.fixture
def example_import_dir() -> Path:
    return ROOT / "data" / "example_import"


@pytest.fixture
def small_spec() -> SyntheticSpec:
    return SyntheticSpec(
        num_clients=2,
        num_classes=3,
        num_ood_modes=2,
        dimension=8,
        seed_per_client=12,
        unlabeled_per_client=60,
        test_per_client=30,
        ood_ratio=[0.3, 0.4],
    )


@pytest.fixture
def small_dataset(small_spec):
    return generate_synthetic(small_spec, seed=0)


@pytest.fixture
def make_config(small_spec):
    """Factory for a fast experiment on the small synthetic benchmark."""
    def _make(mode: GateMode = None, strategy: str = 'random', seed: int = 0, **protocol) -> ExperimentConfig:
        options = dict(rounds=2, budget_per_round=20)
        options.update(protocol)
        return ExperimentConfig(
            gate_mode=mode or GateMode.dynamic(PromptVariant.mixed(2, 2)),
            strategy=strategy,
            seed=seed,
            dataset=DatasetConfig(synthetic=small_spec),
            protocol=ProtocolConfig(**options),
            prompt=PromptHyper(epochs=2, shot_cap=32, batch_size=16),
            probe=ProbeHyper(epochs=3),
        )
    return _make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
