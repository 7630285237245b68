"""
Directional trend checks on the full synthetic benchmark.

Slow: deselected by default, run with `pytest -m slow`.
"""
import dataclasses

import numpy as np
import pytest

from harness.config import parse_config
from harness.federation import run_experiment
from harness.metrics import macro_average

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


@pytest.fixture(scope="module")
def benchmark(request):
    root = request.config.rootpath
    matrix = parse_config(root / "configs" / "experiment.yaml")
    by_mode = {}
    for cfg in matrix.experiments:
        if cfg.strategy == "random" and cfg.seed == 0:
            by_mode[cfg.gate_mode.name] = cfg
    return by_mode


def _run(cfg, seed, **changes):
    protocol = dataclasses.replace(cfg.protocol, **changes.pop('protocol', {}))
    cfg = dataclasses.replace(cfg, seed=seed, protocol=protocol, output_dir=None, **changes)
    return run_experiment(cfg)


def _macro(result, round_idx, metric):
    report = result.reports[round_idx - 1]
    return macro_average([getattr(rec, metric) for rec in report.clients])


def test_dynamic_gate_recovers_purity(benchmark):
    mixed = [_run(benchmark["mixed"], s) for s in SEEDS]
    static = [_run(benchmark["static"], s) for s in SEEDS]
    cold = [_run(benchmark["coldstart"], s) for s in SEEDS]
    last = benchmark["mixed"].protocol.rounds

    assert np.mean([_macro(r, last, "purity") for r in mixed]) >= 0.90
    assert np.mean([_macro(r, last, "ood_recall") for r in mixed]) >= 0.90

    static_first = np.mean([_macro(r, 1, "purity") for r in static])
    static_last = np.mean([_macro(r, last, "purity") for r in static])
    assert 0.55 <= static_first <= 0.80
    assert abs(static_last - static_first) <= 0.05
    assert static_last > np.mean([_macro(r, last, "purity") for r in cold])


def test_local_tokens_hold_up_under_client_specific_ood(benchmark):
    def shifted(cfg):
        synthetic = dataclasses.replace(cfg.dataset.synthetic, exclusive_ood_modes=True)
        return dataclasses.replace(cfg, dataset=dataclasses.replace(cfg.dataset, synthetic=synthetic))

    local_cfg, global_cfg = shifted(benchmark["local"]), shifted(benchmark["global"])
    last = local_cfg.protocol.rounds
    local = np.mean([_macro(_run(local_cfg, s), last, "purity") for s in SEEDS])
    global_ = np.mean([_macro(_run(global_cfg, s), last, "purity") for s in SEEDS])
    assert local >= global_ - 0.02


def test_warmup_lifts_first_round_ood_recall(benchmark):
    cfg = benchmark["mixed"]
    cold = [_run(cfg, s) for s in SEEDS]
    warm = [_run(cfg, s, protocol={'warmup_shots': 128, 'ood_warmup': True}) for s in SEEDS]
    gain = np.mean([_macro(r, 1, "ood_recall") for r in warm]) - np.mean([_macro(r, 1, "ood_recall") for r in cold])
    assert gain >= 0.10
