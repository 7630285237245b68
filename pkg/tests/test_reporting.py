"""Tests for result files, the summary table, manifests and the determinism audit."""
import json

import numpy as np
import pandas as pd
import pytest

from harness.config import parse_config
from harness.federation import run_experiment
from harness.gate import GateMode
from harness.manifest import PathSanitizer, read_manifest, write_manifest
from harness.matrix_runner import run_matrix
from harness.prompt_engine import load_prompt_bank
from harness.reporting import (
    ALL_CLIENTS,
    DETAIL_COLUMNS,
    QUERY_COLUMNS,
    ROUND_COLUMNS,
    collect_entries,
    last_round_scores,
    summarize,
    summary_markdown,
    summary_table,
)
from harness.reproducibility import compare_result_trees

TINY_MATRIX = """
experiment:
  name: tiny
  output_dir: results/tiny
  parallel: 1
  client_workers: {workers}
  log_partitions: true
matrix:
  gate_modes: [coldstart, mixed]
  strategies: [random, entropy]
  seeds: [0]
dataset:
  synthetic:
    num_clients: 2
    num_classes: 3
    num_ood_modes: 2
    dimension: 8
    seed_per_client: 12
    unlabeled_per_client: 60
    test_per_client: 30
    ood_ratio: [0.3, 0.4]
protocol:
  rounds: 2
  budget_per_round: 20
prompt:
  mixed_global_tokens: 2
  mixed_local_tokens: 2
  epochs: 2
  shot_cap: 32
  batch_size: 16
probe:
  epochs: 3
"""


def _read_rounds(path):
    return pd.read_csv(path, dtype={'client': str})


@pytest.fixture
def mixed_run(make_config, tmp_path):
    cfg = make_config()
    cfg.output_dir = tmp_path / "run"
    cfg.log_partitions = True
    return cfg, run_experiment(cfg)


# ----------------------------------------------------------------------
# Per-experiment files
# ----------------------------------------------------------------------

def test_experiment_files_and_columns(mixed_run):
    cfg, result = mixed_run
    out = cfg.output_dir
    for name in ("rounds.csv", "round_details.csv", "queries.csv", "partitions.csv",
                 "probe.npz", "prompt_bank.npz"):
        assert (out / name).exists(), name
    rounds = _read_rounds(out / "rounds.csv")
    assert list(rounds.columns) == ROUND_COLUMNS
    assert list(pd.read_csv(out / "round_details.csv").columns) == DETAIL_COLUMNS
    assert list(pd.read_csv(out / "queries.csv").columns) == QUERY_COLUMNS
    # 2 rounds x (2 clients + ALL)
    assert len(rounds) == 6
    assert (rounds['mode'] == "mixed").all()
    assert (rounds['variant'] == "2G-2L").all()
    bank = load_prompt_bank(out / "prompt_bank.npz")
    assert bank.global_tokens.shape == result.bank.global_tokens.shape


def test_macro_rows_average_clients(mixed_run):
    cfg, _ = mixed_run
    rounds = _read_rounds(cfg.output_dir / "rounds.csv")
    for round_idx, group in rounds.groupby('round'):
        clients = group[group['client'] != ALL_CLIENTS]
        macro = group[group['client'] == ALL_CLIENTS]
        assert len(macro) == 1
        for col in ('purity', 'bma', 'aqr'):
            expected = clients[col].mean()
            if np.isnan(expected):
                assert np.isnan(macro[col].iloc[0])
            else:
                assert macro[col].iloc[0] == pytest.approx(expected, rel=1e-4)


def test_metrics_recount_from_provenance(mixed_run):
    cfg, result = mixed_run
    out = cfg.output_dir
    rounds = _read_rounds(out / "rounds.csv")
    rounds = rounds[rounds['client'] != ALL_CLIENTS]
    queries = pd.read_csv(out / "queries.csv")
    partitions = pd.read_csv(out / "partitions.csv")
    num_classes = result.probe.num_classes

    ood = queries[queries['truth_kind'] != 'id']
    assert (ood['oracle_slot'] == num_classes).all()

    first = partitions[partitions['round'] == 1]
    initial_id = first[first['truth_kind'] == 'id'].groupby('client').size()
    for _, row in rounds.iterrows():
        r, k = int(row['round']), int(row['client'])
        picked = queries[(queries['round'] == r) & (queries['client'] == k)]
        if len(picked):
            assert row['qp'] == pytest.approx((picked['truth_kind'] == 'id').mean(), rel=1e-4)
        else:
            assert np.isnan(row['qp'])
        gated = partitions[(partitions['round'] == r) & (partitions['client'] == k) & (partitions['gated'] == 1)]
        if len(gated):
            assert row['purity'] == pytest.approx((gated['truth_kind'] == 'id').mean(), rel=1e-4)
        so_far = queries[(queries['round'] >= 1) & (queries['round'] <= r) & (queries['client'] == k)]
        hits = (so_far['truth_kind'] == 'id').sum()
        assert row['aqr'] == pytest.approx(hits / initial_id[k], rel=1e-4)


def test_coldstart_leaves_gate_cells_empty(make_config, tmp_path):
    cfg = make_config(GateMode.coldstart())
    cfg.output_dir = tmp_path / "cold"
    cfg.log_partitions = True
    run_experiment(cfg)
    details = pd.read_csv(cfg.output_dir / "round_details.csv")
    assert details['gate_id_bma'].isna().all()
    partitions = pd.read_csv(cfg.output_dir / "partitions.csv")
    assert (partitions['gated'] == 1).all()
    assert partitions['pseudo_label'].isna().all()
    assert not (cfg.output_dir / "prompt_bank.npz").exists()


def test_last_round_scores_reads_macro_row(mixed_run):
    cfg, _ = mixed_run
    rounds = _read_rounds(cfg.output_dir / "rounds.csv")
    scores = last_round_scores(rounds)
    macro = rounds[(rounds['client'] == ALL_CLIENTS) & (rounds['round'] == 2)].iloc[0]
    assert scores['bma'] == pytest.approx(macro['bma'])
    assert last_round_scores(rounds[rounds['client'] != ALL_CLIENTS]) == {'purity': None, 'bma': None}


# ----------------------------------------------------------------------
# Summary table
# ----------------------------------------------------------------------

def test_summary_table_cells_and_average():
    entries = [
        {'mode': 'static', 'strategy': 'random', 'seed': 0, 'purity': 0.9, 'bma': 0.8},
        {'mode': 'static', 'strategy': 'random', 'seed': 1, 'purity': 0.7, 'bma': 0.6},
        {'mode': 'static', 'strategy': 'kmeans', 'seed': 0, 'purity': 0.5, 'bma': 0.5},
        {'mode': 'mixed', 'strategy': 'random', 'seed': 0, 'purity': None, 'bma': 0.25},
    ]
    table = summary_table(entries, ['static', 'mixed'], ['random', 'entropy', 'kmeans'])
    assert list(table.columns) == ['mode', 'random', 'entropy', 'kmeans', 'Avg']
    static = table.iloc[0]
    assert static['random'] == "80.0 (70.0)"
    assert static['entropy'] == ""
    assert static['kmeans'] == "50.0 (50.0)"
    assert static['Avg'] == "65.0 (60.0)"
    mixed = table.iloc[1]
    assert mixed['random'] == "n/a (25.0)"
    assert mixed['Avg'] == "n/a (25.0)"


def test_summary_markdown_layout():
    table = summary_table(
        [{'mode': 'local', 'strategy': 'random', 'seed': 0, 'purity': 1.0, 'bma': 0.5}],
        ['local'], ['random'],
    )
    lines = summary_markdown(table, title="T").splitlines()
    assert lines[0] == "# T"
    assert lines[2] == "| mode | random | Avg |"
    assert lines[3] == "|---|---|---|"
    assert lines[4] == "| local | 100.0 (50.0) | 100.0 (50.0) |"


# ----------------------------------------------------------------------
# Matrix runs, manifest and determinism
# ----------------------------------------------------------------------

def _run_tiny(tmp_path, name, workers=1):
    path = tmp_path / f"{name}.yaml"
    path.write_text(TINY_MATRIX.format(workers=workers), encoding="utf-8")
    matrix = parse_config(path, output_root=tmp_path / name)
    return run_matrix(matrix, path, parallel=1), matrix


def test_run_matrix_writes_tree(tmp_path):
    status, matrix = _run_tiny(tmp_path, "a")
    root = matrix.output_root
    assert status == 0
    for cfg in matrix.experiments:
        assert (root / cfg.subdir / "rounds.csv").exists()
    summary = pd.read_csv(root / "summary.csv", keep_default_na=False)
    assert summary['mode'].tolist() == ['coldstart', 'mixed']
    assert list(summary.columns) == ['mode', 'random', 'entropy', 'Avg']
    assert (root / "summary.md").read_text(encoding="utf-8").startswith("# ")

    manifest = read_manifest(root)
    assert manifest['num_experiments'] == 4
    assert manifest['num_failed'] == 0
    assert manifest['config_hash'] == matrix.config_hash
    assert manifest['seeds'] == [0]
    assert {'numpy', 'pandas', 'scipy', 'scikit-learn'} <= set(manifest['versions'])
    assert [e['status'] for e in manifest['experiments']] == ['ok'] * 4

    entries = collect_entries(root)
    assert len(entries) == 4
    rebuilt = summarize(root, ['coldstart', 'mixed'], ['random', 'entropy'])
    assert rebuilt.shape == summary.shape
    assert rebuilt['mode'].tolist() == summary['mode'].tolist()


def test_reruns_and_client_workers_are_identical(tmp_path):
    _run_tiny(tmp_path, "a")
    _run_tiny(tmp_path, "b")
    _run_tiny(tmp_path, "c", workers=2)
    identical, report = compare_result_trees(tmp_path / "a", tmp_path / "b")
    assert identical, report
    identical, report = compare_result_trees(tmp_path / "a", tmp_path / "c")
    assert identical, report

    target = tmp_path / "b" / "mixed" / "random" / "seed0" / "rounds.csv"
    rounds = _read_rounds(target)
    rounds.loc[0, 'purity'] = -1.0
    rounds.to_csv(target, index=False)
    identical, report = compare_result_trees(tmp_path / "a", tmp_path / "b")
    assert not identical
    assert "mixed/random/seed0/rounds.csv" in report


def test_compare_reports_missing_files(tmp_path):
    _run_tiny(tmp_path, "a")
    (tmp_path / "empty").mkdir()
    identical, report = compare_result_trees(tmp_path / "a", tmp_path / "empty")
    assert not identical
    assert "only in" in report


def test_failed_experiment_is_recorded(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text(
        "matrix:\n  gate_modes: [coldstart]\n  seeds: [0]\n"
        "dataset:\n  source: import\n  samples_csv: /nonexistent/samples.csv\n",
        encoding="utf-8",
    )
    matrix = parse_config(path, output_root=tmp_path / "out")
    assert run_matrix(matrix, path, parallel=1) == 1
    manifest = read_manifest(tmp_path / "out")
    assert manifest['num_failed'] == 1
    assert manifest['experiments'][0]['status'] == 'failed'
    assert manifest['experiments'][0]['error']
    assert not (tmp_path / "out" / "summary.csv").exists()


def test_path_sanitizer(tmp_path):
    tmp_path = tmp_path.resolve()
    sanitizer = PathSanitizer(tmp_path)
    assert sanitizer.sanitize_path(tmp_path / "results" / "x.csv") == "results/x.csv"
    assert sanitizer.sanitize_path(tmp_path) == "."
    assert sanitizer.sanitize("/home/alice/data/file.csv") == "~/data/file.csv"
    nested = sanitizer.sanitize_dict({'a': [f"{tmp_path}/out", 3], 'b': None})
    assert nested == {'a': ["out", 3], 'b': None}


def test_manifest_round_trip(tmp_path):
    tmp_path = tmp_path.resolve()
    sanitizer = PathSanitizer(tmp_path)
    experiments = [
        {'mode': 'static', 'strategy': 'random', 'seed': 0, 'status': 'ok',
         'output_dir': str(tmp_path / "static/random/seed0")},
        {'mode': 'static', 'strategy': 'random', 'seed': 1, 'status': 'failed', 'error': "ValueError: x"},
    ]
    path = write_manifest(
        tmp_path, name="t", config_path=tmp_path / "configs" / "c.yaml", config_hash="ab" * 32,
        seeds=[0, 1], experiments=experiments, started_at="2026-01-01T00:00:00+00:00",
        wall_time_s=1.23456, sanitizer=sanitizer,
    )
    assert path.read_text(encoding="utf-8").endswith("}\n")
    manifest = read_manifest(tmp_path)
    assert manifest['config'] == "configs/c.yaml"
    assert manifest['num_failed'] == 1
    assert manifest['wall_time_s'] == 1.235
    assert manifest['experiments'][0]['output_dir'] == "static/random/seed0"
    assert json.loads(path.read_text(encoding="utf-8")) == manifest
