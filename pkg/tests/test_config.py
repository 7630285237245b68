"""Tests for the strict YAML config layer and matrix expansion."""
from pathlib import Path

import pytest

from harness.config import config_hash, parse_config
from harness.errors import SchemaError

SMALL = """
experiment:
  name: tiny
  output_dir: {out}
  parallel: {parallel}
matrix:
  gate_modes: [coldstart, static]
  strategies: [random]
  seeds: [0, 1]
protocol:
  rounds: 2
  budget_per_round: 10
  tau: {tau}
"""


def _write(tmp_path, text, name="config.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_full_grid_expands_in_order(repo_root):
    matrix = parse_config(repo_root / "configs" / "experiment.yaml")
    assert len(matrix.experiments) == 6 * 3 * 3
    assert matrix.gate_modes == ["coldstart", "upper_bound", "static", "mixed", "global", "local"]
    subdirs = [cfg.subdir.as_posix() for cfg in matrix.experiments]
    assert subdirs[:4] == ["coldstart/random/seed0", "coldstart/random/seed1",
                           "coldstart/random/seed2", "coldstart/entropy/seed0"]
    assert subdirs[-1] == "local/kmeans/seed2"
    assert len(matrix.config_hash) == 64
    mixed = next(cfg for cfg in matrix.experiments if cfg.gate_mode.name == "mixed")
    assert mixed.variant.label == "8G-8L"
    assert mixed.prompt.lr == pytest.approx(0.1)
    assert mixed.protocol.tau == pytest.approx(0.07)
    assert mixed.output_dir == Path("results/promptgate") / "mixed/random/seed0"


def test_seed_override_and_output_root(repo_root, tmp_path):
    matrix = parse_config(repo_root / "configs" / "experiment.yaml", seed_override=5, output_root=tmp_path)
    assert len(matrix.experiments) == 18
    assert {cfg.seed for cfg in matrix.experiments} == {5}
    assert matrix.experiments[0].output_dir == tmp_path / "coldstart/random/seed5"
    with pytest.raises(SchemaError):
        parse_config(repo_root / "configs" / "experiment.yaml", seed_override=-1)


@pytest.mark.parametrize("name", ["experiment.yaml", "sample.yaml", "import.yaml"])
def test_bundled_configs_parse(repo_root, name):
    matrix = parse_config(repo_root / "configs" / name)
    assert matrix.experiments


def test_import_paths_resolve_against_repo_root(repo_root):
    matrix = parse_config(repo_root / "configs" / "import.yaml")
    dataset = matrix.experiments[0].dataset
    assert Path(dataset.manifest) == (repo_root / "configs" / "data_manifest.yaml").resolve()
    assert Path(dataset.manifest).exists()


def test_empty_config_uses_defaults(tmp_path):
    matrix = parse_config(_write(tmp_path, ""))
    assert [cfg.subdir.as_posix() for cfg in matrix.experiments] == [
        "mixed/random/seed0", "mixed/random/seed1", "mixed/random/seed2"]
    assert matrix.experiments[0].protocol.rounds == 5


def test_annotated_scalars_unwrap(tmp_path):
    text = "prompt:\n  lr: {value: 0.01, description: \"prompt learning rate\"}\n"
    matrix = parse_config(_write(tmp_path, text))
    assert matrix.experiments[0].prompt.lr == pytest.approx(0.01)


@pytest.mark.parametrize("text,key_path,line", [
    ("protocol:\n  rounds: 3\n  budgt: 5\n", "protocol.budgt", 3),
    ("protocol:\n  rounds: five\n", "protocol.rounds", 2),
    ("protocol:\n  ood_warmup: 1\n", "protocol.ood_warmup", 2),
    ("protocols:\n  rounds: 3\n", "protocols", 1),
    ("matrix:\n  gate_modes: [static, fancy]\n", "matrix.gate_modes[1]", 2),
    ("matrix:\n  strategies: [random, random]\n", "matrix.strategies", 2),
    ("dataset:\n  synthetic:\n    num_clients: 3\n", "dataset.synthetic", 2),
    ("protocol:\n  tau: 0\n", "protocol.tau", 2),
])
def test_schema_errors_name_key_and_line(tmp_path, text, key_path, line):
    with pytest.raises(SchemaError) as exc:
        parse_config(_write(tmp_path, text))
    assert exc.value.key_path == key_path
    assert exc.value.line == line
    assert key_path in str(exc.value)


def test_broken_yaml(tmp_path):
    with pytest.raises(SchemaError):
        parse_config(_write(tmp_path, "protocol: [1, 2\n"))
    with pytest.raises(SchemaError):
        parse_config(_write(tmp_path, "- 1\n- 2\n"))
    with pytest.raises(FileNotFoundError):
        parse_config(tmp_path / "missing.yaml")


def test_hash_ignores_non_semantic_keys(tmp_path):
    a = parse_config(_write(tmp_path, SMALL.format(out="a", parallel=1, tau=0.07), "a.yaml"))
    b = parse_config(_write(tmp_path, SMALL.format(out="b", parallel=8, tau=0.07), "b.yaml"))
    c = parse_config(_write(tmp_path, SMALL.format(out="a", parallel=1, tau=0.1), "c.yaml"))
    assert a.config_hash == b.config_hash
    assert a.config_hash != c.config_hash
    assert config_hash(a.sections) == a.config_hash
