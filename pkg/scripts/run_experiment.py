"""
PromptGate experiment CLI.

Usage:
  python scripts/run_experiment.py run configs/experiment.yaml
  python scripts/run_experiment.py run configs/sample.yaml --seed-override 0 --parallel 4 --out results/sample
  python scripts/run_experiment.py validate configs/experiment.yaml
  python scripts/run_experiment.py summarize results/promptgate
  python scripts/run_experiment.py compare results/run_a results/run_b
"""
import argparse
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from harness import PromptGateError, build_dataset, parse_config, run_matrix
from harness.manifest import read_manifest
from harness.reporting import summarize
from harness.reproducibility import compare_result_trees

logger = logging.getLogger(__name__)


def cmd_run(args) -> int:
    matrix = parse_config(args.config, seed_override=args.seed_override, output_root=args.out)
    return run_matrix(matrix, config_path=Path(args.config), parallel=args.parallel)


def cmd_validate(args) -> int:
    matrix = parse_config(args.config, seed_override=args.seed_override, output_root=args.out)
    print(f"Config OK: {len(matrix.experiments)} experiments "
          f"({len(matrix.gate_modes)} modes x {len(matrix.strategies)} strategies x {len(matrix.seeds)} seeds)")
    print(f"Config hash: {matrix.config_hash}")
    for cfg in matrix.experiments:
        print(f"  {cfg.subdir.as_posix()}")

    first = matrix.experiments[0]
    dataset = build_dataset(first.dataset, first.seed)
    checks = dataset.validate_quality()
    print(f"Dataset {dataset.source}: K={dataset.num_clients} C={dataset.num_classes} D={dataset.dimension}")
    for name, passed in checks.items():
        print(f"  [{'OK' if passed else 'FAIL'}] {name}")
    for client in dataset.clients:
        print(f"  client {client.client_id}: {len(client.labeled)} seed, {len(client.unlabeled)} unlabeled "
              f"(OOD {client.ood_ratio_actual:.3f}), {len(client.test)} test")
    return 0 if all(checks.values()) else 1


def cmd_summarize(args) -> int:
    results_dir = Path(args.results_dir)
    modes, strategies = None, None
    if (results_dir / "manifest.json").exists():
        experiments = read_manifest(results_dir)["experiments"]
        modes = list(dict.fromkeys(e["mode"] for e in experiments))
        strategies = list(dict.fromkeys(e["strategy"] for e in experiments))
    table = summarize(results_dir, modes, strategies)
    print(table.to_string(index=False))
    return 0


def cmd_compare(args) -> int:
    identical, report = compare_result_trees(Path(args.dir_a), Path(args.dir_b))
    print(report)
    return 0 if identical else 1


def main():
    parser = argparse.ArgumentParser(description='PromptGate open-set federated active learning simulator')
    sub = parser.add_subparsers(dest='command', required=True)

    for name, helptext in (('run', 'Run an experiment matrix'), ('validate', 'Check a config and its dataset')):
        p = sub.add_parser(name, help=helptext)
        p.add_argument('config', help='YAML config file')
        p.add_argument('--seed-override', type=int, help='Run a single seed instead of matrix.seeds')
        p.add_argument('--parallel', type=int, help='Experiments to run at once (default: experiment.parallel)')
        p.add_argument('--out', type=Path, help='Output root (default: experiment.output_dir)')

    p = sub.add_parser('summarize', help='Rebuild summary.csv/summary.md from a results tree')
    p.add_argument('results_dir')

    p = sub.add_parser('compare', help='Byte-compare the CSVs of two results trees')
    p.add_argument('dir_a')
    p.add_argument('dir_b')

    args = parser.parse_args()

    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )

    commands = {'run': cmd_run, 'validate': cmd_validate, 'summarize': cmd_summarize, 'compare': cmd_compare}
    try:
        status = commands[args.command](args)
    except (PromptGateError, FileNotFoundError) as e:
        logger.error(str(e))
        status = 2
    sys.exit(status)


if __name__ == "__main__":
    main()
