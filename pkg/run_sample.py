#!/usr/bin/env python3
"""
Sample run: parse configs/sample.yaml, run its small matrix, print the summary.
Run from repo root:  python run_sample.py
Results are written to results/sample/.
"""
import logging
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent
sys.path.insert(0, str(ROOT))

import pandas as pd
from harness import parse_config, run_matrix


def main():
    logging.basicConfig(level=logging.WARNING, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    config_path = ROOT / "configs" / "sample.yaml"
    matrix = parse_config(config_path, output_root=ROOT / "results" / "sample")
    print(f"Running {len(matrix.experiments)} experiments "
          f"({', '.join(matrix.gate_modes)} x {', '.join(matrix.strategies)})...")

    status = run_matrix(matrix, config_path=config_path)
    if status != 0:
        print("  ERROR: some experiments failed, see results/sample/manifest.json")
        return status

    summary_path = matrix.output_root / "summary.csv"
    print(f"  Success. Results written to {matrix.output_root.relative_to(ROOT)}/")
    print("\nLast-round purity (BMA), %:")
    print(pd.read_csv(summary_path).to_string(index=False))

    first = matrix.experiments[0].output_dir / "rounds.csv"
    rounds = pd.read_csv(first, dtype={'client': str})
    macro = rounds[rounds['client'] == 'ALL']
    print(f"\n  {matrix.experiments[0].subdir.as_posix()} per round:")
    print(macro[["round", "qp", "aqr", "purity", "bma", "ood_recall"]].to_string(index=False))
    print("\nDone.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
