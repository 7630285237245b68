"""
Determinism audit: compare the CSV outputs of two result trees.
"""
import logging
from pathlib import Path
from typing import Dict, List, Tuple

import pandas as pd

logger = logging.getLogger(__name__)

COMPARED_FILES = ('rounds.csv', 'round_details.csv', 'queries.csv', 'partitions.csv', 'summary.csv')


def _csv_files(root: Path) -> Dict[str, Path]:
    root = Path(root)
    return {
        p.relative_to(root).as_posix(): p
        for p in sorted(root.rglob('*.csv'))
        if p.name in COMPARED_FILES
    }


def generate_diff_report(df1: pd.DataFrame, df2: pd.DataFrame, label: str = "") -> str:
    """Human-readable row/column differences between two tables."""
    report = [f"{label} differs:" if label else "Tables differ:"]
    if len(df1) != len(df2):
        report.append(f"- Row count: {len(df1)} vs {len(df2)}")
    if list(df1.columns) != list(df2.columns):
        report.append(f"- Columns: {list(df1.columns)} vs {list(df2.columns)}")
    n = min(len(df1), len(df2))
    for col in [c for c in df1.columns if c in df2.columns]:
        a, b = df1[col].iloc[:n].reset_index(drop=True), df2[col].iloc[:n].reset_index(drop=True)
        diff_mask = ~((a == b) | (a.isna() & b.isna()))
        if diff_mask.any():
            report.append(f"- Column '{col}' differs in {int(diff_mask.sum())} rows")
            for idx in diff_mask[diff_mask].index[:3]:
                report.append(f"  Row {idx}: {a.iloc[idx]} vs {b.iloc[idx]}")
    return "\n".join(report)


def compare_result_trees(dir_a: Path, dir_b: Path) -> Tuple[bool, str]:
    """
    Byte-compare every result CSV present in either tree.

    Returns:
        (identical, report)
    """
    files_a, files_b = _csv_files(dir_a), _csv_files(dir_b)
    lines: List[str] = []
    for rel in sorted(set(files_a) - set(files_b)):
        lines.append(f"only in {dir_a}: {rel}")
    for rel in sorted(set(files_b) - set(files_a)):
        lines.append(f"only in {dir_b}: {rel}")

    identical_count = 0
    for rel in sorted(set(files_a) & set(files_b)):
        if files_a[rel].read_bytes() == files_b[rel].read_bytes():
            identical_count += 1
            continue
        df1 = pd.read_csv(files_a[rel], dtype=str, keep_default_na=False)
        df2 = pd.read_csv(files_b[rel], dtype=str, keep_default_na=False)
        lines.append(generate_diff_report(df1, df2, rel))

    if not files_a and not files_b:
        lines.append("no result CSVs found in either tree")
    identical = not lines
    summary = f"{identical_count} identical file(s)"
    if identical:
        logger.info(f"Determinism check passed: {summary}")
        return True, f"Results are identical ({summary})"
    logger.warning("Determinism check failed")
    return False, "\n".join([summary] + lines)
