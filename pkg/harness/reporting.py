"""
Result files: per-round CSVs, provenance CSVs, checkpoints and the
last-round summary table (rows = gate modes, columns = strategies).
"""
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .prompt_engine import save_prompt_bank
from .task_model import save_probe

if TYPE_CHECKING:
    from .federation import ExperimentResult

logger = logging.getLogger(__name__)

ROUND_COLUMNS = [
    'round', 'client', 'mode', 'variant', 'strategy', 'seed',
    'qp', 'aqr', 'purity', 'bma', 'gate_binary_acc', 'ood_recall',
    'gated_size', 'exploration_size', 'prompt_loss_final', 'probe_loss_final',
]
DETAIL_COLUMNS = [
    'round', 'client', 'budget', 'queried', 'gate_id_bma', 'exploration_leakage',
    'labeled_size', 'ood_store_size', 'unlabeled_size',
]
QUERY_COLUMNS = ['round', 'client', 'sample_id', 'truth_kind', 'truth_index', 'oracle_slot']
PARTITION_COLUMNS = ['round', 'client', 'sample_id', 'gated', 'pseudo_label', 'confidence', 'truth_kind']

# 6 significant digits, '\n' endings: byte-identical files for identical runs
CSV_OPTIONS = dict(index=False, float_format='%.6g', lineterminator='\n')

ALL_CLIENTS = 'ALL'


def write_csv(df: pd.DataFrame, path: Path) -> Path:
    df.to_csv(path, **CSV_OPTIONS)
    return path


def _with_macro_rows(df: pd.DataFrame, metric_columns: Sequence[str]) -> pd.DataFrame:
    """Append one client=ALL row per round holding the mean over clients (absent cells skipped)."""
    frames = []
    for round_idx, group in df.groupby('round', sort=True):
        macro = group.iloc[[0]].copy()
        macro['client'] = ALL_CLIENTS
        for col in metric_columns:
            macro[col] = pd.to_numeric(group[col], errors='coerce').mean()
        frames.append(pd.concat([group, macro]))
    return pd.concat(frames, ignore_index=True) if frames else df


def rounds_frame(result: "ExperimentResult") -> pd.DataFrame:
    cfg = result.config
    variant = cfg.variant.label if cfg.variant is not None else 'none'
    rows = []
    for report in result.reports:
        for rec in report.clients:
            rows.append({
                'round': report.round,
                'client': str(rec.client_id),
                'mode': cfg.gate_mode.name,
                'variant': variant,
                'strategy': cfg.strategy,
                'seed': cfg.seed,
                'qp': rec.qp,
                'aqr': rec.aqr,
                'purity': rec.purity,
                'bma': rec.bma,
                'gate_binary_acc': rec.gate_binary_acc,
                'ood_recall': rec.ood_recall,
                'gated_size': rec.gated_size,
                'exploration_size': rec.exploration_size,
                'prompt_loss_final': rec.prompt_loss_final,
                'probe_loss_final': rec.probe_loss_final,
            })
    df = pd.DataFrame(rows, columns=ROUND_COLUMNS)
    return _with_macro_rows(df, ROUND_COLUMNS[6:])


def details_frame(result: "ExperimentResult") -> pd.DataFrame:
    rows = []
    for report in result.reports:
        for rec in report.clients:
            rows.append({
                'round': report.round,
                'client': str(rec.client_id),
                'budget': rec.budget,
                'queried': len(rec.queries),
                'gate_id_bma': rec.gate_id_bma,
                'exploration_leakage': rec.leakage,
                'labeled_size': rec.labeled_size,
                'ood_store_size': rec.ood_store_size,
                'unlabeled_size': rec.unlabeled_size,
            })
    return pd.DataFrame(rows, columns=DETAIL_COLUMNS)


def queries_frame(result: "ExperimentResult") -> pd.DataFrame:
    """Every oracle call; warm-up OOD shots appear as round 0."""
    num_classes = result.probe.num_classes
    rows = []

    def add(round_idx, client, samples):
        for s in samples:
            rows.append({
                'round': round_idx,
                'client': client,
                'sample_id': s.sample_id,
                'truth_kind': s.truth.kind,
                'truth_index': s.truth.index,
                'oracle_slot': s.truth.index if s.truth.is_id else num_classes,
            })

    for client, samples in sorted(result.warmup_queries.items()):
        add(0, client, samples)
    for report in result.reports:
        for rec in report.clients:
            add(report.round, rec.client_id, rec.queries)
    return pd.DataFrame(rows, columns=QUERY_COLUMNS)


def partitions_frame(result: "ExperimentResult") -> pd.DataFrame:
    rows = []
    for report in result.reports:
        for rec in report.clients:
            part = rec.partition
            if part is None:
                continue
            for gated, side in ((True, part.gated), (False, part.exploration)):
                for s in side:
                    rows.append({
                        'round': report.round,
                        'client': rec.client_id,
                        'sample_id': s.sample_id,
                        'gated': int(gated),
                        'pseudo_label': part.pseudo_labels.get(s.sample_id),
                        'confidence': part.confidences.get(s.sample_id),
                        'truth_kind': s.truth.kind,
                    })
    df = pd.DataFrame(rows, columns=PARTITION_COLUMNS)
    df['pseudo_label'] = df['pseudo_label'].astype('Int64')
    return df.sort_values(['round', 'client', 'sample_id'], kind='stable', ignore_index=True)


def write_experiment_outputs(result: "ExperimentResult", out_dir: Path) -> Dict[str, Path]:
    """
    Write one experiment's files into out_dir.

    Returns:
        {name: path} of everything written
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {
        'rounds': write_csv(rounds_frame(result), out_dir / 'rounds.csv'),
        'round_details': write_csv(details_frame(result), out_dir / 'round_details.csv'),
        'queries': write_csv(queries_frame(result), out_dir / 'queries.csv'),
        'probe': save_probe(result.probe, out_dir / 'probe.npz'),
    }
    if result.config.log_partitions:
        written['partitions'] = write_csv(partitions_frame(result), out_dir / 'partitions.csv')
    if result.bank is not None:
        written['prompt_bank'] = save_prompt_bank(result.bank, out_dir / 'prompt_bank.npz')
    logger.info(f"Results written: {out_dir}")
    return written


# ----------------------------------------------------------------------
# Summary table
# ----------------------------------------------------------------------

def last_round_scores(rounds: pd.DataFrame) -> Dict[str, Optional[float]]:
    """Purity and BMA of the client=ALL row of the final round."""
    macro = rounds[rounds['client'].astype(str) == ALL_CLIENTS]
    if macro.empty:
        return {'purity': None, 'bma': None}
    last = macro[macro['round'] == macro['round'].max()].iloc[0]
    return {k: (None if pd.isna(last[k]) else float(last[k])) for k in ('purity', 'bma')}


def _cell(purity: Optional[float], bma: Optional[float]) -> str:
    def pct(v):
        return 'n/a' if v is None or np.isnan(v) else f"{100 * v:.1f}"
    return f"{pct(purity)} ({pct(bma)})"


def _mean(values: List[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None and not np.isnan(v)]
    return float(np.mean(present)) if present else None


def summary_table(
    entries: Sequence[Dict],
    mode_order: Sequence[str],
    strategy_order: Sequence[str],
) -> pd.DataFrame:
    """
    Last-round table: one row per gate mode, one column per strategy plus Avg.

    Args:
        entries: dicts with mode, strategy, seed, purity, bma
        mode_order / strategy_order: row and column order

    Returns:
        DataFrame of "purity (bma)" cells in percent; seeds averaged per cell,
        Avg averages the strategy cells
    """
    df = pd.DataFrame(list(entries), columns=['mode', 'strategy', 'seed', 'purity', 'bma'])
    rows = []
    for mode in mode_order:
        row = {'mode': mode}
        purities, bmas = [], []
        for strategy in strategy_order:
            cell = df[(df['mode'] == mode) & (df['strategy'] == strategy)]
            p = _mean(cell['purity'].tolist())
            b = _mean(cell['bma'].tolist())
            row[strategy] = _cell(p, b) if len(cell) else ''
            if len(cell):
                purities.append(p)
                bmas.append(b)
        row['Avg'] = _cell(_mean(purities), _mean(bmas))
        rows.append(row)
    return pd.DataFrame(rows, columns=['mode'] + list(strategy_order) + ['Avg'])


def summary_markdown(table: pd.DataFrame, title: str = "Last-round purity (BMA), %") -> str:
    columns = list(table.columns)
    lines = [
        f"# {title}",
        "",
        "| " + " | ".join(columns) + " |",
        "|" + "|".join(["---"] * len(columns)) + "|",
    ]
    for _, row in table.iterrows():
        lines.append("| " + " | ".join(str(row[c]) for c in columns) + " |")
    return "\n".join(lines) + "\n"


def write_summary(table: pd.DataFrame, out_dir: Path) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    csv_path = write_csv(table, out_dir / 'summary.csv')
    md_path = out_dir / 'summary.md'
    with open(md_path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(summary_markdown(table))
    logger.info(f"Summary saved: {csv_path}")
    return {'summary_csv': csv_path, 'summary_md': md_path}


def collect_entries(results_dir: Path) -> List[Dict]:
    """Scan <mode>/<strategy>/seed<n>/rounds.csv under a results tree."""
    results_dir = Path(results_dir)
    entries = []
    for path in sorted(results_dir.glob('*/*/seed*/rounds.csv')):
        rounds = pd.read_csv(path, dtype={'client': str})
        scores = last_round_scores(rounds)
        entries.append({
            'mode': path.parent.parent.parent.name,
            'strategy': path.parent.parent.name,
            'seed': int(path.parent.name[len('seed'):]),
            **scores,
        })
    return entries


def summarize(results_dir: Path, mode_order: Sequence[str] = None, strategy_order: Sequence[str] = None) -> pd.DataFrame:
    """Rebuild summary.csv / summary.md from the per-experiment rounds.csv files."""
    entries = collect_entries(results_dir)
    if not entries:
        raise FileNotFoundError(f"no */*/seed*/rounds.csv under {results_dir}")
    modes = list(mode_order) if mode_order else sorted({e['mode'] for e in entries})
    strategies = list(strategy_order) if strategy_order else sorted({e['strategy'] for e in entries})
    table = summary_table(entries, modes, strategies)
    write_summary(table, results_dir)
    return table
