"""
Experiment-matrix execution: runs every (gate mode, strategy, seed)
expansion, then writes the summary table and the manifest.
"""
import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List, Optional

from tqdm import tqdm

from .config import ExperimentMatrix
from .federation import ExperimentConfig, run_experiment
from .manifest import PathSanitizer, utc_now, write_manifest
from .reporting import last_round_scores, rounds_frame, summary_table, write_summary

logger = logging.getLogger(__name__)


def run_one(config: ExperimentConfig) -> Dict[str, Any]:
    """Run one expansion; failures are caught and reported, never raised."""
    entry = {
        'mode': config.gate_mode.name,
        'variant': config.variant.label if config.variant is not None else 'none',
        'strategy': config.strategy,
        'seed': config.seed,
        'output_dir': str(config.output_dir),
    }
    start = time.perf_counter()
    try:
        result = run_experiment(config)
        entry.update(status='ok', **last_round_scores(rounds_frame(result)))
    except Exception as e:
        logger.error(f"Experiment {config.subdir.as_posix()} failed: {e}", exc_info=True)
        entry.update(status='failed', error=f"{type(e).__name__}: {e}", purity=None, bma=None)
    entry['wall_time_s'] = round(time.perf_counter() - start, 3)
    return entry


def run_matrix(
    matrix: ExperimentMatrix,
    config_path: Optional[Path] = None,
    parallel: Optional[int] = None,
) -> int:
    """
    Run all experiments (up to `parallel` at once) and write summary + manifest.

    Returns:
        process exit status: 0 when every experiment succeeded, 1 otherwise
    """
    root = Path(matrix.output_root)
    root.mkdir(parents=True, exist_ok=True)
    workers = parallel or matrix.parallel
    started_at, t0 = utc_now(), time.perf_counter()
    logger.info(f"Running {len(matrix.experiments)} experiments with {workers} worker(s) into {root}")

    entries: List[Optional[Dict[str, Any]]] = [None] * len(matrix.experiments)
    if workers <= 1:
        for i, cfg in enumerate(tqdm(matrix.experiments, desc="experiments")):
            entries[i] = run_one(cfg)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_one, cfg): i for i, cfg in enumerate(matrix.experiments)}
            for future in tqdm(as_completed(futures), total=len(futures), desc="experiments"):
                entries[futures[future]] = future.result()

    ok = [e for e in entries if e['status'] == 'ok']
    if ok:
        write_summary(summary_table(ok, matrix.gate_modes, matrix.strategies), root)

    write_manifest(
        root,
        name=matrix.name,
        config_path=config_path or Path('<inline>'),
        config_hash=matrix.config_hash,
        seeds=matrix.seeds,
        experiments=entries,
        started_at=started_at,
        wall_time_s=time.perf_counter() - t0,
        sanitizer=PathSanitizer(),
    )
    failed = len(entries) - len(ok)
    if failed:
        logger.error(f"{failed}/{len(entries)} experiments failed")
        return 1
    logger.info(f"All {len(entries)} experiments completed")
    return 0
