"""
Run manifest: config hash, seeds, library versions, wall time and failures,
with local paths stripped before anything is written to disk.
"""
import json
import logging
import platform
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd
import scipy
import sklearn
import yaml

logger = logging.getLogger(__name__)


class PathSanitizer:
    """Make paths workspace-relative, or replace the home directory with '~'."""

    def __init__(self, workspace_root: Path = None):
        self.workspace_root = Path(workspace_root or Path.cwd()).resolve()
        self.home_dir = str(Path.home())
        self.rules = [
            (re.compile(re.escape(str(self.workspace_root)) + r'/?'), ''),
            (re.compile(re.escape(self.home_dir)), '~'),
            (re.compile(r'/(?:home|Users)/[^/\s]+'), '~'),
        ]

    def sanitize(self, text: str) -> str:
        if not text:
            return text
        for pattern, replacement in self.rules:
            text = pattern.sub(replacement, text)
        return text or '.'

    def sanitize_path(self, path) -> str:
        path = Path(path)
        try:
            return path.resolve().relative_to(self.workspace_root).as_posix() or '.'
        except ValueError:
            return self.sanitize(str(path))

    def sanitize_dict(self, data: Any) -> Any:
        """Recursively sanitize every string in nested dicts and lists."""
        if isinstance(data, dict):
            return {k: self.sanitize_dict(v) for k, v in data.items()}
        if isinstance(data, list):
            return [self.sanitize_dict(v) for v in data]
        if isinstance(data, str):
            return self.sanitize(data)
        return data


def library_versions() -> Dict[str, str]:
    return {
        'python': platform.python_version(),
        'numpy': np.__version__,
        'pandas': pd.__version__,
        'scipy': scipy.__version__,
        'scikit-learn': sklearn.__version__,
        'pyyaml': yaml.__version__,
    }


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


def write_manifest(
    out_dir: Path,
    *,
    name: str,
    config_path: Path,
    config_hash: str,
    seeds: List[int],
    experiments: List[Dict[str, Any]],
    started_at: str,
    wall_time_s: float,
    sanitizer: PathSanitizer = None,
) -> Path:
    """
    Write manifest.json for a matrix run.

    experiments: one dict per experiment (mode, strategy, seed, output dir,
    status, wall time, error message when failed).
    """
    sanitizer = sanitizer or PathSanitizer()
    failures = [e for e in experiments if e.get('status') != 'ok']
    manifest = {
        'name': name,
        'config': sanitizer.sanitize_path(config_path),
        'config_hash': config_hash,
        'seeds': list(seeds),
        'versions': library_versions(),
        'started_at': started_at,
        'finished_at': utc_now(),
        'wall_time_s': round(wall_time_s, 3),
        'num_experiments': len(experiments),
        'num_failed': len(failures),
        'experiments': sanitizer.sanitize_dict(experiments),
    }
    path = Path(out_dir) / 'manifest.json'
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(manifest, f, indent=2)
        f.write('\n')
    logger.info(f"Manifest saved: {path}")
    return path


def read_manifest(out_dir: Path) -> Dict[str, Any]:
    with open(Path(out_dir) / 'manifest.json', 'r', encoding='utf-8') as f:
        return json.load(f)
