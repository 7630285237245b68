"""
Strict YAML experiment configuration.

Every key is checked against a schema built from the dataclass defaults;
unknown, missing-section or ill-typed keys raise SchemaError with the dotted
key path and the YAML line. Scalars may be written bare or annotated:

    lr: 0.002
    lr: {value: 0.002, description: "prompt learning rate"}
"""
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union, get_args, get_origin, get_type_hints

import yaml

from .acquisition import StrategyFactory
from .embedding_space import SyntheticSpec
from .errors import InvalidSpecError, SchemaError
from .federation import DatasetConfig, ExperimentConfig, ProtocolConfig
from .gate import GateMode
from .prompt_engine import PromptHyper, PromptVariant
from .task_model import ProbeHyper

logger = logging.getLogger(__name__)

GATE_MODE_NAMES = ('coldstart', 'upper_bound', 'static', 'mixed', 'global', 'local')

DEFAULT_SEEDS = [0, 1, 2]


@dataclass
class ExperimentSection:
    name: str = 'promptgate'
    output_dir: str = 'results'
    parallel: int = 1
    client_workers: int = 1
    log_partitions: bool = False


@dataclass
class MatrixSection:
    gate_modes: List[str] = field(default_factory=lambda: ['mixed'])
    strategies: List[str] = field(default_factory=lambda: ['random'])
    seeds: List[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))


@dataclass
class DatasetSection:
    source: str = 'synthetic'
    seed: Optional[int] = None
    manifest: Optional[str] = None
    dataset_id: Optional[str] = None
    samples_csv: Optional[str] = None
    anchors_csv: Optional[str] = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)


@dataclass
class PromptSection:
    mixed_global_tokens: int = 8
    mixed_local_tokens: int = 8
    global_tokens: int = 16
    local_tokens: int = 16
    lr: float = 0.002
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 15
    shot_cap: int = 128
    batch_size: int = 32
    init_std: float = 0.02


@dataclass
class GateSection:
    num_ood_templates: int = 1
    ood_template_noise: float = 0.1


@dataclass
class AcquisitionSection:
    kmeans_max_iters: int = 25


SECTIONS = {
    'experiment': ExperimentSection,
    'dataset': DatasetSection,
    'matrix': MatrixSection,
    'protocol': ProtocolConfig,
    'prompt': PromptSection,
    'probe': ProbeHyper,
    'gate': GateSection,
    'acquisition': AcquisitionSection,
}

# never change results, so they stay out of the config hash
NON_SEMANTIC = {'experiment'}


@dataclass
class ExperimentMatrix:
    experiments: List[ExperimentConfig]
    output_root: Path
    parallel: int
    name: str
    gate_modes: List[str]
    strategies: List[str]
    seeds: List[int]
    config_hash: str
    sections: Dict[str, Any] = field(default_factory=dict, repr=False)


# ----------------------------------------------------------------------
# YAML with line numbers
# ----------------------------------------------------------------------

def _key_lines(node, prefix: str = '', lines: Dict[str, int] = None) -> Dict[str, int]:
    """Map dotted key paths to 1-based YAML line numbers from the composed node tree."""
    lines = {} if lines is None else lines
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            lines[path] = key_node.start_mark.line + 1
            _key_lines(value_node, path, lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            path = f"{prefix}[{i}]"
            lines[path] = item.start_mark.line + 1
            _key_lines(item, path, lines)
    return lines


def load_yaml(path: Path) -> Tuple[Dict[str, Any], Dict[str, int]]:
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, 'problem_mark', None)
        raise SchemaError(f"invalid YAML: {e}", line=mark.line + 1 if mark else None)
    if data is None:
        return {}, {}
    if not isinstance(data, dict):
        raise SchemaError("top level must be a mapping", line=1)
    return data, _key_lines(node)


# ----------------------------------------------------------------------
# Schema checking
# ----------------------------------------------------------------------

def _unwrap(value: Any) -> Any:
    if isinstance(value, dict) and 'value' in value and set(value) <= {'value', 'description'}:
        return value['value']
    return value


def _coerce(value: Any, hint: Any, path: str, lines: Dict[str, int]) -> Any:
    line = lines.get(path)
    value = _unwrap(value)
    origin, args = get_origin(hint), get_args(hint)

    if origin is Union:
        inner = [a for a in args if a is not type(None)]
        if value is None and type(None) in args:
            return None
        return _coerce(value, inner[0], path, lines)
    if origin in (list, List):
        if not isinstance(value, list):
            raise SchemaError(f"expected a list, got {type(value).__name__}", path, line)
        return [_coerce(v, args[0], f"{path}[{i}]", lines) for i, v in enumerate(value)]
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, path, lines)
    if hint is bool:
        if not isinstance(value, bool):
            raise SchemaError(f"expected true/false, got {value!r}", path, line)
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(f"expected an integer, got {value!r}", path, line)
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"expected a number, got {value!r}", path, line)
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise SchemaError(f"expected a string, got {value!r}", path, line)
        return value
    raise SchemaError(f"unsupported schema type {hint}", path, line)


def _build(cls, raw: Any, path: str, lines: Dict[str, int]):
    """Instantiate dataclass `cls` from a mapping, rejecting unknown keys."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise SchemaError(f"expected a mapping, got {type(raw).__name__}", path, lines.get(path))
    hints = get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    for key in raw:
        if key not in known:
            key_path = f"{path}.{key}" if path else str(key)
            raise SchemaError(f"unknown key {key!r} (allowed: {', '.join(sorted(known))})",
                              key_path, lines.get(key_path))
    values = {
        key: _coerce(value, hints[key], f"{path}.{key}" if path else key, lines)
        for key, value in raw.items()
    }
    return cls(**values)


def _check(condition: bool, message: str, path: str, lines: Dict[str, int]):
    if not condition:
        raise SchemaError(message, path, lines.get(path))


def parse_sections(data: Dict[str, Any], lines: Dict[str, int]) -> Dict[str, Any]:
    for key in data:
        if key not in SECTIONS:
            raise SchemaError(f"unknown section {key!r} (allowed: {', '.join(SECTIONS)})", key, lines.get(key))
    sections = {name: _build(cls, data.get(name), name, lines) for name, cls in SECTIONS.items()}

    m: MatrixSection = sections['matrix']
    for i, mode in enumerate(m.gate_modes):
        _check(mode in GATE_MODE_NAMES, f"unknown gate mode {mode!r} (allowed: {', '.join(GATE_MODE_NAMES)})",
               f"matrix.gate_modes[{i}]", lines)
    for i, strategy in enumerate(m.strategies):
        _check(strategy in StrategyFactory.STRATEGY_MAP, f"unknown strategy {strategy!r}",
               f"matrix.strategies[{i}]", lines)
    for i, seed in enumerate(m.seeds):
        _check(seed >= 0, "seeds must be non-negative", f"matrix.seeds[{i}]", lines)
    for key in ('gate_modes', 'strategies', 'seeds'):
        values = getattr(m, key)
        _check(len(values) > 0, "must not be empty", f"matrix.{key}", lines)
        _check(len(values) == len(set(values)), "duplicate entries", f"matrix.{key}", lines)

    p: ProtocolConfig = sections['protocol']
    _check(p.rounds >= 1, "must be >= 1", 'protocol.rounds', lines)
    _check(p.budget_per_round >= 0, "must be >= 0", 'protocol.budget_per_round', lines)
    _check(p.tau > 0, "must be positive", 'protocol.tau', lines)
    _check(p.warmup_shots >= 0, "must be >= 0", 'protocol.warmup_shots', lines)
    _check(p.prompt_aggregation in ('weighted', 'uniform'), "must be weighted or uniform",
           'protocol.prompt_aggregation', lines)

    d: DatasetSection = sections['dataset']
    _check(d.source in ('synthetic', 'import'), "must be synthetic or import", 'dataset.source', lines)
    if d.source == 'import':
        _check(bool(d.samples_csv) or bool(d.manifest and d.dataset_id),
               "import needs samples_csv or manifest + dataset_id", 'dataset', lines)
    else:
        try:
            d.synthetic.validate()
        except InvalidSpecError as e:
            raise SchemaError(str(e), 'dataset.synthetic', lines.get('dataset.synthetic'))

    pr: PromptSection = sections['prompt']
    for key in ('lr', 'shot_cap', 'batch_size'):
        _check(getattr(pr, key) > 0, "must be positive", f"prompt.{key}", lines)
    _check(pr.epochs >= 0, "must be >= 0", 'prompt.epochs', lines)
    pb: ProbeHyper = sections['probe']
    _check(pb.lr > 0, "must be positive", 'probe.lr', lines)
    _check(pb.batch_size > 0, "must be positive", 'probe.batch_size', lines)
    g: GateSection = sections['gate']
    _check(g.num_ood_templates >= 1, "must be >= 1", 'gate.num_ood_templates', lines)
    a: AcquisitionSection = sections['acquisition']
    _check(a.kmeans_max_iters >= 1, "must be >= 1", 'acquisition.kmeans_max_iters', lines)
    e: ExperimentSection = sections['experiment']
    _check(e.parallel >= 1, "must be >= 1", 'experiment.parallel', lines)
    _check(e.client_workers >= 1, "must be >= 1", 'experiment.client_workers', lines)
    return sections


# ----------------------------------------------------------------------
# Expansion
# ----------------------------------------------------------------------

def gate_mode_from_name(name: str, prompt: PromptSection, gate: GateSection) -> GateMode:
    if name == 'coldstart':
        return GateMode.coldstart()
    if name == 'upper_bound':
        return GateMode.upper_bound()
    if name == 'static':
        return GateMode.static(gate.num_ood_templates)
    if name == 'mixed':
        return GateMode.dynamic(PromptVariant.mixed(prompt.mixed_global_tokens, prompt.mixed_local_tokens))
    if name == 'global':
        return GateMode.dynamic(PromptVariant.global_only(prompt.global_tokens))
    if name == 'local':
        return GateMode.dynamic(PromptVariant.local_only(prompt.local_tokens))
    raise SchemaError(f"unknown gate mode {name!r}", 'matrix.gate_modes')


def config_hash(sections: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON of every result-affecting section."""
    semantic = {k: dataclasses.asdict(v) for k, v in sections.items() if k not in NON_SEMANTIC}
    blob = json.dumps(semantic, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(blob.encode('utf-8')).hexdigest()


def _resolve(path: Optional[str], base: Path) -> Optional[str]:
    if not path:
        return path
    p = Path(path)
    return str(p if p.is_absolute() else (base / p).resolve())


def expand_matrix(sections: Dict[str, Any], base_dir: Path, output_root: Optional[Path] = None) -> ExperimentMatrix:
    e: ExperimentSection = sections['experiment']
    m: MatrixSection = sections['matrix']
    d: DatasetSection = sections['dataset']
    pr: PromptSection = sections['prompt']
    g: GateSection = sections['gate']

    root = Path(output_root) if output_root is not None else Path(e.output_dir)
    dataset = DatasetConfig(
        source=d.source,
        synthetic=d.synthetic,
        seed=d.seed,
        manifest=_resolve(d.manifest, base_dir),
        dataset_id=d.dataset_id,
        samples_csv=_resolve(d.samples_csv, base_dir),
        anchors_csv=_resolve(d.anchors_csv, base_dir),
    )
    prompt = PromptHyper(
        lr=pr.lr, momentum=pr.momentum, weight_decay=pr.weight_decay, epochs=pr.epochs,
        shot_cap=pr.shot_cap, batch_size=pr.batch_size, tau=sections['protocol'].tau,
    )

    experiments = []
    for mode_name in m.gate_modes:
        mode = gate_mode_from_name(mode_name, pr, g)
        for strategy in m.strategies:
            for seed in m.seeds:
                cfg = ExperimentConfig(
                    gate_mode=mode,
                    strategy=strategy,
                    seed=seed,
                    name=e.name,
                    dataset=dataset,
                    protocol=sections['protocol'],
                    prompt=prompt,
                    prompt_init_std=pr.init_std,
                    probe=sections['probe'],
                    ood_template_noise=g.ood_template_noise,
                    kmeans_max_iters=sections['acquisition'].kmeans_max_iters,
                    client_workers=e.client_workers,
                    log_partitions=e.log_partitions,
                )
                cfg.output_dir = root / cfg.subdir
                experiments.append(cfg)

    return ExperimentMatrix(
        experiments=experiments,
        output_root=root,
        parallel=e.parallel,
        name=e.name,
        gate_modes=list(m.gate_modes),
        strategies=list(m.strategies),
        seeds=list(m.seeds),
        config_hash=config_hash(sections),
        sections=sections,
    )


def parse_config(path, seed_override: Optional[int] = None, output_root: Optional[Path] = None) -> ExperimentMatrix:
    """
    Parse and validate a YAML config into an experiment matrix.

    Args:
        path:          config file
        seed_override: replace matrix.seeds with this single seed
        output_root:   replace experiment.output_dir

    Returns:
        ExperimentMatrix expanded as gate_modes x strategies x seeds, in config order
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config not found: {path}")
    data, lines = load_yaml(path)
    sections = parse_sections(data, lines)
    if seed_override is not None:
        if seed_override < 0:
            raise SchemaError("seed override must be non-negative", 'matrix.seeds')
        sections['matrix'].seeds = [seed_override]
    # relative data paths resolve against the repository root (the config dir's parent)
    matrix = expand_matrix(sections, path.resolve().parent.parent, output_root)
    logger.info(f"Parsed {path.name}: {len(matrix.experiments)} experiments, hash {matrix.config_hash[:12]}")
    return matrix
