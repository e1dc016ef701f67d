"""Run-configuration files: JSON schema, validation that reports every
violation at once, and the canonical hash stamped into output headers."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .experiment import ModelConfig, TrainSettings
from .validation import ENCODER_KINDS, TASK_DECODERS, TASKS


class ConfigError(ValueError):
    """Invalid run configuration; ``violations`` lists every problem found."""

    def __init__(self, violations: list[str]):
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {v}" for v in violations))
        self.violations = violations


@dataclass(frozen=True)
class GraphPaths:
    triples: str
    features: Optional[str] = None
    features_index: Optional[str] = None
    gold: Optional[str] = None
    roles: Optional[str] = None
    sentences: Optional[str] = None
    relation_features: Optional[str] = None
    relation_features_index: Optional[str] = None
    normalize: bool = False


@dataclass(frozen=True)
class RunConfig:
    graph: GraphPaths
    model: ModelConfig
    training: TrainSettings
    output_dir: str = "out"
    raw: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class GridConfig:
    graphs: dict[str, GraphPaths]
    configs: tuple[ModelConfig, ...]
    training: TrainSettings
    output_dir: str = "out"
    reference_graph: Optional[str] = None
    raw: dict = field(default_factory=dict, compare=False)


def config_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _parse_graph(raw: dict, where: str, violations: list[str],
                 base_dir: Path) -> Optional[GraphPaths]:
    if not isinstance(raw, dict):
        violations.append(f"{where}: must be an object")
        return None
    if "triples" not in raw:
        violations.append(f"{where}.triples: required")
        return None

    def resolve(key):
        value = raw.get(key)
        return None if value is None else str((base_dir / value))

    paths = GraphPaths(
        triples=resolve("triples"),
        features=resolve("features"),
        features_index=resolve("features_index"),
        gold=resolve("gold"),
        roles=resolve("roles"),
        sentences=resolve("sentences"),
        relation_features=resolve("relation_features"),
        relation_features_index=resolve("relation_features_index"),
        normalize=bool(raw.get("normalize", False)),
    )
    for name in ("triples", "features", "features_index", "gold", "roles",
                 "sentences", "relation_features", "relation_features_index"):
        value = getattr(paths, name)
        if value is not None and not Path(value).exists():
            violations.append(f"{where}.{name}: file not found: {value}")
    if (paths.features is None) != (paths.features_index is None):
        violations.append(f"{where}: features and features_index must be given together")
    return paths


def _parse_model(raw: dict, where: str, violations: list[str]) -> Optional[ModelConfig]:
    if not isinstance(raw, dict):
        violations.append(f"{where}: must be an object")
        return None
    known = {
        "task", "encoder", "encoder_aggregator", "decoder", "decoder_aggregator",
        "hidden_dims", "num_bases", "temperature", "edge_drop_p", "feature_mask_p",
        "inter_view_only", "exclude_type_negatives", "dropout",
    }
    for key in raw:
        if key not in known:
            violations.append(f"{where}.{key}: unknown key")
    task = raw.get("task", "feature_reconstruction")
    if task not in TASKS:
        violations.append(f"{where}.task: must be one of {list(TASKS)}, got {task!r}")
        return None
    encoder = raw.get("encoder", "rgcn")
    if encoder not in ENCODER_KINDS:
        violations.append(f"{where}.encoder: must be one of {list(ENCODER_KINDS)}, got {encoder!r}")
    decoder = raw.get("decoder", TASK_DECODERS[task][0])
    if decoder not in TASK_DECODERS[task]:
        violations.append(
            f"{where}.decoder: {decoder!r} is not valid for task {task!r}"
        )
    hidden = raw.get("hidden_dims", [384, 256])
    if not (isinstance(hidden, (list, tuple)) and len(hidden) == 2
            and all(isinstance(v, int) and v > 0 for v in hidden)):
        violations.append(f"{where}.hidden_dims: must be two positive integers")
        hidden = [384, 256]
    for key, lo, hi in (("temperature", 0.0, None), ("edge_drop_p", 0.0, 1.0),
                        ("feature_mask_p", 0.0, 1.0), ("dropout", 0.0, 1.0)):
        value = raw.get(key)
        if value is None:
            continue
        if not isinstance(value, (int, float)) or (lo is not None and value < lo) \
                or (hi is not None and value > hi) or (key == "temperature" and value <= 0):
            violations.append(f"{where}.{key}: out of range: {value!r}")
    num_bases = raw.get("num_bases", 8)
    if not (isinstance(num_bases, int) and num_bases >= 1):
        violations.append(f"{where}.num_bases: must be a positive integer")
        num_bases = 8
    return ModelConfig(
        task=task, encoder=encoder,
        encoder_aggregator=raw.get("encoder_aggregator", "conv"),
        decoder=decoder,
        decoder_aggregator=raw.get("decoder_aggregator", "conv"),
        hidden_dims=tuple(hidden), num_bases=num_bases,
        temperature=float(raw.get("temperature", 0.5)),
        edge_drop_p=float(raw.get("edge_drop_p", 0.2)),
        feature_mask_p=float(raw.get("feature_mask_p", 0.2)),
        inter_view_only=bool(raw.get("inter_view_only", False)),
        exclude_type_negatives=bool(raw.get("exclude_type_negatives", False)),
        dropout=float(raw.get("dropout", 0.0)),
    )


def _parse_training(raw: dict, where: str, violations: list[str]) -> TrainSettings:
    raw = raw or {}
    if not isinstance(raw, dict):
        violations.append(f"{where}: must be an object")
        raw = {}
    epochs = raw.get("epochs", 50)
    if not (isinstance(epochs, int) and epochs > 0):
        violations.append(f"{where}.epochs: must be a positive integer")
        epochs = 50
    seeds = raw.get("seeds", [0, 1, 2])
    if not (isinstance(seeds, list) and seeds
            and all(isinstance(s, int) for s in seeds)):
        violations.append(f"{where}.seeds: must be a non-empty list of integers")
        seeds = [0]
    batch = raw.get("batch_size")
    if batch is not None and not (isinstance(batch, int) and batch > 0):
        violations.append(f"{where}.batch_size: must be a positive integer or null")
        batch = None
    fanout = raw.get("fanout", 200)
    if fanout is not None and not (isinstance(fanout, int) and fanout > 0):
        violations.append(f"{where}.fanout: must be a positive integer or null")
        fanout = 200
    lr = raw.get("lr", 1e-3)
    if not (isinstance(lr, (int, float)) and lr > 0):
        violations.append(f"{where}.lr: must be positive")
        lr = 1e-3
    return TrainSettings(epochs=epochs, batch_size=batch, fanout=fanout,
                         lr=float(lr), seeds=tuple(seeds))


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"{path}: cannot read config: {exc}"]) from exc
    violations: list[str] = []
    base_dir = path.parent
    graph = _parse_graph(raw.get("graph", {}), "graph", violations, base_dir)
    model = _parse_model(raw.get("model", {}), "model", violations)
    training = _parse_training(raw.get("training", {}), "training", violations)
    if violations:
        raise ConfigError(violations)
    return RunConfig(graph=graph, model=model, training=training,
                     output_dir=str(raw.get("output_dir", "out")), raw=raw)


def _expand_grid(raw: dict, violations: list[str]) -> list[ModelConfig]:
    tasks = raw.get("tasks", list(TASKS))
    encoders = raw.get("encoders", list(ENCODER_KINDS))
    encoder_aggregators = raw.get("encoder_aggregators", ["conv"])
    decoders = raw.get("decoders")
    decoder_aggregators = raw.get("decoder_aggregators", ["conv"])
    extra = {k: raw[k] for k in ("hidden_dims", "num_bases", "temperature",
                                 "edge_drop_p", "feature_mask_p", "dropout")
             if k in raw}
    configs = []
    for task in tasks:
        if task not in TASKS:
            violations.append(f"grid.tasks: unknown task {task!r}")
            continue
        allowed = TASK_DECODERS[task]
        task_decoders = [d for d in (decoders or allowed) if d in allowed]
        for encoder in encoders:
            if encoder not in ENCODER_KINDS:
                violations.append(f"grid.encoders: unknown encoder {encoder!r}")
                continue
            enc_aggs = encoder_aggregators if encoder in ("transgcn", "rotategcn") else ["conv"]
            for enc_agg in enc_aggs:
                for decoder in task_decoders:
                    dec_aggs = decoder_aggregators \
                        if decoder in ("transgcn", "rotategcn") else ["conv"]
                    for dec_agg in dec_aggs:
                        model_raw = dict(extra)
                        model_raw.update(task=task, encoder=encoder,
                                         encoder_aggregator=enc_agg, decoder=decoder,
                                         decoder_aggregator=dec_agg)
                        model = _parse_model(model_raw, "grid", violations)
                        if model is not None:
                            configs.append(model)
    return configs


def load_grid_config(path) -> GridConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"{path}: cannot read config: {exc}"]) from exc
    violations: list[str] = []
    base_dir = path.parent
    graphs_raw = raw.get("graphs")
    graphs: dict[str, GraphPaths] = {}
    if not isinstance(graphs_raw, dict) or not graphs_raw:
        violations.append("graphs: must map at least one variant name to graph paths")
    else:
        for name, graph_raw in graphs_raw.items():
            parsed = _parse_graph(graph_raw, f"graphs.{name}", violations, base_dir)
            if parsed is not None:
                graphs[name] = parsed
    configs: list[ModelConfig] = []
    if "configs" in raw:
        if not isinstance(raw["configs"], list):
            violations.append("configs: must be a list of model objects")
        else:
            for i, model_raw in enumerate(raw["configs"]):
                model = _parse_model(model_raw, f"configs[{i}]", violations)
                if model is not None:
                    configs.append(model)
    elif "grid" in raw:
        configs = _expand_grid(raw["grid"], violations)
    else:
        violations.append("either configs (explicit list) or grid (cartesian) is required")
    if not configs and not violations:
        violations.append("grid expands to zero valid configurations")
    training = _parse_training(raw.get("training", {}), "training", violations)
    reference = raw.get("reference_graph")
    if reference is not None and graphs and reference not in graphs:
        violations.append(f"reference_graph: {reference!r} is not a declared graph")
    if violations:
        raise ConfigError(violations)
    return GridConfig(graphs=graphs, configs=tuple(configs), training=training,
                      output_dir=str(raw.get("output_dir", "out")),
                      reference_graph=reference, raw=raw)
