"""Experiment orchestration: seeded runs, seed aggregation, the clean-vs-
variant gap table, and the configuration grid with its report files."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import NumericError
from .estimator import GSSLTermTyper
from .graph import KnowledgeGraph
from .typing_eval import compute_metrics


@dataclass(frozen=True)
class ModelConfig:
    task: str = "feature_reconstruction"
    encoder: str = "rgcn"
    encoder_aggregator: str = "conv"
    decoder: str = "mlp"
    decoder_aggregator: str = "conv"
    hidden_dims: tuple[int, int] = (384, 256)
    num_bases: int = 8
    temperature: float = 0.5
    edge_drop_p: float = 0.2
    feature_mask_p: float = 0.2
    inter_view_only: bool = False
    exclude_type_negatives: bool = False
    dropout: float = 0.0

    @property
    def encoder_label(self) -> str:
        if self.encoder in ("transgcn", "rotategcn"):
            return f"{self.encoder}_{self.encoder_aggregator}"
        return self.encoder

    @property
    def decoder_label(self) -> str:
        if self.decoder in ("transgcn", "rotategcn"):
            return f"{self.decoder}_{self.decoder_aggregator}"
        return self.decoder

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.task, self.encoder_label, self.decoder_label)


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 50
    batch_size: Optional[int] = None
    fanout: Optional[int] = 200
    lr: float = 1e-3
    seeds: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seed list must be non-empty")


@dataclass
class SeedRun:
    seed: int
    status: str
    accuracy: float = float("nan")
    macro_precision: float = float("nan")
    macro_f1: float = float("nan")
    loss_curve: list = field(default_factory=list)
    recon_accuracy_curve: list = field(default_factory=list)
    wall_ms: int = 0
    error: str = ""


@dataclass
class RunRecord:
    config: ModelConfig
    graph_name: str
    settings: TrainSettings
    runs: list[SeedRun] = field(default_factory=list)

    @property
    def ok_runs(self) -> list[SeedRun]:
        return [r for r in self.runs if r.status == "ok"]

    @property
    def mean_accuracy(self) -> float:
        ok = self.ok_runs
        return float(np.mean([r.accuracy for r in ok])) if ok else float("nan")

    @property
    def std_accuracy(self) -> float:
        """Population standard deviation over the configured seeds."""
        ok = self.ok_runs
        return float(np.std([r.accuracy for r in ok])) if ok else float("nan")

    @property
    def mean_macro_f1(self) -> float:
        ok = self.ok_runs
        return float(np.mean([r.macro_f1 for r in ok])) if ok else float("nan")

    @property
    def mean_macro_precision(self) -> float:
        ok = self.ok_runs
        return float(np.mean([r.macro_precision for r in ok])) if ok else float("nan")


def estimator_for(config: ModelConfig, settings: TrainSettings, seed: int) -> GSSLTermTyper:
    return GSSLTermTyper(
        task=config.task, encoder=config.encoder,
        encoder_aggregator=config.encoder_aggregator,
        decoder=config.decoder, decoder_aggregator=config.decoder_aggregator,
        hidden_dims=config.hidden_dims, num_bases=config.num_bases,
        temperature=config.temperature, edge_drop_p=config.edge_drop_p,
        feature_mask_p=config.feature_mask_p,
        inter_view_only=config.inter_view_only,
        exclude_type_negatives=config.exclude_type_negatives,
        dropout=config.dropout, epochs=settings.epochs,
        batch_size=settings.batch_size, fanout=settings.fanout,
        lr=settings.lr, seed=seed,
    )


def run_experiment(config: ModelConfig, graph: KnowledgeGraph, gold: dict[int, int],
                   settings: TrainSettings, graph_name: str = "graph") -> RunRecord:
    """Train and evaluate one configuration across every seed.

    A run whose loss turns non-finite is recorded as failed; the record
    still aggregates the remaining seeds.
    """
    record = RunRecord(config=config, graph_name=graph_name, settings=settings)
    for seed in settings.seeds:
        started = time.monotonic()
        run = SeedRun(seed=seed, status="ok")
        try:
            model = estimator_for(config, settings, seed).fit(graph)
            result = model.predict_result(graph)
            metrics = compute_metrics(result, gold)
            run.accuracy = metrics.accuracy
            run.macro_precision = metrics.macro_precision
            run.macro_f1 = metrics.macro_f1
            run.loss_curve = list(model.loss_curve_)
            run.recon_accuracy_curve = list(model.recon_accuracy_curve_)
        except NumericError as exc:
            run.status = "failed"
            run.error = str(exc)
        run.wall_ms = int((time.monotonic() - started) * 1000)
        record.runs.append(run)
    return record


@dataclass
class GapReport:
    """Per-configuration accuracy deltas between two record sets."""

    rows: list[dict] = field(default_factory=list)
    best_per_task: dict[str, float] = field(default_factory=dict)
    unmatched: list[tuple] = field(default_factory=list)


def dual_gap_report(records_clean: list[RunRecord],
                    records_variant: list[RunRecord]) -> GapReport:
    """Clean-minus-variant mean accuracy per matched configuration key."""
    clean_by_key = {r.config.key: r for r in records_clean}
    variant_by_key = {r.config.key: r for r in records_variant}
    report = GapReport()
    for key in sorted(clean_by_key):
        if key not in variant_by_key:
            report.unmatched.append(key)
            continue
        c, v = clean_by_key[key], variant_by_key[key]
        report.rows.append({
            "task": key[0], "encoder": key[1], "decoder": key[2],
            "clean_accuracy": c.mean_accuracy,
            "variant_accuracy": v.mean_accuracy,
            "gap": c.mean_accuracy - v.mean_accuracy,
        })
    for key in sorted(variant_by_key):
        if key not in clean_by_key:
            report.unmatched.append(key)
    tasks = sorted({row["task"] for row in report.rows})
    for task in tasks:
        best_clean = max((r for r in records_clean if r.config.task == task),
                         key=lambda r: r.mean_accuracy, default=None)
        best_variant = max((r for r in records_variant if r.config.task == task),
                           key=lambda r: r.mean_accuracy, default=None)
        if best_clean is not None and best_variant is not None:
            report.best_per_task[task] = best_clean.mean_accuracy - best_variant.mean_accuracy
    return report


@dataclass
class GridReport:
    records: list[RunRecord] = field(default_factory=list)

    @property
    def failures(self) -> list[tuple]:
        out = []
        for record in self.records:
            for run in record.runs:
                if run.status != "ok":
                    out.append((record.graph_name, record.config.key, run.seed, run.error))
        return out


def _run_grid_item(args) -> RunRecord:
    config, graph, gold, settings, graph_name = args
    return run_experiment(config, graph, gold, settings, graph_name=graph_name)


def run_grid(configs: list[ModelConfig], graphs: dict[str, tuple[KnowledgeGraph, dict]],
             settings: TrainSettings, workers: int = 1) -> GridReport:
    """Every configuration against every graph variant; failed runs are
    recorded, never dropped."""
    if not configs:
        raise ValueError("grid has no configurations")
    if not graphs:
        raise ValueError("grid has no graphs")
    items = [
        (config, graph, gold, settings, name)
        for name, (graph, gold) in graphs.items()
        for config in configs
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_grid_item, items))
    else:
        records = [_run_grid_item(item) for item in items]
    return GridReport(records=records)


# ---------------------------------------------------------------------------
# report rendering


def grid_long_csv(report: GridReport, header_lines: tuple[str, ...] = ()) -> str:
    """Long-format CSV: one row per (configuration, graph, seed)."""
    lines = [f"# {line}" for line in header_lines]
    lines.append("task,encoder,decoder,aggregator,graph,seed,accuracy,"
                 "macro_p,macro_f1,epochs,wall_ms")
    for record in report.records:
        c = record.config
        for run in record.runs:
            if run.status == "ok":
                acc, mp, mf = (f"{run.accuracy:.6f}", f"{run.macro_precision:.6f}",
                               f"{run.macro_f1:.6f}")
            else:
                acc = mp = mf = "failed"
            lines.append(
                f"{c.task},{c.encoder_label},{c.decoder_label},{c.encoder_aggregator},"
                f"{record.graph_name},{run.seed},{acc},{mp},{mf},"
                f"{record.settings.epochs},{run.wall_ms}"
            )
    return "\n".join(lines) + "\n"


def grid_summary_text(report: GridReport, reference_graph: Optional[str] = None) -> str:
    """Best-per-task tables per graph, accuracy spread per task, and mean
    accuracy deltas against a reference graph variant."""
    by_graph: dict[str, list[RunRecord]] = {}
    for record in report.records:
        by_graph.setdefault(record.graph_name, []).append(record)

    out = []
    for graph_name in sorted(by_graph):
        records = by_graph[graph_name]
        out.append(f"=== {graph_name} ===")
        out.append(f"{'task':<26}{'encoder':<18}{'decoder':<18}"
                   f"{'acc':>10}{'+-std':>10}{'f1':>10}{'prec':>10}")
        tasks = sorted({r.config.task for r in records})
        for task in tasks:
            candidates = [r for r in records if r.config.task == task and r.ok_runs]
            if not candidates:
                out.append(f"{task:<26}{'(all runs failed)'}")
                continue
            best = max(candidates, key=lambda r: r.mean_accuracy)
            out.append(
                f"{task:<26}{best.config.encoder_label:<18}{best.config.decoder_label:<18}"
                f"{best.mean_accuracy:>10.4f}{best.std_accuracy:>10.4f}"
                f"{best.mean_macro_f1:>10.4f}{best.mean_macro_precision:>10.4f}"
            )
        out.append("")
        out.append("accuracy spread per task (mean over seeds, across configs):")
        for task in tasks:
            accs = [r.mean_accuracy for r in records
                    if r.config.task == task and r.ok_runs]
            if accs:
                out.append(f"  {task:<26}min {min(accs):.4f}  median "
                           f"{float(np.median(accs)):.4f}  max {max(accs):.4f}")
        out.append("")

    if reference_graph and reference_graph in by_graph:
        out.append(f"=== mean accuracy delta vs {reference_graph} ===")
        ref = by_graph[reference_graph]
        for graph_name in sorted(by_graph):
            if graph_name == reference_graph:
                continue
            gap = dual_gap_report(by_graph[graph_name], ref)
            for task, delta in sorted(gap.best_per_task.items()):
                out.append(f"  {graph_name:<22}{task:<26}{delta:+.4f}")
        out.append("")

    failures = report.failures
    out.append(f"failed runs: {len(failures)}")
    for graph_name, key, seed, error in failures:
        out.append(f"  {graph_name} {key} seed={seed}: {error}")
    return "\n".join(out) + "\n"


def loss_curve_csv(run: SeedRun) -> str:
    lines = ["epoch,loss" + (",recon_accuracy" if run.recon_accuracy_curve else "")]
    for epoch, loss in enumerate(run.loss_curve, start=1):
        row = f"{epoch},{loss:.6f}"
        if run.recon_accuracy_curve:
            row += f",{run.recon_accuracy_curve[epoch - 1]:.6f}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def transition_matrix_csv(matrix: np.ndarray) -> str:
    lines = [",final_correct,final_incorrect"]
    for name, row in zip(("initial_correct", "initial_incorrect"), matrix):
        lines.append(f"{name},{row[0]:.4f},{row[1]:.4f}")
    return "\n".join(lines) + "\n"
