"""Command-line workbench: stats, refine, train, eval, grid, baseline, synth.

Exit codes: 0 success, 1 input or configuration error, 2 external-service
error, 3 numeric failure. All text outputs carry a provenance header with
the tool version, config hash, and seed list, and every command is
idempotent for fixed inputs and seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import NumericError
from .config import (
    ConfigError, GraphPaths, GridConfig, RunConfig, config_hash,
    load_grid_config, load_run_config,
)
from .experiment import (
    estimator_for, grid_long_csv, grid_summary_text, run_grid,
    transition_matrix_csv,
)
from .fileio import FileFormatError, read_sentences, write_feature_file, write_index_file
from .graph import (
    GraphFormatError, KnowledgeGraph, load_features, load_gold,
    load_relation_features, load_roles, load_triples, save_gold, save_roles,
    save_triples, topology_stats,
)
from .refine import (
    AcceptAllValidator, CleaningAborted, HeuristicMockValidator,
    RejectAllValidator, RemoteValidationError, RemoteValidator,
    VerdictFileValidator, clean, combined_refine, enrich,
    feature_provider_from_files, load_stoplist,
)
from .synth import SyntheticSpec, generate
from .typing_eval import baseline_typing, compute_metrics, transition_matrix


def provenance(cfg_hash: str, seeds) -> str:
    seed_text = ",".join(str(s) for s in seeds) if seeds else "-"
    return f"kgssl v{__version__} config={cfg_hash} seeds={seed_text}"


def load_graph(paths: GraphPaths) -> KnowledgeGraph:
    graph = load_triples(paths.triples, normalize=paths.normalize)
    if paths.roles:
        graph = load_roles(paths.roles, graph)
    if paths.features:
        graph = graph.with_node_features(
            load_features(paths.features, paths.features_index, graph))
    if paths.relation_features:
        graph = graph.with_relation_features(
            load_relation_features(paths.relation_features,
                                   paths.relation_features_index, graph))
    return graph


def graph_paths_from_args(args) -> GraphPaths:
    return GraphPaths(
        triples=args.triples, features=args.features,
        features_index=args.features_index, gold=getattr(args, "gold", None),
        roles=args.roles, sentences=getattr(args, "sentences", None),
        normalize=args.normalize,
    )


# ---------------------------------------------------------------------------
# commands


def cmd_stats(args) -> int:
    graph = load_graph(graph_paths_from_args(args))
    stats = topology_stats(graph)
    if args.format == "csv":
        print("n_nodes,n_edges,n_relations,n_comp,r_giant,avg_deg")
        print(f"{stats.n_nodes},{stats.n_edges},{stats.n_relations},"
              f"{stats.n_comp},{stats.r_giant:.6f},{stats.avg_deg:.6f}")
    else:
        print(f"{'nodes':<12}{stats.n_nodes}")
        print(f"{'edges':<12}{stats.n_edges}")
        print(f"{'relations':<12}{stats.n_relations}")
        print(f"{'n_comp':<12}{stats.n_comp}")
        print(f"{'r_giant':<12}{stats.r_giant:.4f}")
        print(f"{'avg_deg':<12}{stats.avg_deg:.4f}")
    return 0


def build_validator(args):
    kind = args.validator
    if kind == "accept-all":
        return AcceptAllValidator()
    if kind == "reject-all":
        return RejectAllValidator()
    if kind == "heuristic-mock":
        if args.stoplist:
            return HeuristicMockValidator(stoplist=load_stoplist(args.stoplist))
        return HeuristicMockValidator()
    if kind == "verdict-file":
        if not args.verdict_file:
            raise ConfigError(["--verdict-file is required for the verdict-file validator"])
        return VerdictFileValidator(args.verdict_file, miss_policy=args.miss_policy)
    if kind == "remote":
        return RemoteValidator(endpoint=args.endpoint, timeout_ms=args.timeout_ms,
                               batch_size=args.batch_size)
    raise ConfigError([f"unknown validator kind {kind!r}"])


def _stats_dict(stats) -> dict | None:
    if stats is None:
        return None
    return {"n_nodes": stats.n_nodes, "n_edges": stats.n_edges,
            "n_relations": stats.n_relations, "n_comp": stats.n_comp,
            "r_giant": stats.r_giant, "avg_deg": stats.avg_deg}


def cmd_refine(args) -> int:
    out = Path(args.out or "refined")
    out.mkdir(parents=True, exist_ok=True)
    graph = load_graph(graph_paths_from_args(args))
    sentences = read_sentences(args.sentences) if args.sentences else None

    provider = None
    if args.feature_lookup:
        provider = feature_provider_from_files(args.feature_lookup,
                                               args.feature_lookup_index)
    kwargs = dict(feature_provider=provider, zero_init=args.zero_init,
                  strict=args.strict_features)

    header = provenance(config_hash({"mode": args.mode, "triples": args.triples}),
                        seeds=())
    try:
        if args.mode == "enrich":
            refined, log = enrich(graph, **kwargs)
        elif args.mode == "clean":
            refined, log = clean(graph, build_validator(args), sentences=sentences)
        else:
            refined, log = combined_refine(graph, build_validator(args),
                                           sentences=sentences, **kwargs)
    except CleaningAborted as exc:
        _write_refinement_log(out / "refinement_log.jsonl", exc.partial_log, header)
        raise

    save_triples(out / "refined.tsv", refined, header=header)
    if refined.node_features is not None:
        write_feature_file(out / "refined.ntdf", refined.node_features)
        write_index_file(out / "refined.idx", refined.node_labels)
    if refined.type_nodes or refined.target_nodes:
        save_roles(out / "refined_roles.tsv", refined)
    _write_refinement_log(out / "refinement_log.jsonl", log, header)
    stats = {"before": _stats_dict(log.stats_before), "after": _stats_dict(log.stats_after),
             "added": len(log.added), "removed": len(log.removed)}
    (out / "refine_stats.json").write_text(
        json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"{args.mode}: +{len(log.added)} -{len(log.removed)} edges; "
          f"wrote {out / 'refined.tsv'}")
    return 0


def _write_refinement_log(path, log, header: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"provenance": header}) + "\n")
        for (h, r, t), rule in log.added:
            fh.write(json.dumps({"op": "add", "head": h, "relation": r, "tail": t,
                                 "rule": rule}) + "\n")
        for (h, r, t), verdict, tag in log.removed:
            fh.write(json.dumps({"op": "remove", "head": h, "relation": r, "tail": t,
                                 "verdict": verdict, "validator": tag}) + "\n")


def _load_run(args):
    cfg = load_run_config(args.config)
    graph = load_graph(cfg.graph)
    gold = None
    if cfg.graph.gold:
        gold = load_gold(cfg.graph.gold, graph)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, graph, gold, out


def cmd_train(args) -> int:
    cfg, graph, gold, out = _load_run(args)
    header = provenance(config_hash(cfg.raw), cfg.training.seeds)
    per_seed = {}
    accuracies = []
    failed = 0
    for seed in cfg.training.seeds:
        try:
            model = estimator_for(cfg.model, cfg.training, seed).fit(graph)
        except NumericError as exc:
            per_seed[str(seed)] = {"status": "failed", "error": str(exc)}
            failed += 1
            continue
        model.save_checkpoint(out / f"checkpoint_seed{seed}.ntdp")
        _write_text(out / f"loss_seed{seed}.csv", header,
                    _loss_csv_text(model.loss_curve_, model.recon_accuracy_curve_))
        entry = {"status": "ok", "final_loss": model.loss_curve_[-1]}
        if gold:
            metrics = compute_metrics(model.predict_result(graph), gold)
            entry["accuracy"] = metrics.accuracy
            accuracies.append(metrics.accuracy)
        per_seed[str(seed)] = entry
    summary = {"provenance": header, "per_seed": per_seed}
    if accuracies:
        summary["mean_accuracy"] = float(np.mean(accuracies))
        summary["std_accuracy"] = float(np.std(accuracies))
    _write_json(out / "train_metrics.json", summary)
    done = len(cfg.training.seeds) - failed
    print(f"trained {done}/{len(cfg.training.seeds)} seeds; checkpoints in {out}")
    return 3 if failed == len(cfg.training.seeds) else 0


def _loss_csv_text(losses, recon) -> str:
    lines = ["epoch,loss" + (",recon_accuracy" if recon else "")]
    for epoch, loss in enumerate(losses, start=1):
        row = f"{epoch},{loss:.6f}"
        if recon:
            row += f",{recon[epoch - 1]:.6f}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def _write_text(path, header: str, body: str) -> None:
    Path(path).write_text(f"# {header}\n{body}", encoding="utf-8")


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def cmd_eval(args) -> int:
    cfg, graph, gold, out = _load_run(args)
    if gold is None:
        raise ConfigError(["eval requires graph.gold in the config"])
    header = provenance(config_hash(cfg.raw), cfg.training.seeds)
    baseline_result, _ = baseline_typing(graph.node_features, graph.target_nodes,
                                         graph.type_nodes, gold)
    metrics_all = {}
    accuracies = []
    for seed in cfg.training.seeds:
        ckpt = out / f"checkpoint_seed{seed}.ntdp"
        if not ckpt.exists():
            raise ConfigError([f"missing checkpoint {ckpt}; run train first"])
        model = estimator_for(cfg.model, cfg.training, seed)
        model.load_checkpoint(ckpt, graph)
        result = model.predict_result(graph)
        metrics = compute_metrics(result, gold)
        accuracies.append(metrics.accuracy)
        rows = [f"{graph.node_labels[t]}\t{graph.node_labels[result.assignments[t]]}"
                f"\t{result.margins[t]:.6f}"
                for t in sorted(result.assignments)]
        _write_text(out / f"typing_seed{seed}.tsv", header, "\n".join(rows) + "\n")
        matrix = transition_matrix(baseline_result, result, gold)
        _write_text(out / f"transition_seed{seed}.csv", header,
                    transition_matrix_csv(matrix))
        metrics_all[str(seed)] = {
            "accuracy": metrics.accuracy,
            "macro_precision": metrics.macro_precision,
            "macro_f1": metrics.macro_f1,
        }
    _write_json(out / "eval_metrics.json", {
        "provenance": header,
        "mean_accuracy": float(np.mean(accuracies)),
        "std_accuracy": float(np.std(accuracies)),
        "per_seed": metrics_all,
    })
    print(f"evaluated {len(cfg.training.seeds)} seeds; "
          f"mean accuracy {float(np.mean(accuracies)):.4f}; reports in {out}")
    return 0


def cmd_baseline(args) -> int:
    cfg, graph, gold, out = _load_run(args)
    if gold is None:
        raise ConfigError(["baseline requires graph.gold in the config"])
    header = provenance(config_hash(cfg.raw), seeds=())
    result, metrics = baseline_typing(graph.node_features, graph.target_nodes,
                                      graph.type_nodes, gold)
    rows = [f"{graph.node_labels[t]}\t{graph.node_labels[result.assignments[t]]}"
            f"\t{result.margins[t]:.6f}"
            for t in sorted(result.assignments)]
    _write_text(out / "baseline_typing.tsv", header, "\n".join(rows) + "\n")
    _write_json(out / "baseline_metrics.json", {
        "provenance": header,
        "accuracy": metrics.accuracy,
        "macro_precision": metrics.macro_precision,
        "macro_f1": metrics.macro_f1,
    })
    print(f"baseline accuracy {metrics.accuracy:.4f}; reports in {out}")
    return 0


def cmd_grid(args) -> int:
    cfg = load_grid_config(args.config)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    graphs = {}
    for name, paths in cfg.graphs.items():
        graph = load_graph(paths)
        if not paths.gold:
            raise ConfigError([f"graphs.{name}: grid runs require a gold file"])
        graphs[name] = (graph, load_gold(paths.gold, graph))
    report = run_grid(list(cfg.configs), graphs, cfg.training,
                      workers=args.workers)
    header = provenance(config_hash(cfg.raw), cfg.training.seeds)
    (out / "grid_report.csv").write_text(
        grid_long_csv(report, header_lines=(header,)), encoding="utf-8")
    _write_text(out / "grid_summary.txt", header,
                grid_summary_text(report, reference_graph=cfg.reference_graph))
    print(f"grid: {len(report.records)} records, {len(report.failures)} failed runs; "
          f"reports in {out}")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out or "synth")
    out.mkdir(parents=True, exist_ok=True)
    if args.spec:
        raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        spec = SyntheticSpec(**{k: (tuple(map(tuple, v)) if k == "relation_schema" else v)
                                for k, v in raw.items()})
    else:
        spec = SyntheticSpec(
            n_types=args.n_types, terms_per_type=args.terms_per_type,
            n_relations=args.n_relations, edges_per_term=args.edges_per_term,
            feature_dim=args.feature_dim, feature_noise=args.feature_noise,
            edge_drop_frac=args.edge_drop_frac, spurious_frac=args.spurious_frac,
            fragment_frac=args.fragment_frac,
            feature_noise_sigma=args.feature_noise_sigma,
        )
    pair = generate(spec, seed=args.seed)
    header = provenance(config_hash({"spec": asdict(spec), "seed": args.seed}),
                        seeds=(args.seed,))
    for name, graph in (("clean", pair.clean), ("corrupted", pair.corrupted)):
        save_triples(out / f"{name}.tsv", graph, header=header)
        write_feature_file(out / f"{name}.ntdf", graph.node_features)
        write_index_file(out / f"{name}.idx", graph.node_labels)
    save_roles(out / "roles.tsv", pair.clean)
    save_gold(out / "gold.tsv", pair.clean, pair.gold)
    _write_json(out / "synth_manifest.json", {
        "provenance": header,
        "schema": [list(p) for p in pair.schema],
        "clean": {"triples": "clean.tsv", "features": "clean.ntdf",
                  "features_index": "clean.idx"},
        "corrupted": {"triples": "corrupted.tsv", "features": "corrupted.ntdf",
                      "features_index": "corrupted.idx"},
        "gold": "gold.tsv", "roles": "roles.tsv",
        "spec": asdict(spec),
        "seed": args.seed,
    })
    print(f"synthetic pair written to {out} "
          f"(clean {pair.clean.n_edges} edges, corrupted {pair.corrupted.n_edges})")
    return 0


# ---------------------------------------------------------------------------
# argument surface


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgssl",
        description="Self-supervised learning workbench for noisy knowledge graphs",
    )
    parser.add_argument("--version", action="version", version=f"kgssl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "csv"), default="text")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)

    graph_args = argparse.ArgumentParser(add_help=False)
    graph_args.add_argument("--triples", required=True)
    graph_args.add_argument("--roles", default=None)
    graph_args.add_argument("--features", default=None)
    graph_args.add_argument("--features-index", dest="features_index", default=None)
    graph_args.add_argument("--normalize", action="store_true")

    p = sub.add_parser("stats", parents=[common, graph_args],
                       help="topology statistics for a triples file")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("refine", parents=[common, graph_args],
                       help="enrich and/or clean a graph")
    p.add_argument("--mode", choices=("enrich", "clean", "combined"), required=True)
    p.add_argument("--sentences", default=None)
    p.add_argument("--gold", default=None)
    p.add_argument("--validator", default="heuristic-mock",
                   choices=("verdict-file", "heuristic-mock", "remote",
                            "accept-all", "reject-all"))
    p.add_argument("--verdict-file", dest="verdict_file", default=None)
    p.add_argument("--miss-policy", dest="miss_policy", default="strict",
                   choices=("strict", "lenient"))
    p.add_argument("--stoplist", default=None)
    p.add_argument("--endpoint", default=None,
                   help="remote validator URL (default: NATD_VALIDATOR_URL)")
    p.add_argument("--timeout-ms", dest="timeout_ms", type=int, default=30_000)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p.add_argument("--feature-lookup", dest="feature_lookup", default=None)
    p.add_argument("--feature-lookup-index", dest="feature_lookup_index", default=None)
    p.add_argument("--zero-init", dest="zero_init", action="store_true")
    p.add_argument("--strict-features", dest="strict_features", action="store_true")
    p.set_defaults(func=cmd_refine)

    for name, func, help_text in (
        ("train", cmd_train, "train encoders per the run config"),
        ("eval", cmd_eval, "evaluate trained checkpoints"),
        ("baseline", cmd_baseline, "type targets from raw features"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--config", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("grid", parents=[common], help="run a configuration grid")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a clean/corrupted synthetic graph pair")
    p.add_argument("--spec", default=None, help="JSON SyntheticSpec file")
    p.add_argument("--n-types", dest="n_types", type=int, default=8)
    p.add_argument("--terms-per-type", dest="terms_per_type", type=int, default=50)
    p.add_argument("--n-relations", dest="n_relations", type=int, default=6)
    p.add_argument("--edges-per-term", dest="edges_per_term", type=float, default=3.0)
    p.add_argument("--feature-dim", dest="feature_dim", type=int, default=32)
    p.add_argument("--feature-noise", dest="feature_noise", type=float, default=2.0)
    p.add_argument("--edge-drop-frac", dest="edge_drop_frac", type=float, default=0.0)
    p.add_argument("--spurious-frac", dest="spurious_frac", type=float, default=0.0)
    p.add_argument("--fragment-frac", dest="fragment_frac", type=float, default=0.0)
    p.add_argument("--feature-noise-sigma", dest="feature_noise_sigma",
                   type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (GraphFormatError, FileFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RemoteValidationError, CleaningAborted) as exc:
        print(f"external service error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
