"""Command-line surface: reweigh, effects, gen-synth, evaluate.

A run is driven by a JSON config document; command-line flags override single
fields.  Every reweigh run writes a manifest capturing the fully resolved
configuration plus content hashes, and feeding that manifest back through
``--config`` reproduces the weight files byte for byte.

Exit codes: 0 success and fair (|effect| < tau), 1 success but the effect
exceeds tau, 2 configuration/input errors, 3 runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import fields as dataclass_fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    ColumnarDataset,
    DataError,
    Encoder,
    SplitPlan,
    export_weights,
    load_csv,
    split,
    split_indices,
)
from .effects import (
    MetricSummary,
    EffectReport,
    discriminator_gap,
    downstream_accuracy,
    estimate_effect,
    statistical_parity,
    wasserstein_distance,
)
from .graph import (
    CausalGraph,
    GraphError,
    PathSet,
    counterfactual_path_set,
    direct_path_set,
    graph_fingerprint,
    indirect_path_set,
    parse_graph,
    total_path_set,
    validate_path_set,
)
from .model import ModelError, StructuredModel
from .reweighter import SolverError
from .synth import generate, oracle_effect, parse_scm
from .trainer import TrainConfig, TrainingError, repeat_protocol, train, write_log

CONFIG_KEYS = {
    "data",
    "graph",
    "out",
    "schema",
    "mode",
    "paths",
    "condition",
    "tau",
    "repeats",
    "train",
    "train_fraction",
    "wasserstein",
    "wasserstein_steps",
    "critic_context_nodes",
}


class ConfigError(ValueError):
    """Unusable run configuration or missing input file."""


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _hash(obj) -> str:
    return hashlib.sha256(_canonical(obj).encode("utf-8")).hexdigest()


def load_config(path) -> dict:
    """Read a run config; a reweigh manifest is accepted and unwrapped."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if "config" in raw and isinstance(raw["config"], dict):
        raw = raw["config"]
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config field {sorted(unknown)[0]!r}")
    for required in ("data", "graph", "schema"):
        if required not in raw:
            raise ConfigError(f"config lacks required field {required!r}")
    return raw


def apply_overrides(config: dict, args: argparse.Namespace) -> dict:
    config = dict(config)
    train_section = dict(config.get("train", {}))
    if getattr(args, "seed", None) is not None:
        train_section["seed"] = args.seed
    if getattr(args, "t_balance", None) is not None:
        train_section["balance"] = args.t_balance
    if train_section:
        config["train"] = train_section
    for key in ("mode", "tau", "out", "repeats"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return config


def parse_schema(config: dict):
    schema = []
    declared_levels: dict[str, list[str]] = {}
    for entry in config["schema"]:
        if not isinstance(entry, dict) or "name" not in entry or "kind" not in entry:
            raise ConfigError(f"bad schema entry: {entry!r}")
        schema.append((entry["name"], entry["kind"]))
        if "levels" in entry:
            declared_levels[entry["name"]] = [str(v) for v in entry["levels"]]
    return schema, declared_levels


def load_inputs(config: dict) -> tuple[ColumnarDataset, CausalGraph, dict]:
    schema, declared_levels = parse_schema(config)
    graph_path = Path(config["graph"])
    if not graph_path.exists():
        raise ConfigError(f"graph file not found: {graph_path}")
    graph = parse_graph(graph_path.read_text(encoding="utf-8"))
    data_path = Path(config["data"])
    if not data_path.exists():
        raise ConfigError(f"data file not found: {data_path}")
    ds = load_csv(data_path, schema)
    for spec in graph.nodes:
        try:
            column = ds.column(spec.name)
        except DataError:
            raise ConfigError(
                f"graph node {spec.name!r} has no column in the data file"
            ) from None
        if column.kind != spec.kind:
            raise ConfigError(
                f"node {spec.name!r}: graph kind {spec.kind} != schema kind {column.kind}"
            )
    return ds, graph, declared_levels


def build_mode(config: dict, graph: CausalGraph) -> PathSet:
    mode = config.get("mode", "total")
    if mode == "total":
        return total_path_set(graph)
    if mode == "path_specific":
        selection = config.get("paths", "indirect")
        if selection == "indirect":
            return indirect_path_set(graph)
        if selection == "direct":
            return direct_path_set(graph)
        if selection == "all":
            return PathSet("path_specific", total_path_set(graph).on_pi_edges)
        raise ConfigError(f"unknown path selection {selection!r}")
    if mode == "counterfactual":
        condition = config.get("condition")
        if not condition:
            raise ConfigError("counterfactual mode requires a condition")
        return counterfactual_path_set(graph, [(n, v) for n, v in condition])
    raise ConfigError(f"unknown fairness mode {mode!r}")


def build_train_config(config: dict) -> TrainConfig:
    section = dict(config.get("train", {}))
    known = {f.name for f in dataclass_fields(TrainConfig)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown train field {sorted(unknown)[0]!r}")
    for tuple_field in ("hidden", "critic_hidden"):
        if tuple_field in section:
            section[tuple_field] = tuple(section[tuple_field])
    try:
        return TrainConfig(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from None


def write_manifest(out_dir: Path, config: dict, graph: CausalGraph) -> None:
    manifest = {
        "config": config,
        "config_hash": _hash(config),
        "graph_hash": graph_fingerprint(graph),
        "seed": config.get("train", {}).get("seed", TrainConfig().seed),
        "version": __version__,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _write_report(out_dir: Path, report: EffectReport) -> None:
    (out_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / "report.txt").write_text(report.render_table() + "\n", encoding="utf-8")


def cmd_reweigh(args) -> int:
    config = apply_overrides(load_config(args.config), args)
    ds, graph, declared_levels = load_inputs(config)
    mode = build_mode(config, graph)
    validate_path_set(graph, mode)
    train_config = build_train_config(config)
    tau = float(config.get("tau", 0.05))
    repeats = int(config.get("repeats", 5))
    out_dir = Path(config.get("out", "fairweigh-out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir, config, graph)

    report, artifacts = repeat_protocol(
        ds,
        graph,
        mode,
        train_config,
        repeats=repeats,
        tau=tau,
        train_fraction=float(config.get("train_fraction", 0.8)),
        declared_levels=declared_levels,
        compute_wasserstein=bool(config.get("wasserstein", True)),
        wasserstein_steps=int(config.get("wasserstein_steps", 2000)),
        critic_context_nodes=tuple(config.get("critic_context_nodes", ())),
    )

    mean_weights = np.zeros(ds.m)
    counts = np.zeros(ds.m)
    for art in artifacts:
        rep_dir = out_dir / f"rep_{art['repetition']}"
        rep_dir.mkdir(exist_ok=True)
        export_weights(
            art["train"].replace_weights(art["weights"]), rep_dir / "weights.csv"
        )
        write_log(art["log"], rep_dir / "train_log.jsonl")
        art["model"].save(rep_dir / "checkpoint.npz")
        plan = SplitPlan(
            train_config.seed, float(config.get("train_fraction", 0.8)), art["repetition"]
        )
        train_idx, _ = split_indices(ds.m, plan)
        mean_weights[train_idx] += art["weights"]
        counts[train_idx] += 1.0
    averaged = np.where(counts > 0, mean_weights / np.maximum(counts, 1.0), 1.0)
    export_weights(ds.replace_weights(averaged), out_dir / "weights_mean.csv")
    _write_report(out_dir, report)
    print(report.render_table())
    return 0 if report.passed else 1


def _read_weights(path, m: int) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"index", "weight"} <= set(reader.fieldnames):
            raise ConfigError("weights file needs 'index' and 'weight' columns")
        w = np.full(m, np.nan)
        for row in reader:
            i = int(row["index"])
            if not 0 <= i < m:
                raise ConfigError(f"weight index {i} outside dataset of {m} rows")
            w[i] = float(row["weight"])
    if np.isnan(w).any():
        missing = int(np.isnan(w).sum())
        raise ConfigError(f"weights file covers {m - missing} of {m} rows")
    return w


def cmd_effects(args) -> int:
    config = apply_overrides(load_config(args.config), args)
    ds, graph, declared_levels = load_inputs(config)
    mode = build_mode(config, graph)
    validate_path_set(graph, mode)
    train_config = build_train_config(config)
    tau = float(config.get("tau", 0.05))

    encoder = Encoder().fit(ds, declared_levels)
    model = StructuredModel(
        graph,
        encoder,
        mode,
        seed=train_config.seed,
        hidden=train_config.hidden,
        critic_hidden=train_config.critic_hidden,
        observational_cascade=train_config.observational_cascade,
        critic_context_nodes=tuple(config.get("critic_context_nodes", ())),
    )
    if args.checkpoint:
        model.restore(args.checkpoint)
    else:
        # fit without reweighting: a vanishing balance pins weights at one
        model, _, _ = train(model, ds, replace(train_config, balance=1e-9))

    weights = _read_weights(args.weights, ds.m) if args.weights else None
    x = encoder.transform(ds)
    effect = estimate_effect(model, ds, x, weights)
    gap = discriminator_gap(model, ds, weights, x)
    parity = statistical_parity(
        ds, graph.sensitive, graph.outcome, weights, declared_levels
    )
    distance = None
    if weights is not None and bool(config.get("wasserstein", True)):
        distance = wasserstein_distance(
            ds,
            ds.replace_weights(weights),
            encoder,
            seed=train_config.seed,
            steps=int(config.get("wasserstein_steps", 2000)),
        )
    report = EffectReport(
        mode=mode.mode,
        effect=MetricSummary.of([effect]),
        critic_gap=MetricSummary.of([gap]),
        wasserstein=None if distance is None else MetricSummary.of([distance]),
        parity=MetricSummary.of([parity]),
        accuracy=None,
        threshold=tau,
    )
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_report(out_dir, report)
    print(report.render_table())
    return 0 if report.passed else 1


def cmd_gen_synth(args) -> int:
    scm_path = Path(args.scm)
    if not scm_path.exists():
        raise ConfigError(f"scm file not found: {scm_path}")
    scm = parse_scm(scm_path.read_text(encoding="utf-8"), seed=args.seed)
    ds = generate(scm, args.n)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ds.names)
        for i in range(ds.m):
            row = []
            for col in ds.columns:
                value = col.values[i]
                row.append(repr(float(value)) if col.kind == "continuous" else str(value))
            writer.writerow(row)

    sidecar: dict = {"n": args.n, "seed": args.seed, "oracle_samples": args.oracle_samples}
    te, te_se = oracle_effect(
        scm, total_path_set(scm.graph), n=args.oracle_samples, seed=args.seed
    )
    sidecar["total_effect"] = {"value": te, "stderr": te_se}
    try:
        pi = indirect_path_set(scm.graph)
    except GraphError:
        pi = None
    if pi is not None:
        se, se_se = oracle_effect(scm, pi, n=args.oracle_samples, seed=args.seed)
        sidecar["indirect_effect"] = {"value": se, "stderr": se_se}
    if args.condition:
        condition = [tuple(c.split("=", 1)) for c in args.condition]
        ce, ce_se = oracle_effect(
            scm,
            counterfactual_path_set(scm.graph, condition),
            n=args.oracle_samples,
            seed=args.seed,
        )
        sidecar["counterfactual_effect"] = {
            "value": ce,
            "stderr": ce_se,
            "condition": [list(c) for c in condition],
        }
    Path(str(out) + ".oracle.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {ds.m} rows to {out}")
    return 0


def cmd_evaluate(args) -> int:
    config = apply_overrides(load_config(args.config), args)
    ds, graph, declared_levels = load_inputs(config)
    plan = SplitPlan(
        config.get("train", {}).get("seed", TrainConfig().seed),
        float(config.get("train_fraction", 0.8)),
        args.repetition,
    )
    train_ds, test_ds = split(ds, plan)
    weights = None
    if args.weights:
        full = _read_weights(args.weights, ds.m)
        train_idx, _ = split_indices(ds.m, plan)
        weights = full[train_idx]
    encoder = Encoder().fit(train_ds, declared_levels)
    accuracy = downstream_accuracy(train_ds, test_ds, graph.outcome, weights, encoder)
    print(f"weighted logistic regression accuracy: {accuracy:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairweigh",
        description="causal-fairness-guided sample reweighting for tabular data",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="run config JSON (or manifest)")
        p.add_argument("--seed", type=int, help="override training seed")
        p.add_argument("--mode", choices=["total", "path_specific", "counterfactual"])
        p.add_argument("--t-balance", type=float, dest="t_balance",
                       help="override the balance parameter")
        p.add_argument("--tau", type=float, help="fairness threshold")
        p.add_argument("--out", help="output directory")
        p.add_argument("--repeats", type=int, help="number of repetitions")

    p_reweigh = sub.add_parser("reweigh", help="train and export fair sample weights")
    add_common(p_reweigh)
    p_reweigh.set_defaults(func=cmd_reweigh)

    p_effects = sub.add_parser("effects", help="estimate causal effects on a dataset")
    add_common(p_effects)
    p_effects.add_argument("--weights", help="weights CSV (index,weight columns)")
    p_effects.add_argument("--checkpoint", help="model checkpoint instead of fitting")
    p_effects.set_defaults(func=cmd_effects)

    p_gen = sub.add_parser("gen-synth", help="sample a dataset from an SCM document")
    p_gen.add_argument("--scm", required=True, help="SCM description file")
    p_gen.add_argument("--n", type=int, required=True, help="number of rows")
    p_gen.add_argument("--out", required=True, help="output CSV path")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--oracle-samples", type=int, default=1_000_000)
    p_gen.add_argument(
        "--condition",
        action="append",
        metavar="NODE=VALUE",
        help="also compute the conditioned oracle effect (repeatable)",
    )
    p_gen.set_defaults(func=cmd_gen_synth)

    p_eval = sub.add_parser("evaluate", help="downstream weighted-regression accuracy")
    add_common(p_eval)
    p_eval.add_argument("--weights", help="weights CSV over the full dataset")
    p_eval.add_argument("--repetition", type=int, default=0, help="split index")
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (GraphError, DataError) as exc:
        kind = "graph" if isinstance(exc, GraphError) else "data"
        print(f"{kind} error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, ModelError, SolverError, FloatingPointError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
