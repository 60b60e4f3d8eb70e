"""Command-line pipeline: synth -> fit -> simulate -> evaluate, plus the
partitioning utility.

Exit codes: 0 success, 2 usage or configuration problem, 3 data or runtime
failure. Every command writes a ``<out>.manifest.json`` recording input
digests, the configuration hash, seed, wall time, and peak memory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import yaml

from .core import EventLog, InfeasibleBalance, ReposimError, parse_timestamp
from .engine import RunStats, SimulationConfig, run
from .ingest import (
    build_slice,
    load_events,
    load_repo_metadata,
    load_user_metadata,
    save_events,
)
from .manifest import ManifestWriter, config_hash
from .metrics import EvalConfig, evaluate, infer_ownership
from .models import (
    BaselineModel,
    BayesianModel,
    GroundEventModel,
    LpeModel,
    NullModel,
    PopularityCandidateSource,
    PreferentialModel,
    attach_new_entity_behavior,
    load_snapshot_state,
    save_snapshot,
)
from .models.newentity import fit_s3d_suite
from .partition import build_interaction_graph, partition_graph
from .synth import SynthConfig, generate

DEFAULT_CONFIG: dict = {
    "fit": {
        "lpe": {"d": 64, "k_top": 100, "reg": 1e-3, "lr": 0.01, "epochs": 50, "seed": 0},
        "bayes": {
            "half_life": 30.0,
            "walk_mean": 2.0,
            "default_p_new_user": 0.2,
            "min_events": 100,
        },
        "new_entity": {
            "enabled": False,
            "p_explore": 0.12,
            "lam": 0.01,
            "max_features": 4,
            "candidates_top": 50,
            "seed": 0,
        },
    },
    "simulate": {"tick_hours": 1.0, "debug_checks": False},
    "evaluate": {
        "rbo_persistence": 0.98,
        "top_n": 500,
        "rbo_depth": 500,
        "max_contributor_repos": 1000,
    },
    "synth": {},
}

PLAIN_MODELS = {
    "baseline": BaselineModel,
    "ground": GroundEventModel,
    "pref": PreferentialModel,
}


class ConfigError(Exception):
    pass


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path) -> dict:
    if path is None:
        return DEFAULT_CONFIG
    try:
        with open(path, "r", encoding="utf-8") as fh:
            user = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"bad config file {path}: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError(f"config root must be a mapping: {path}")
    return _merge(DEFAULT_CONFIG, user)


def _fmt_for(path, explicit) -> str:
    if explicit:
        return explicit
    return "csv" if str(path).endswith(".csv") else "jsonl"


def _parse_window(values) -> tuple[float, float]:
    try:
        t0, t1 = parse_timestamp(values[0]), parse_timestamp(values[1])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return (t0, t1)


def _stripped(slice_):
    """Slice without raw events; enough for the engine to run from."""
    return dataclasses.replace(slice_, events=EventLog([]))


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    manifest = ManifestWriter("fit", {"model": args.model, **cfg["fit"]}, seed=None)
    manifest.add_input(args.train)
    window = _parse_window(args.window)
    fmt = _fmt_for(args.train, args.format)
    log = load_events(args.train, fmt, strict=args.strict)

    extra_outputs = {}
    if args.model == "null":
        model = NullModel().fit(log, window)
        state = None
    else:
        repo_meta = load_repo_metadata(args.repo_meta) if args.repo_meta else None
        user_meta = load_user_metadata(args.user_meta) if args.user_meta else None
        if args.repo_meta:
            manifest.add_input(args.repo_meta)
        if args.user_meta:
            manifest.add_input(args.user_meta)
        slice_ = build_slice(log, window, repo_meta, user_meta)
        if args.model == "lpe":
            model = LpeModel(**cfg["fit"]["lpe"]).fit(slice_)
        elif args.model == "bayes":
            model = BayesianModel(**cfg["fit"]["bayes"]).fit(slice_)
            params_path = str(args.out) + ".params.json"
            with open(params_path, "w", encoding="utf-8") as fh:
                json.dump(model.params_dict(), fh, indent=2, sort_keys=True)
            extra_outputs["params"] = params_path
        else:
            model = PLAIN_MODELS[args.model]().fit(slice_)
        ne_cfg = cfg["fit"]["new_entity"]
        if ne_cfg.get("enabled"):
            s3d = fit_s3d_suite(
                slice_,
                lam=ne_cfg["lam"],
                max_features=ne_cfg["max_features"],
                seed=ne_cfg["seed"],
            )
            source = PopularityCandidateSource(slice_, n_top=ne_cfg["candidates_top"])
            model = attach_new_entity_behavior(
                model, s3d, source, slice_, p_explore=ne_cfg["p_explore"]
            )
        state = _stripped(slice_)

    save_snapshot(
        model,
        args.out,
        window=window,
        config_hash=config_hash(cfg["fit"]),
        state=state,
    )
    manifest.add_output(args.out)
    for path in extra_outputs.values():
        manifest.add_output(path)
    manifest.write(str(args.out) + ".manifest.json")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    sim_cfg = cfg["simulate"]
    manifest = ManifestWriter("simulate", sim_cfg, seed=args.seed)
    manifest.add_input(args.snapshot)
    window = _parse_window(args.window)
    fmt = _fmt_for(args.out, args.format)

    model, state, header = load_snapshot_state(args.snapshot)
    if window[1] <= window[0]:  # zero-length window: empty log, success
        save_events(EventLog([]), args.out, fmt)
        manifest.add_output(args.out)
        manifest.write(str(args.out) + ".manifest.json")
        return 0

    run_cfg = SimulationConfig(
        window=window,
        seed=args.seed,
        partitions=args.partitions,
        tick_seconds=float(sim_cfg["tick_hours"]) * 3600.0,
        debug_checks=bool(sim_cfg["debug_checks"]),
    )
    stats = RunStats()
    out_log = run(run_cfg, state, model, stats=stats)
    save_events(out_log, args.out, fmt)
    manifest.add_output(args.out)
    manifest.extra = {
        "snapshot_model": header["model"],
        "partitions": args.partitions,
        "n_events": stats.n_events,
        "ticks": stats.ticks,
        "cross_partition_messages": stats.cross_partition_messages,
        "migrations": stats.migrations,
    }
    manifest.write(str(args.out) + ".manifest.json")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    ev_cfg = cfg["evaluate"]
    manifest = ManifestWriter("evaluate", ev_cfg, seed=None)
    manifest.add_input(args.sim)
    manifest.add_input(args.truth)
    sim = load_events(args.sim, _fmt_for(args.sim, args.format))
    truth = load_events(args.truth, _fmt_for(args.truth, args.format))

    community = None
    if args.communities:
        manifest.add_input(args.communities)
        with open(args.communities, "r", encoding="utf-8") as fh:
            community = {line.strip() for line in fh if line.strip()}

    ownership = None
    known_users = known_repos = None
    if args.train:
        manifest.add_input(args.train)
        train_log = load_events(args.train, _fmt_for(args.train, args.format))
        ownership = infer_ownership(train_log.merged_with(truth))
        known_users = {ev.user_id for ev in train_log}
        known_repos = {ev.repo_id for ev in train_log}

    window = _parse_window(args.window) if args.window else None
    report = evaluate(
        sim,
        truth,
        EvalConfig(
            rbo_persistence=float(ev_cfg["rbo_persistence"]),
            top_n=int(ev_cfg["top_n"]),
            rbo_depth=int(ev_cfg["rbo_depth"]),
            max_contributor_repos=int(ev_cfg["max_contributor_repos"]),
            window=window,
            ownership=ownership,
            known_users=known_users,
            known_repos=known_repos,
            community=community,
        ),
    )
    json_path = str(args.out) + ".json"
    text_path = str(args.out) + ".txt"
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
        fh.write("\n")
    manifest.add_output(json_path)
    manifest.add_output(text_path)
    manifest.write(str(args.out) + ".manifest.json")
    return 0


def cmd_partition(args) -> int:
    manifest = ManifestWriter("partition", {"k": args.k}, seed=args.seed)
    manifest.add_input(args.train)
    log = load_events(args.train, _fmt_for(args.train, args.format))
    if args.window:
        window = _parse_window(args.window)
    else:
        first, last = log.span()
        window = (first, last + 1.0)
    slice_ = build_slice(log, window)
    graph = build_interaction_graph(slice_)
    assignment = partition_graph(graph, args.k, seed=args.seed)
    payload = {
        "k": assignment.k,
        "cut_weight": assignment.cut_weight,
        "sizes": assignment.sizes(),
        "parts": {
            f"{kind}:{name}": part
            for (kind, name), part in zip(assignment.nodes, assignment.parts)
        },
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.add_output(args.out)
    manifest.extra = {"cut_weight": assignment.cut_weight}
    manifest.write(str(args.out) + ".manifest.json")
    return 0


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    synth_cfg = dict(cfg["synth"])
    if args.seed is not None:
        synth_cfg["seed"] = args.seed
    try:
        scfg = SynthConfig(**synth_cfg)
    except TypeError as exc:
        raise ConfigError(f"bad synth config: {exc}") from None
    manifest = ManifestWriter("synth", synth_cfg, seed=scfg.seed)
    log, record = generate(scfg)
    fmt = _fmt_for(args.out, args.format)
    save_events(log, args.out, fmt)
    params_path = str(args.out) + ".params.json"
    with open(params_path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.add_output(args.out)
    manifest.add_output(params_path)
    manifest.write(str(args.out) + ".manifest.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reposim",
        description="Fit, simulate, and evaluate GitHub-style event ecosystems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a behavioral model from an event log")
    p.add_argument("--model", required=True,
                   choices=["null", "baseline", "ground", "pref", "lpe", "bayes"])
    p.add_argument("--train", required=True, help="training event log")
    p.add_argument("--window", nargs=2, required=True, metavar=("START", "END"),
                   help="training window (prediction window for the null model)")
    p.add_argument("--out", required=True, help="snapshot file to write")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--repo-meta", help="repo metadata CSV")
    p.add_argument("--user-meta", help="user metadata CSV")
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.add_argument("--strict", action="store_true", help="fail on malformed lines")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="simulate a window from a fitted snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--window", nargs=2, required=True, metavar=("START", "END"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--partitions", type=int, default=1)
    p.add_argument("--out", required=True, help="output event log")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.add_argument("--threads", type=int, default=1,
                   help="accepted for compatibility; partitions execute in-process")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score a simulated log against ground truth")
    p.add_argument("--sim", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True, help="report path prefix")
    p.add_argument("--communities", help="file with one community user id per line")
    p.add_argument("--train", help="training log for ownership and new-entity exclusion")
    p.add_argument("--window", nargs=2, metavar=("START", "END"))
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("partition", help="partition the interaction graph")
    p.add_argument("--train", required=True)
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", nargs=2, metavar=("START", "END"))
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("synth", help="generate a synthetic ground-truth ecosystem")
    p.add_argument("--config", help="YAML config file (synth section)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InfeasibleBalance, ValueError) as exc:
        print(f"reposim {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ReposimError, OSError) as exc:
        print(f"reposim {args.command}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
