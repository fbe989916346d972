"""Command-line front end.

Subcommands: synth (generate a dataset), build (construct and save a tree),
assign (route users, optionally growing the tree), recommend (serve one
user), eval (serving-path reward + baseline), sweep (parameter grid).

A run config JSON (`bustree --config run.json <command> ...`) can supply any
subcommand option: top-level keys apply to every subcommand that accepts
them, a section named after a subcommand applies to that one, and explicit
flags override both.

Progress events go to stderr as JSON lines. Every file the commands write is
deterministic for identical inputs; wall-clock numbers only ever land in
stderr events or explicitly separate timings files.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .assign import assign_user, assign_users
from .builder import BuildParams, build_tree
from .data import (NULL, BusError, DataError, classify_users, load_engagements,
                   load_schema, load_users, save_schema)
from .evalbench import evaluate_tree, one_hot_baseline, sweep
from .retrieval import (BlendConfig, build_catalog, load_catalog, recommend,
                        save_catalog, strip_regress)
from .social import connection_segments, load_edges, utility_rank
from .synth import AttrSpec, SynthConfig, generate_synthetic
from .treefile import load_tree, save_tree


class EventLog:
    """One JSON object per line on stderr; --quiet drops everything."""

    def __init__(self, quiet: bool = False):
        self.quiet = quiet
        self._start = time.perf_counter()

    def emit(self, event: str, **fields) -> None:
        if self.quiet:
            return
        payload = {"event": event, "elapsed_s": round(time.perf_counter() - self._start, 3)}
        payload.update(fields)
        print(json.dumps(payload, sort_keys=True), file=sys.stderr, flush=True)


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise DataError(f"{what} not found at {p}; check the path or run the "
                        f"producing command first")
    return p


def _load_json(path: str, what: str) -> dict:
    text = _require_file(path, what).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{what} at {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise DataError(f"{what} at {path} must be a JSON object")
    return raw


def _load_tables(args, log: EventLog):
    schema = load_schema(_require_file(args.schema, "schema file"))
    users = load_users(_require_file(args.users, "user file"), schema)
    engagements = load_engagements(
        _require_file(args.engagements, "engagement file"), users)
    log.emit("loaded", users=users.n_users, items=engagements.n_items,
             training_rows=int(engagements.train_user.size),
             holdout_rows=int(engagements.holdout_user.size))
    return schema, users, engagements


# -- run config ----------------------------------------------------------------

COMMANDS = ("synth", "build", "assign", "recommend", "eval", "sweep")

# Option dests each subcommand will read from a run config file.
CONFIG_KEYS = {
    "synth": ("config", "seed", "out_dir"),
    "build": ("users", "engagements", "schema", "out", "k", "omega", "mu",
              "binary", "workers", "catalog"),
    "assign": ("tree", "schema", "users", "out", "insert", "save_tree"),
    "recommend": ("tree", "catalog", "schema", "attrs", "user", "users", "k",
                  "mode", "weights", "decay", "connections", "assignments",
                  "phi", "combine"),
    "eval": ("tree", "users", "engagements", "schema", "k", "binary",
             "baseline"),
    "sweep": ("config", "seed", "mus", "omegas", "k", "workers", "out",
              "timings"),
}

# Options that must be present after merging flags and run config.
REQUIRED = {
    "synth": ("config", "out_dir"),
    "build": ("users", "engagements", "schema", "out"),
    "assign": ("tree", "schema", "users", "out"),
    "recommend": ("tree", "catalog"),
    "eval": ("tree", "users", "engagements", "schema"),
    "sweep": ("config", "out"),
}


def _load_run_config(path: str) -> dict:
    raw = _load_json(path, "run config")
    all_keys = {key for keys in CONFIG_KEYS.values() for key in keys}
    for key, value in raw.items():
        if key in COMMANDS:
            if not isinstance(value, dict):
                raise DataError(f"run config section {key!r} must be a JSON object")
            unknown = sorted(set(value) - set(CONFIG_KEYS[key]))
            if unknown:
                raise DataError(f"run config section {key!r} has unknown "
                                f"keys: {', '.join(unknown)}")
        elif key not in all_keys:
            raise DataError(f"run config has unknown key {key!r}")
    return raw


def _run_config_from(argv) -> dict:
    """A --config flag ahead of the subcommand names the run config file."""
    for i, token in enumerate(argv):
        if not token.startswith("-"):
            break
        if token == "--config" and i + 1 < len(argv):
            return _load_run_config(argv[i + 1])
        if token.startswith("--config="):
            return _load_run_config(token.split("=", 1)[1])
    return {}


def _config_slice(config: dict, command: str) -> dict:
    merged = {key: value for key, value in config.items()
              if key in CONFIG_KEYS[command]}
    section = config.get(command)
    if isinstance(section, dict):
        merged.update(section)
    return merged


def _check_required(args) -> None:
    missing = [dest for dest in REQUIRED[args.command]
               if getattr(args, dest) in (None, "")]
    if missing:
        flags = ", ".join("--" + dest.replace("_", "-") for dest in missing)
        raise DataError(f"{args.command} needs {flags} (flag or run config)")


# -- synth ------------------------------------------------------------------

def _parse_synth_config(raw: dict) -> SynthConfig:
    attrs = tuple(
        AttrSpec(a["name"], a["cardinality"], a.get("null_rate", 0.0),
                 tuple(a.get("prerequisites", ())))
        for a in raw.get("attributes", ())
    )
    kwargs = {k: v for k, v in raw.items() if k not in ("attributes", "governing")}
    return SynthConfig(attributes=attrs, governing=tuple(raw.get("governing", ())),
                       **kwargs)


def cmd_synth(args, log: EventLog) -> int:
    raw = _load_json(args.config, "synth config")
    if args.seed is not None:
        raw["seed"] = args.seed
    config = _parse_synth_config(raw)
    data = generate_synthetic(config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    save_schema(data.users.schema, out / "schema.json")
    with open(out / "users.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id"] + data.users.schema.names)
        for i, uid in enumerate(data.users.user_ids):
            writer.writerow([uid] + [data.users.vocabularies[j][data.users.codes[i, j]]
                                     for j in range(len(data.users.schema))])
    with open(out / "engagements.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "item_id", "score", "window"])
        for window, (u, it, s) in (("training", data.engagements.training_rows()),
                                   ("holdout", data.engagements.holdout_rows())):
            for r in range(u.size):
                writer.writerow([data.users.user_ids[u[r]],
                                 data.engagements.item_ids[it[r]],
                                 repr(float(s[r])), window])
    with open(out / "edges.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_a", "user_b"])
        for a, b in data.graph.edges():
            writer.writerow([a, b])
    log.emit("synth_written", out_dir=str(out), users=data.users.n_users,
             signatures=data.n_signatures, edges=data.graph.n_edges)
    return 0


# -- build ------------------------------------------------------------------

def cmd_build(args, log: EventLog) -> int:
    schema, users, engagements = _load_tables(args, log)
    classification = classify_users(engagements)
    params = BuildParams(k=args.k, omega=args.omega, mu=args.mu,
                         binary_relevance=args.binary)
    log.emit("build_start", k=params.k, omega=params.omega, mu=params.mu,
             workers=args.workers, active=classification.n_active,
             marginal=classification.n_marginal)
    result = build_tree(users, engagements, classification, params,
                        workers=args.workers)
    save_tree(result.tree, args.out)
    log.emit("tree_saved", path=args.out, nodes=len(result.tree),
             segments=len(result.tree.segment_ids()),
             reward=result.final_reward)

    buildlog = Path(str(args.out) + ".buildlog.jsonl")
    with open(buildlog, "w", encoding="utf-8") as fh:
        header = {"levels": result.tree.levels, "k": params.k,
                  "omega": params.omega, "mu": params.mu,
                  "root_reward": result.root_reward,
                  "final_reward": result.final_reward}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in result.records:
            fh.write(json.dumps({
                "level": rec.level, "chosen": rec.chosen,
                "candidate_totals": rec.candidate_totals,
                "n_staging": rec.n_kept + rec.n_regressed,
                "n_kept": rec.n_kept, "n_regressed": rec.n_regressed,
                "total_reward": rec.total_reward,
            }, sort_keys=True) + "\n")

    if args.catalog:
        catalog = build_catalog(result.tree, users, engagements, classification,
                                params.k)
        save_catalog(catalog, args.catalog)
        log.emit("catalog_saved", path=args.catalog, lists=len(catalog))
    return 0


# -- assign -----------------------------------------------------------------

def cmd_assign(args, log: EventLog) -> int:
    schema = load_schema(_require_file(args.schema, "schema file"))
    users = load_users(_require_file(args.users, "user file"), schema)
    tree = load_tree(_require_file(args.tree, "tree file"))
    mutate = args.insert and not args.read_only
    result = assign_users(tree, users.records(), mutate=mutate)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "segment_id", "path", "partial"])
        for uid in users.user_ids:
            path = result.paths[uid]
            writer.writerow([uid, path.leaf_id,
                             "/".join(value for _, value in path.steps),
                             int(path.partial)])
    log.emit("assigned", users=result.n_assigned, inserted=result.n_inserted,
             insert_rate=result.insert_rate, out=args.out)
    if mutate and args.save_tree:
        save_tree(tree, args.save_tree)
        log.emit("tree_saved", path=args.save_tree, nodes=len(tree))
    return 0


# -- recommend ----------------------------------------------------------------

def _attrs_for(args, schema, levels) -> dict:
    if args.attrs is not None:
        if isinstance(args.attrs, str):
            try:
                attrs = json.loads(args.attrs)
            except json.JSONDecodeError as exc:
                raise DataError(f"--attrs is not valid JSON: {exc}") from None
        else:
            attrs = args.attrs
        if not isinstance(attrs, dict):
            raise DataError("--attrs must be a JSON object of attribute values")
        unknown = sorted(set(attrs) - set(levels))
        if unknown:
            raise DataError(f"unknown attribute name(s) in --attrs: "
                            f"{', '.join(unknown)}; the tree splits on "
                            f"{', '.join(levels)}")
        return {k: (v if v else NULL) for k, v in attrs.items()}
    if schema is None:
        raise DataError("--schema is required when looking up --user in --users")
    users = load_users(_require_file(args.users, "user file"), schema)
    return users.attributes_of(args.user)


def cmd_recommend(args, log: EventLog) -> int:
    tree = load_tree(_require_file(args.tree, "tree file"))
    catalog = load_catalog(_require_file(args.catalog, "catalog file"))
    stripped = strip_regress(tree)
    if args.attrs is None and (args.user is None or args.users is None):
        raise DataError("recommend needs either --attrs or both --user and --users")
    schema = load_schema(_require_file(args.schema, "schema file")) \
        if args.schema else None
    attrs = _attrs_for(args, schema, tree.levels)
    path, _ = assign_user(tree, attrs, mutate=False)
    log.emit("routed", segment=path.leaf_id, partial=path.partial,
             steps=[list(s) for s in path.steps])

    if args.connections:
        if not (args.user and args.assignments):
            raise DataError("connection-aware mode needs --user and --assignments")
        graph = load_edges(_require_file(args.connections, "connection file"))
        segment_of = {}
        with open(_require_file(args.assignments, "assignment file"),
                  newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                segment_of[row["user_id"]] = int(row["segment_id"])
        segment_of.setdefault(args.user, path.leaf_id)
        profile = connection_segments(graph, args.user, segment_of, phi=args.phi)
        log.emit("connection_profile", user=args.user, profile=profile.key())
        ranked = utility_rank(profile, catalog, stripped, k=args.k,
                              combine=args.combine)
    else:
        weights = args.weights
        if isinstance(weights, str):
            weights = tuple(float(w) for w in weights.split(","))
        elif weights is not None:
            weights = tuple(float(w) for w in weights)
        blend = BlendConfig(mode=args.mode, decay=args.decay, weights=weights)
        ranked = recommend(catalog, stripped, path.leaf_id, k=args.k, blend=blend)

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["user_id", "rank", "item_id", "score"])
    for rank, (item, score) in enumerate(ranked, start=1):
        writer.writerow([args.user or "", rank, item, repr(float(score))])
    return 0


# -- eval / sweep -------------------------------------------------------------

def cmd_eval(args, log: EventLog) -> int:
    schema, users, engagements = _load_tables(args, log)
    classification = classify_users(engagements)
    tree = load_tree(_require_file(args.tree, "tree file"))
    summary = evaluate_tree(tree, users, engagements, classification, args.k,
                            binary=args.binary)
    payload = {
        "serve_total": summary.total,
        "serve_mean": summary.mean,
        "n_scored": summary.n_scored,
        "by_segment_decade": summary.by_segment_decade,
        "n_segments": len(tree.segment_ids()),
        "n_nodes": len(tree),
    }
    if args.baseline:
        reward, cells = one_hot_baseline(users, engagements, classification,
                                         args.k, binary=args.binary)
        payload["one_hot_total"] = reward
        payload["one_hot_cells"] = cells
    print(json.dumps(payload, sort_keys=True))
    return 0


def _int_list(raw) -> list:
    return [int(v) for v in (raw.split(",") if isinstance(raw, str) else raw)]


def _float_list(raw) -> list:
    return [float(v) for v in (raw.split(",") if isinstance(raw, str) else raw)]


def cmd_sweep(args, log: EventLog) -> int:
    raw = _load_json(args.config, "synth config")
    if args.seed is not None:
        raw["seed"] = args.seed
    data = generate_synthetic(_parse_synth_config(raw))
    mus = _int_list(args.mus)
    omegas = _float_list(args.omegas)
    log.emit("sweep_start", mus=mus, omegas=omegas, k=args.k,
             users=data.users.n_users)
    report = sweep(data, mus, omegas, k=args.k, workers=args.workers)
    report.to_csv(args.out)
    if args.timings:
        report.to_timings_csv(args.timings)
    for row in report.rows:
        log.emit("sweep_row", mu=row.mu, omega=row.omega,
                 segments=row.n_segments, reward=row.serve_total,
                 wall_clock_s=round(row.wall_clock, 3))
    log.emit("sweep_written", out=args.out)
    return 0


# -- parser -------------------------------------------------------------------

def make_parser(config: dict = None) -> argparse.ArgumentParser:
    config = config or {}
    parser = argparse.ArgumentParser(
        prog="bustree",
        description="Behavior-driven user segmentation trees: build, route, serve.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", dest="run_config", default=None,
                        help="run config JSON seeding subcommand options; "
                             "explicit flags override it")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress progress events on stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    default_workers = os.cpu_count() or 1

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", default=None, help="synth config JSON")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_synth, **_config_slice(config, "synth"))

    p = sub.add_parser("build", help="construct a tree and save it")
    p.add_argument("--users", default=None)
    p.add_argument("--engagements", default=None)
    p.add_argument("--schema", default=None)
    p.add_argument("--out", default=None, help="tree file to write")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--mu", type=int, default=250)
    p.add_argument("--binary", action="store_true",
                   help="binary instead of graded holdout relevance")
    p.add_argument("--workers", type=int, default=default_workers)
    p.add_argument("--catalog", default=None,
                   help="also write the serving catalog here")
    p.set_defaults(func=cmd_build, **_config_slice(config, "build"))

    p = sub.add_parser("assign", help="route users through a saved tree")
    p.add_argument("--tree", default=None)
    p.add_argument("--schema", default=None)
    p.add_argument("--users", default=None)
    p.add_argument("--out", default=None, help="assignment CSV to write")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--insert", action="store_true",
                      help="grow the tree for unseen attribute combinations")
    mode.add_argument("--read-only", action="store_true",
                      help="never grow the tree (the default)")
    p.add_argument("--save-tree", default=None,
                   help="where to save the grown tree (with --insert)")
    p.set_defaults(func=cmd_assign, **_config_slice(config, "assign"))

    p = sub.add_parser("recommend", help="serve a ranked list for one user")
    p.add_argument("--tree", default=None)
    p.add_argument("--catalog", default=None)
    p.add_argument("--schema", default=None)
    p.add_argument("--attrs", default=None,
                   help="JSON object of the user's attribute values")
    p.add_argument("--user", default=None, help="user id to look up in --users")
    p.add_argument("--users", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--mode", choices=("nearest", "blend"), default="nearest")
    p.add_argument("--weights", default=None, help="comma-separated blend weights")
    p.add_argument("--decay", type=float, default=0.5)
    p.add_argument("--connections", default=None,
                   help="connection CSV enabling connection-aware mode")
    p.add_argument("--assignments", default=None, help="assignment CSV (from assign)")
    p.add_argument("--phi", type=float, default=0.1)
    p.add_argument("--combine", choices=("max", "sum"), default="max")
    p.set_defaults(func=cmd_recommend, **_config_slice(config, "recommend"))

    p = sub.add_parser("eval", help="serving-path reward of a saved tree")
    p.add_argument("--tree", default=None)
    p.add_argument("--users", default=None)
    p.add_argument("--engagements", default=None)
    p.add_argument("--schema", default=None)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--binary", action="store_true")
    p.add_argument("--baseline", action="store_true",
                   help="also report the flat cross-product baseline")
    p.set_defaults(func=cmd_eval, **_config_slice(config, "eval"))

    p = sub.add_parser("sweep", help="parameter grid over a synthetic dataset")
    p.add_argument("--config", default=None, help="synth config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mus", default="250", help="comma-separated mu values")
    p.add_argument("--omegas", default="1.0", help="comma-separated omega values")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--workers", type=int, default=default_workers)
    p.add_argument("--out", default=None, help="report CSV to write")
    p.add_argument("--timings", default=None, help="wall-clock CSV to write")
    p.set_defaults(func=cmd_sweep, **_config_slice(config, "sweep"))
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = make_parser(_run_config_from(argv))
        args = parser.parse_args(argv)
        _check_required(args)
        log = EventLog(quiet=args.quiet)
        return args.func(args, log)
    except BusError as exc:
        log_fatal = EventLog(quiet=False)
        log_fatal.emit("error", kind=type(exc).__name__, message=str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
