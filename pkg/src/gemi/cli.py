"""Command-line experiment runner.

Subcommands: ``run`` (one config-driven experiment), ``sweep`` (one run
per value of a scalar config field plus a combined CSV), ``users``
(synthetic or real preference datasets), ``check`` (gradient and oracle
self-verification).  GEMI_SEED overrides the config seed everywhere.
Exit codes: 0 success, 2 usage or config error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import fusion, recommend, users as users_mod
from .config import ConfigError, load_config, resolve_config, set_by_path
from .ingest import (
    IngestError,
    PanelTable,
    assign_split,
    load_embeddings,
    load_gaussians,
    load_interactions,
    load_labels,
)
from .numerics import SeededRng
from .train import gradient_check_suite, train_model


def _require_file(path, field):
    if path is None:
        raise ConfigError(f"{field}: required for this run")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"dataset file not found: {path}")
    return path


def _load_features(cfg):
    mode = cfg["features"]["mode"]
    ds = cfg["dataset"]
    tables = {}
    if mode == "precomputed":
        tables["embeddings"] = load_embeddings(_require_file(ds["embeddings"], "dataset.embeddings"))
    elif mode == "mean":
        tables["image"] = load_embeddings(_require_file(ds["image"], "dataset.image"))
        tables["text"] = load_embeddings(_require_file(ds["text"], "dataset.text"))
    elif mode == "chunks":
        if not ds["chunks"]:
            raise ConfigError("dataset.chunks: required for feature mode 'chunks'")
        tables["chunks"] = [
            load_embeddings(_require_file(p, f"dataset.chunks[{i}]")) for i, p in enumerate(ds["chunks"])
        ]
    else:  # poe
        if not ds["experts"]:
            raise ConfigError("dataset.experts: required for feature mode 'poe'")
        tables["experts"] = [
            load_gaussians(_require_file(p, f"dataset.experts[{i}]")) for i, p in enumerate(ds["experts"])
        ]
    return fusion.build_panel_features(mode, tables)


def _build_profiles(cfg, table: PanelTable, rng: SeededRng):
    u_cfg = cfg["users"]
    ev = cfg["eval"]
    train_idx = np.flatnonzero(table.train_mask)
    if u_cfg["source"] == "synthetic":
        return users_mod.sample_synthetic_users(
            train_idx, table.labels, ev["num_users"], ev["interactions_k"], ev["tau"], rng
        )
    inter = load_interactions(
        _require_file(u_cfg["interactions"], "users.interactions"), table
    )
    profiles = users_mod.build_real_profiles(
        inter,
        table.labels,
        table.train_mask,
        pseudo_count=u_cfg["pseudo_count"],
        gain=u_cfg["gain"],
        top_k=u_cfg["top_k"],
    )
    if u_cfg["source"] == "real":
        return profiles
    observed = np.unique(inter.panels[table.train_mask[inter.panels]])
    return users_mod.bootstrap_augment(
        profiles,
        observed,
        u_cfg["augment_target"],
        ev["interactions_k"],
        u_cfg["p_replace"],
        u_cfg["gain_low"],
        u_cfg["gain_high"],
        u_cfg["bias_sigma"],
        u_cfg["noise_sigma"],
        rng,
    )


def run_pipeline(cfg: dict, out_dir: str) -> recommend.MetricsReport:
    """Execute one resolved experiment and write its artifacts."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.resolved.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, sort_keys=True, indent=2)
        fh.write("\n")

    ids, features = _load_features(cfg)
    labels, split = load_labels(_require_file(cfg["dataset"]["labels"], "dataset.labels"), ids)
    table = PanelTable(ids=ids, features=features, labels=labels, split=split)

    rng = SeededRng(cfg["seed"])
    if (table.split == "unassigned").any():
        table = assign_split(table, cfg["dataset"]["test_fraction"], rng.substream("split"))

    trained = train_model(
        table.features, table.labels, table.train_mask, table.test_mask, cfg, rng.substream("train")
    )
    profiles = _build_profiles(cfg, table, rng.substream("users"))

    rep_source = cfg["eval"]["representation"]
    reps = table.features if rep_source == "raw" else trained.representations
    report = recommend.evaluate(
        reps,
        table.labels,
        table.test_mask,
        profiles,
        cfg["eval"]["k_rec"],
        model=f"gemi-{cfg['model']['kind']}",
        representation=rep_source,
        seed=cfg["seed"],
    )

    with open(os.path.join(out_dir, "train_report.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "kind": trained.report.kind,
                "protocol": trained.report.protocol,
                "seed": trained.report.seed,
                "wall_time_s": trained.report.wall_time_s,
                "epochs": trained.report.epochs,
            },
            fh,
            sort_keys=True,
            indent=2,
        )
        fh.write("\n")
    recommend.write_metrics_json(os.path.join(out_dir, "metrics.json"), report)
    recommend.write_metrics_csv(os.path.join(out_dir, "metrics.csv"), report)
    return report


def _apply_seed_env(cfg):
    env = os.environ.get("GEMI_SEED")
    if env is not None:
        try:
            cfg["seed"] = int(env)
        except ValueError:
            raise ConfigError(f"GEMI_SEED: must be an integer, got {env!r}") from None
        if cfg["seed"] < 0:
            raise ConfigError("GEMI_SEED: must be nonnegative")
    return cfg


def cmd_run(args) -> int:
    cfg = _apply_seed_env(load_config(args.config))
    out_dir = args.out or cfg["output_dir"]
    report = run_pipeline(cfg, out_dir)
    for i, name in enumerate(report.label_names):
        print(f"{report.model} {name}: {report.mean[i]:.4f} +/- {report.std[i]:.4f}")
    print(f"artifacts written to {out_dir}")
    return 0


def _derived_seed(base: int, param: str, value) -> int:
    token = f"{param}={json.dumps(value, sort_keys=True)}".encode("utf-8")
    h = int.from_bytes(hashlib.sha256(token).digest()[:8], "big") & (2**63 - 1)
    return base ^ h


def _sweep_worker(job):
    cfg, subdir = job
    run_pipeline(cfg, subdir)
    return subdir


def _parse_value(token: str):
    try:
        return json.loads(token)
    except json.JSONDecodeError:
        return token


def cmd_sweep(args) -> int:
    cfg = _apply_seed_env(load_config(args.config))
    values = [_parse_value(tok) for tok in args.values.split(",") if tok != ""]
    if not values:
        raise ConfigError("--values: at least one value required")
    out_dir = args.out or cfg["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    jobs = []
    for value in values:
        run_cfg = set_by_path(cfg, args.param, value)
        run_cfg["seed"] = _derived_seed(cfg["seed"], args.param, value)
        run_cfg = resolve_config(run_cfg)  # re-validate the override
        safe = str(value).replace(os.sep, "_").replace(" ", "")
        jobs.append((run_cfg, os.path.join(out_dir, f"{args.param}={safe}")))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(_sweep_worker, jobs))
    else:
        for job in jobs:
            _sweep_worker(job)
    sweep_path = os.path.join(out_dir, "sweep.csv")
    with open(sweep_path, "w", encoding="utf-8") as fh:
        fh.write("param,value,label,mean,std,seed\n")
        for value, (run_cfg, subdir) in zip(values, jobs):
            with open(os.path.join(subdir, "metrics.json"), encoding="utf-8") as mf:
                metrics = json.load(mf)
            for label, stats in sorted(metrics["labels"].items()):
                fh.write(
                    f"{args.param},{json.dumps(value)},{label},"
                    f"{stats['mean']!r},{stats['std']!r},{metrics['seed']}\n"
                )
    print(f"sweep results in {sweep_path}")
    return 0


def _train_pool(split) -> np.ndarray:
    mask = split == "train"
    if not mask.any():
        mask = split == "unassigned"
    return np.flatnonzero(mask)


def cmd_users(args) -> int:
    seed = int(os.environ.get("GEMI_SEED", args.seed))
    rng = SeededRng(seed).substream("users")
    ids, labels, split = load_labels(_require_file(args.labels, "--labels"))
    if args.mode == "synth":
        pool = _train_pool(split)
        profiles = users_mod.sample_synthetic_users(
            pool, labels, args.num, args.k, args.tau, rng
        )
    else:
        table = PanelTable(
            ids=ids,
            features=np.zeros((len(ids), 1)),
            labels=labels,
            split=split,
        )
        inter = load_interactions(_require_file(args.interactions, "--interactions"), table)
        train_mask = np.isin(np.arange(len(ids)), _train_pool(split))
        profiles = users_mod.build_real_profiles(
            inter,
            labels,
            train_mask,
            pseudo_count=args.pseudo_count,
            gain=args.gain,
            top_k=args.top_k,
        )
        if args.augment:
            observed = np.unique(inter.panels[train_mask[inter.panels]])
            profiles = users_mod.bootstrap_augment(
                profiles,
                observed,
                args.augment,
                args.k,
                args.p_replace,
                0.8,
                1.2,
                0.05,
                0.05,
                rng.substream("bootstrap"),
            )
    pref_path, inter_path = users_mod.write_user_dataset(args.out, profiles, panel_ids=ids)
    print(f"wrote {len(profiles)} users to {pref_path} and {inter_path}")
    return 0


def cmd_check(args) -> int:
    from . import kernels
    from .graph import knn_graph_symmetric
    from .losses import focal_bce, weighted_bce

    rng = SeededRng(0)
    failures = 0

    def report(name, ok):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok:
            failures += 1

    # kernel agreement: sparse product vs densified product, current backend
    g = knn_graph_symmetric(rng.normal(size=(12, 4)), 3)
    from .graph import normalize_adjacency
    from .numerics import matmul, spmm

    adj = normalize_adjacency(g)
    x = rng.normal(size=(12, 5))
    report(
        f"spmm == matmul on dense adjacency [{kernels.BACKEND} backend]",
        np.array_equal(spmm(adj, x), matmul(adj.to_dense(), x)),
    )

    # loss identity spot check
    z = rng.normal(size=(6, 3))
    y = (rng.random((6, 3)) < 0.5).astype(float)
    w = np.ones(3)
    mask = np.ones(6, dtype=bool)
    lhs = focal_bce(z, y, w, 0.5, 0.0, mask)
    rhs = 0.5 * weighted_bce(z, y, w, mask)
    report("focal(gamma=0, alpha=0.5) == 0.5 * weighted bce", abs(lhs - rhs) <= 1e-12)

    # gradient checks
    for res in gradient_check_suite(seeds=range(args.seeds)):
        report(
            f"gradient {res.kind}/{res.loss_kind} seed {res.seed} "
            f"(max rel err {res.max_rel_err:.2e})",
            res.passed,
        )
    print(f"{failures} failure(s)" if failures else "all checks passed")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gemi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="override the config output_dir")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run once per value of a scalar config field")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True, help="dotted config path, e.g. loss.gamma")
    p_sweep.add_argument("--values", required=True, help="comma-separated JSON scalars")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.set_defaults(func=cmd_sweep)

    p_users = sub.add_parser("users", help="emit a user preference dataset")
    users_sub = p_users.add_subparsers(dest="mode", required=True)
    p_synth = users_sub.add_parser("synth", help="Monte-Carlo K-subset users")
    p_synth.add_argument("--labels", required=True)
    p_synth.add_argument("--num", type=int, default=50)
    p_synth.add_argument("--k", type=int, default=5)
    p_synth.add_argument("--tau", type=float, default=0.2)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True, help="output path prefix")
    p_synth.set_defaults(func=cmd_users)
    p_real = users_sub.add_parser("real", help="preferences from a ratings file")
    p_real.add_argument("--labels", required=True)
    p_real.add_argument("--interactions", required=True)
    p_real.add_argument("--pseudo-count", type=float, default=5.0)
    p_real.add_argument("--gain", type=float, default=5.0)
    p_real.add_argument("--top-k", type=int, default=5)
    p_real.add_argument("--k", type=int, default=5, help="interactions per augmented user")
    p_real.add_argument("--p-replace", type=float, default=0.3)
    p_real.add_argument("--augment", type=int, default=0, help="bootstrap to this many users")
    p_real.add_argument("--seed", type=int, default=0)
    p_real.add_argument("--out", required=True, help="output path prefix")
    p_real.set_defaults(func=cmd_users)

    p_check = sub.add_parser("check", help="self-verification: gradients and oracles")
    p_check.add_argument("--seeds", type=int, default=3, help="seeds per gradient check")
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, IngestError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
