"""Experiment configuration: JSON schema, per-model defaults, validation.

A config file specifies only what deviates from the defaults for its
model kind; :func:`resolve_config` materializes every field so the
``config.resolved.json`` artifact alone reproduces a run.  Validation
errors carry the JSON path of the offending field.
"""

from __future__ import annotations

import copy
import json

from .losses import LossConfig

MODEL_KINDS = ("gcn", "gae", "vgae")
PROTOCOLS = ("transductive", "inductive")
FEATURE_MODES = ("precomputed", "mean", "chunks", "poe")
GRAPH_KINDS = ("knn", "epsilon")
USER_SOURCES = ("synthetic", "real", "augmented")
REPRESENTATIONS = ("model", "raw")


class ConfigError(ValueError):
    """Invalid configuration; message starts with the field path."""


# per-kind hyperparameter defaults
_MODEL_DEFAULTS = {
    "gcn": {
        "hidden": 128,
        "latent": 64,
        "dropout": 0.20,
        "epochs": 450,
        "lr": 3e-4,
        "weight_decay": 2e-3,
    },
    "gae": {
        "hidden": 128,
        "latent": 64,
        "dropout": 0.0,
        "epochs": 400,
        "lr": 2e-3,
        "weight_decay": 2e-4,
    },
    "vgae": {
        "hidden": 256,
        "latent": 128,
        "dropout": 0.0,
        "epochs": 500,
        "lr": 3e-3,
        "weight_decay": 5e-4,
    },
}

_GRAPH_K_DEFAULTS = {"gcn": 30, "gae": 30, "vgae": 25}

_AUGMENT_DEFAULTS = {
    "gcn": [{"label": "tree", "k": 25, "max_nodes": 2500}],
    "gae": [
        {"label": "animal", "k": 18, "max_nodes": 2500},
        {"label": "mythology", "k": 18, "max_nodes": 2500},
        {"label": "tree", "k": 35, "max_nodes": 2500},
    ],
    "vgae": [{"label": "tree", "k": 25, "max_nodes": 2500}],
}


def default_config(model_kind: str = "gcn") -> dict:
    """Fully materialized defaults for one model kind."""
    if model_kind not in MODEL_KINDS:
        raise ConfigError(f"model.kind: must be one of {MODEL_KINDS}, got {model_kind!r}")
    md = _MODEL_DEFAULTS[model_kind]
    return {
        "seed": 0,
        "protocol": "transductive",
        "output_dir": "runs/out",
        "dataset": {
            "embeddings": None,
            "labels": None,
            "image": None,
            "text": None,
            "chunks": [],
            "experts": [],
            "test_fraction": 0.2,
        },
        "features": {"mode": "precomputed"},
        "graph": {
            "kind": "knn",
            "k": _GRAPH_K_DEFAULTS[model_kind],
            "epsilon": 0.5,
            "similarity_floor": 0.0,
            "edge_dropout": 0.10,
            "augment": copy.deepcopy(_AUGMENT_DEFAULTS[model_kind]),
            "augment_exempt_from_dropout": False,
            "attach_k": None,
        },
        "model": {
            "kind": model_kind,
            "hidden": md["hidden"],
            "latent": md["latent"],
            "dropout": md["dropout"],
            "epochs": md["epochs"],
            "lr": md["lr"],
            "weight_decay": md["weight_decay"],
            "clip_norm": 2.0,
            "logsig_clamp": 10.0,
            "kl_ramp_fraction": 0.5,
        },
        "loss": {
            "kind": "focal",
            "alpha": 0.25,
            "gamma": 2.0,
            "lambda_sup": 0.60,
            "lambda_ssl": 0.60,
            "beta_max": 1.0,
        },
        "users": {
            "source": "synthetic",
            "interactions": None,
            "augment_target": 10000,
            "pseudo_count": 5.0,
            "gain": 5.0,
            "top_k": 5,
            "p_replace": 0.3,
            "gain_low": 0.8,
            "gain_high": 1.2,
            "bias_sigma": 0.05,
            "noise_sigma": 0.05,
        },
        "eval": {
            "num_users": 50,
            "interactions_k": 5,
            "tau": 0.2,
            "k_rec": 5,
            "representation": "model",
        },
    }


def _merge(base: dict, override: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"{here}: unknown field")
        if isinstance(base[key], dict) and key != "augment":
            if not isinstance(value, dict):
                raise ConfigError(f"{here}: expected an object")
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _check(cond, path, message):
    if not cond:
        raise ConfigError(f"{path}: {message}")


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def validate_config(cfg: dict) -> None:
    from .ingest import LABEL_NAMES

    _check(
        isinstance(cfg["seed"], int) and not isinstance(cfg["seed"], bool) and cfg["seed"] >= 0,
        "seed",
        "must be a nonnegative integer",
    )
    _check(cfg["protocol"] in PROTOCOLS, "protocol", f"must be one of {PROTOCOLS}")
    _check(cfg["features"]["mode"] in FEATURE_MODES, "features.mode", f"must be one of {FEATURE_MODES}")
    g = cfg["graph"]
    _check(g["kind"] in GRAPH_KINDS, "graph.kind", f"must be one of {GRAPH_KINDS}")
    _check(isinstance(g["k"], int) and g["k"] >= 1, "graph.k", "must be a positive integer")
    _check(_is_num(g["epsilon"]), "graph.epsilon", "must be a number")
    _check(_is_num(g["edge_dropout"]) and 0.0 <= g["edge_dropout"] <= 1.0, "graph.edge_dropout", "must be in [0, 1]")
    _check(isinstance(g["augment"], list), "graph.augment", "must be a list")
    for i, entry in enumerate(g["augment"]):
        p = f"graph.augment[{i}]"
        _check(isinstance(entry, dict), p, "must be an object")
        _check(set(entry) <= {"label", "k", "max_nodes"}, p, "allowed keys: label, k, max_nodes")
        _check(entry.get("label") in LABEL_NAMES, f"{p}.label", f"must be one of {LABEL_NAMES}")
        _check(isinstance(entry.get("k"), int) and entry["k"] >= 1, f"{p}.k", "must be a positive integer")
        _check(
            isinstance(entry.get("max_nodes", 2500), int) and entry.get("max_nodes", 2500) >= 2,
            f"{p}.max_nodes",
            "must be an integer >= 2",
        )
    if g["attach_k"] is not None:
        _check(isinstance(g["attach_k"], int) and g["attach_k"] >= 1, "graph.attach_k", "must be a positive integer")
    m = cfg["model"]
    _check(m["kind"] in MODEL_KINDS, "model.kind", f"must be one of {MODEL_KINDS}")
    for key in ("hidden", "latent", "epochs"):
        _check(isinstance(m[key], int) and m[key] >= 1, f"model.{key}", "must be a positive integer")
    _check(_is_num(m["lr"]) and m["lr"] > 0, "model.lr", "must be positive")
    _check(_is_num(m["weight_decay"]) and m["weight_decay"] >= 0, "model.weight_decay", "must be nonnegative")
    _check(_is_num(m["dropout"]) and 0.0 <= m["dropout"] < 1.0, "model.dropout", "must be in [0, 1)")
    _check(_is_num(m["clip_norm"]) and m["clip_norm"] > 0, "model.clip_norm", "must be positive")
    _check(_is_num(m["kl_ramp_fraction"]) and 0.0 < m["kl_ramp_fraction"] <= 1.0, "model.kl_ramp_fraction", "must be in (0, 1]")
    lo = cfg["loss"]
    _check(lo["kind"] in ("focal", "wbce", "bce"), "loss.kind", "must be focal, wbce or bce")
    _check(_is_num(lo["alpha"]) and 0.0 < lo["alpha"] < 1.0, "loss.alpha", "must be in (0, 1)")
    _check(_is_num(lo["gamma"]) and lo["gamma"] >= 0.0, "loss.gamma", "must be nonnegative")
    u = cfg["users"]
    _check(u["source"] in USER_SOURCES, "users.source", f"must be one of {USER_SOURCES}")
    if u["source"] in ("real", "augmented"):
        _check(isinstance(u["interactions"], str), "users.interactions", "required for real/augmented users")
    _check(isinstance(u["augment_target"], int) and u["augment_target"] >= 1, "users.augment_target", "must be a positive integer")
    ev = cfg["eval"]
    _check(isinstance(ev["num_users"], int) and ev["num_users"] >= 1, "eval.num_users", "must be a positive integer")
    _check(isinstance(ev["interactions_k"], int) and ev["interactions_k"] >= 1, "eval.interactions_k", "must be a positive integer")
    _check(_is_num(ev["tau"]) and 0.0 < ev["tau"] < 1.0, "eval.tau", "must be in (0, 1)")
    _check(isinstance(ev["k_rec"], int) and ev["k_rec"] >= 1, "eval.k_rec", "must be a positive integer")
    _check(ev["representation"] in REPRESENTATIONS, "eval.representation", f"must be one of {REPRESENTATIONS}")
    d = cfg["dataset"]
    _check(_is_num(d["test_fraction"]) and 0.0 < d["test_fraction"] < 1.0, "dataset.test_fraction", "must be in (0, 1)")


def resolve_config(raw: dict) -> dict:
    """Merge a partial config over the defaults for its model kind."""
    if not isinstance(raw, dict):
        raise ConfigError(": config root must be a JSON object")
    kind = raw.get("model", {}).get("kind", "gcn")
    if kind not in MODEL_KINDS:
        raise ConfigError(f"model.kind: must be one of {MODEL_KINDS}, got {kind!r}")
    cfg = _merge(default_config(kind), raw, "")
    validate_config(cfg)
    return cfg


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return resolve_config(raw)


def loss_config_from(cfg: dict) -> LossConfig:
    lo = cfg["loss"]
    return LossConfig(
        kind=lo["kind"],
        alpha=lo["alpha"],
        gamma=lo["gamma"],
        lambda_sup=lo["lambda_sup"],
        lambda_ssl=lo["lambda_ssl"],
        beta_max=lo["beta_max"],
        clip_norm=cfg["model"]["clip_norm"],
    )


def set_by_path(cfg: dict, dotted: str, value) -> dict:
    """Return a copy of cfg with the scalar field at dotted path replaced."""
    out = copy.deepcopy(cfg)
    parts = dotted.split(".")
    node = out
    for key in parts[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"{dotted}: no such config field")
        node = node[key]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"{dotted}: no such config field")
    if isinstance(node[leaf], (dict, list)):
        raise ConfigError(f"{dotted}: not a scalar field")
    node[leaf] = value
    return out
