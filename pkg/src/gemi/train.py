"""Optimization loop, training protocols, and the gradient-check harness.

Determinism contract: (config, seed) fixes every artifact bit-for-bit.
All randomness is drawn from purpose-tagged substreams (init, augment,
edge_dropout, feature_dropout, noise), so adding or reordering one
consumer can never shift another's stream.

Leakage contract: transductively, test features join the graph but the
loss sees train rows only; inductively, test items are invisible until
training ends and are then attached with train→test message flow only,
so one test item can never influence another's prediction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import models
from .config import loss_config_from
from .graph import (
    ItemGraph,
    attach_test_items,
    attachment_blocks,
    augment_label_edges,
    edge_dropout,
    epsilon_graph,
    knn_graph_symmetric,
    normalize_adjacency,
)
from .ingest import LABEL_NAMES
from .losses import (
    LossConfig,
    edge_pos_weight,
    joint_objective,
    kl_anneal,
    kl_standard_normal,
    kl_standard_normal_grads,
    positive_weights,
    recon_loss_from_scores,
    recon_loss_scores_grad,
    supervised_loss,
    supervised_loss_grad,
)
from .numerics import SeededRng, matmul, spmm

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """First/second moment estimates per parameter tensor."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @staticmethod
    def for_weights(weights: dict[str, np.ndarray]) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(w) for k, w in weights.items()},
            v={k: np.zeros_like(w) for k, w in weights.items()},
        )


def clip_global_norm(grads: dict[str, np.ndarray], tau: float) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients by tau/‖g‖ when the global norm exceeds tau."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > tau:
        scale = tau / total
        grads = {k: g * scale for k, g in grads.items()}
    return grads, total


def adam_step(
    state: AdamState,
    weights: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
    weight_decay: float,
) -> None:
    """In-place bias-corrected Adam update with coupled L2 decay."""
    state.t += 1
    b1t = 1.0 - ADAM_BETA1**state.t
    b2t = 1.0 - ADAM_BETA2**state.t
    for k, w in weights.items():
        g = grads[k]
        if g.shape != w.shape:
            raise ValueError(f"gradient shape mismatch for {k!r}")
        if weight_decay:
            g = g + weight_decay * w
        state.m[k] = ADAM_BETA1 * state.m[k] + (1.0 - ADAM_BETA1) * g
        state.v[k] = ADAM_BETA2 * state.v[k] + (1.0 - ADAM_BETA2) * (g * g)
        m_hat = state.m[k] / b1t
        v_hat = state.v[k] / b2t
        w -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


@dataclass
class TrainReport:
    """Per-epoch loss parts plus run provenance."""

    kind: str
    protocol: str
    seed: int
    epochs: list[dict]
    wall_time_s: float


@dataclass
class TrainedModel:
    """Frozen model plus everything evaluation needs.

    ``representations`` is aligned to the global panel order: train rows
    come from the training graph, test rows transductively from the same
    full graph and inductively from the directed attachment forward.
    """

    kind: str
    protocol: str
    params: object
    base_graph: ItemGraph
    node_index: np.ndarray
    report: TrainReport
    representations: np.ndarray
    extended_graph: ItemGraph | None = None


def _build_base_graph(cfg: dict, X, Y, train_mask_local, rng: SeededRng) -> ItemGraph:
    g_cfg = cfg["graph"]
    if g_cfg["kind"] == "knn":
        g = knn_graph_symmetric(X, g_cfg["k"], g_cfg["similarity_floor"])
    else:
        g = epsilon_graph(X, g_cfg["epsilon"])
    aug_rng = rng.substream("augment")
    for entry in g_cfg["augment"]:
        label_idx = LABEL_NAMES.index(entry["label"])
        g = augment_label_edges(
            g,
            X,
            Y,
            label_idx,
            entry["k"],
            entry.get("max_nodes", 2500),
            train_mask_local,
            aug_rng,
        )
    return g


def _forward_eval(kind, params, adj, X):
    """Clean (dropout-free) forward returning the model representation."""
    if kind == "gcn":
        _, cache = models.gcn_forward(params, adj, X, training=False)
        return models.gcn_hidden(cache)
    if kind == "gae":
        out, _ = models.gae_forward(params, adj, X, training=False)
        return out["Z"]
    mu, _, _ = models.vgae_encode(params, adj, X, training=False)
    return mu


def _inductive_test_reps(kind, params, B, s, X_train, X_test, adj_train):
    """Directed-attachment forward for unseen items.

    Layer 1 aggregates training features (and the item's own row); layer
    2 aggregates the training graph's hidden states.  No other test item
    enters anywhere, so predictions are per-item independent.
    """
    s_col = s[:, None]
    if kind == "gcn":
        w0, w_out = params.w0, params.w1
    elif kind == "gae":
        w0, w_out = params.w0, params.w1
    else:
        w0, w_out = params.w0, params.w_mu
    m1_train = spmm(adj_train, X_train)
    h1_train = np.maximum(matmul(m1_train, w0), 0.0)
    agg1_test = matmul(B, X_train) + s_col * X_test
    h1_test = np.maximum(matmul(agg1_test, w0), 0.0)
    agg2_test = matmul(B, h1_train) + s_col * h1_test
    if kind == "gcn":
        return h1_test  # penultimate representation, as on the train side
    return matmul(agg2_test, w_out)


def _train_loop(cfg: dict, X, Y, train_mask_local, rng: SeededRng):
    """Core optimization over a fixed node set; returns params and logs."""
    kind = cfg["model"]["kind"]
    m_cfg = cfg["model"]
    loss_cfg = loss_config_from(cfg)
    n, d = X.shape
    c = Y.shape[1]

    base_graph = _build_base_graph(cfg, X, Y, train_mask_local, rng)
    pos_w = positive_weights(Y[train_mask_local])

    params = models.init_params(
        kind, d, m_cfg["hidden"], m_cfg["latent"], c, m_cfg["dropout"], rng.substream("init")
    )
    if kind == "vgae":
        params.clamp = m_cfg["logsig_clamp"]
    weights = params.weights()
    adam = AdamState.for_weights(weights)

    edge_rng = rng.substream("edge_dropout")
    drop_rng = rng.substream("feature_dropout")
    noise_rng = rng.substream("noise")

    needs_recon = kind in ("gae", "vgae")
    if needs_recon:
        targets = base_graph.to_adjacency().to_dense()
        np.fill_diagonal(targets, 1.0)
        w_edge = edge_pos_weight(targets)
    ramp = max(1, int(round(m_cfg["kl_ramp_fraction"] * m_cfg["epochs"])))
    exempt = ("label-augment",) if cfg["graph"]["augment_exempt_from_dropout"] else ()

    epoch_logs = []
    for epoch in range(m_cfg["epochs"]):
        g_epoch = edge_dropout(base_graph, cfg["graph"]["edge_dropout"], edge_rng, exempt)
        adj = normalize_adjacency(g_epoch)
        if kind == "gcn":
            logits, cache = models.gcn_forward(params, adj, X, rng=drop_rng, training=True)
            sup = supervised_loss(loss_cfg, logits, Y, pos_w, train_mask_local)
            total, report = joint_objective("gcn", {"sup": sup})
            d_logits = supervised_loss_grad(loss_cfg, logits, Y, pos_w, train_mask_local)
            grads = models.gcn_backward(params, cache, d_logits)
        elif kind == "gae":
            out, cache = models.gae_forward(params, adj, X, rng=drop_rng, training=True)
            sup = supervised_loss(loss_cfg, out["logits"], Y, pos_w, train_mask_local)
            rec = recon_loss_from_scores(targets, out["scores"], w_edge)
            total, report = joint_objective(
                "gae", {"rec": rec, "sup": sup, "lambda_sup": loss_cfg.lambda_sup}
            )
            d_logits = loss_cfg.lambda_sup * supervised_loss_grad(
                loss_cfg, out["logits"], Y, pos_w, train_mask_local
            )
            d_scores = recon_loss_scores_grad(targets, out["scores"], w_edge)
            grads = models.gae_backward(params, cache, d_logits, d_scores)
        else:
            out, cache = models.vgae_forward(params, adj, X, rng=drop_rng, training=True, eps=noise_rng.normal(size=(n, m_cfg["latent"])))
            sup = supervised_loss(loss_cfg, out["logits"], Y, pos_w, train_mask_local)
            rec = recon_loss_from_scores(targets, out["scores"], w_edge)
            kl = kl_standard_normal(out["mu"], out["log_sigma"])
            beta = kl_anneal(epoch, ramp, loss_cfg.beta_max)
            total, report = joint_objective(
                "vgae",
                {"rec": rec, "kl": kl, "beta": beta, "sup": sup, "lambda_ssl": loss_cfg.lambda_ssl},
            )
            d_logits = loss_cfg.lambda_ssl * supervised_loss_grad(
                loss_cfg, out["logits"], Y, pos_w, train_mask_local
            )
            d_scores = recon_loss_scores_grad(targets, out["scores"], w_edge)
            d_mu_kl, d_ls_kl = kl_standard_normal_grads(out["mu"], out["log_sigma"])
            grads = models.vgae_backward(
                params, cache, d_logits, d_scores, beta * d_mu_kl, beta * d_ls_kl
            )
        grads, grad_norm = clip_global_norm(grads, m_cfg["clip_norm"])
        adam_step(adam, weights, grads, m_cfg["lr"], m_cfg["weight_decay"])
        report["grad_norm"] = float(grad_norm)
        epoch_logs.append(report)
    return params, base_graph, epoch_logs


def train_transductive(features, labels, train_mask, cfg: dict, rng: SeededRng) -> TrainedModel:
    """Full-graph training: all features participate, loss on train rows."""
    train_mask = np.asarray(train_mask, dtype=bool)
    if not train_mask.any():
        raise ValueError("training requires a nonempty train split")
    start = time.perf_counter()
    params, base_graph, epoch_logs = _train_loop(cfg, features, labels, train_mask, rng)
    adj_clean = normalize_adjacency(base_graph)
    reps = _forward_eval(cfg["model"]["kind"], params, adj_clean, features)
    wall = time.perf_counter() - start
    return TrainedModel(
        kind=cfg["model"]["kind"],
        protocol="transductive",
        params=params,
        base_graph=base_graph,
        node_index=np.arange(features.shape[0], dtype=np.int64),
        report=TrainReport(
            kind=cfg["model"]["kind"],
            protocol="transductive",
            seed=cfg["seed"],
            epochs=epoch_logs,
            wall_time_s=wall,
        ),
        representations=reps,
    )


def train_inductive(features, labels, train_mask, test_mask, cfg: dict, rng: SeededRng) -> TrainedModel:
    """Train on the training subgraph only, then attach unseen items."""
    train_mask = np.asarray(train_mask, dtype=bool)
    test_mask = np.asarray(test_mask, dtype=bool)
    if not train_mask.any():
        raise ValueError("training requires a nonempty train split")
    train_idx = np.flatnonzero(train_mask)
    test_idx = np.flatnonzero(test_mask)
    X_train = np.ascontiguousarray(features[train_idx])
    X_test = np.ascontiguousarray(features[test_idx])
    Y_train = labels[train_idx]
    start = time.perf_counter()
    params, base_graph, epoch_logs = _train_loop(
        cfg, X_train, Y_train, np.ones(train_idx.size, dtype=bool), rng
    )
    adj_clean = normalize_adjacency(base_graph)
    reps_train = _forward_eval(cfg["model"]["kind"], params, adj_clean, X_train)
    attach_k = cfg["graph"]["attach_k"] or cfg["graph"]["k"]
    attach_k = min(attach_k, train_idx.size)
    extended = attach_test_items(base_graph, X_train, X_test, attach_k)
    B, s = attachment_blocks(extended, base_graph)
    reps_test = _inductive_test_reps(
        cfg["model"]["kind"], params, B, s, X_train, X_test, adj_clean
    )
    reps = np.zeros((features.shape[0], reps_train.shape[1]), dtype=np.float64)
    reps[train_idx] = reps_train
    reps[test_idx] = reps_test
    wall = time.perf_counter() - start
    node_index = np.concatenate([train_idx, test_idx])
    return TrainedModel(
        kind=cfg["model"]["kind"],
        protocol="inductive",
        params=params,
        base_graph=base_graph,
        node_index=node_index,
        report=TrainReport(
            kind=cfg["model"]["kind"],
            protocol="inductive",
            seed=cfg["seed"],
            epochs=epoch_logs,
            wall_time_s=wall,
        ),
        representations=reps,
        extended_graph=extended,
    )


def train_model(features, labels, train_mask, test_mask, cfg: dict, rng: SeededRng) -> TrainedModel:
    if cfg["protocol"] == "inductive":
        return train_inductive(features, labels, train_mask, test_mask, cfg, rng)
    return train_transductive(features, labels, train_mask, cfg, rng)


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradientCheckResult:
    kind: str
    loss_kind: str
    seed: int
    max_rel_err: float
    passed: bool


def _check_instance(kind: str, loss_kind: str, seed: int, n: int = 9, d: int = 4):
    """Build a small random instance away from ReLU/clamp kinks."""
    rng = SeededRng(seed)
    for attempt in range(50):
        inst = rng.substream(f"instance{attempt}")
        X = inst.normal(size=(n, d))
        Y = (inst.random((n, 3)) < 0.4).astype(np.int64)
        mask = np.zeros(n, dtype=bool)
        mask[inst.permutation(n)[: max(2, n // 2)]] = True
        g = knn_graph_symmetric(X, 2)
        adj = normalize_adjacency(g)
        hidden, latent = 5, 3
        params = models.init_params(kind, d, hidden, latent, 3, 0.2, inst.substream("init"))
        masks = models.draw_feature_masks(inst.substream("drop"), n, d, hidden, 0.2)
        eps = inst.substream("noise").normal(size=(n, latent))
        # reject draws whose pre-activations sit within finite-difference
        # reach of the ReLU kink
        if kind == "gcn":
            _, cache = models.gcn_forward(params, adj, X, training=True, masks=masks)
        elif kind == "gae":
            _, cache = models.gae_forward(params, adj, X, training=True, masks=masks)
        else:
            _, cache = models.vgae_forward(params, adj, X, rng=None, training=True, masks=masks, eps=eps)
        if np.abs(cache["h_pre"]).min() > 1e-3:
            break
    loss_cfg = LossConfig(kind=loss_kind)
    if not Y[mask].sum():
        Y[np.flatnonzero(mask)[0], 0] = 1
    pos_w = positive_weights(Y[mask])
    targets = g.to_adjacency().to_dense()
    np.fill_diagonal(targets, 1.0)
    w_edge = edge_pos_weight(targets)
    return X, Y, mask, adj, params, masks, eps, loss_cfg, pos_w, targets, w_edge


def _objective_and_grads(kind, X, Y, mask, adj, params, masks, eps, loss_cfg, pos_w, targets, w_edge, beta=0.7):
    if kind == "gcn":
        logits, cache = models.gcn_forward(params, adj, X, training=True, masks=masks)
        total = supervised_loss(loss_cfg, logits, Y, pos_w, mask)
        d_logits = supervised_loss_grad(loss_cfg, logits, Y, pos_w, mask)
        grads = models.gcn_backward(params, cache, d_logits)
    elif kind == "gae":
        out, cache = models.gae_forward(params, adj, X, training=True, masks=masks)
        sup = supervised_loss(loss_cfg, out["logits"], Y, pos_w, mask)
        rec = recon_loss_from_scores(targets, out["scores"], w_edge)
        total, _ = joint_objective("gae", {"rec": rec, "sup": sup, "lambda_sup": loss_cfg.lambda_sup})
        d_logits = loss_cfg.lambda_sup * supervised_loss_grad(loss_cfg, out["logits"], Y, pos_w, mask)
        d_scores = recon_loss_scores_grad(targets, out["scores"], w_edge)
        grads = models.gae_backward(params, cache, d_logits, d_scores)
    else:
        out, cache = models.vgae_forward(params, adj, X, rng=None, training=True, masks=masks, eps=eps)
        sup = supervised_loss(loss_cfg, out["logits"], Y, pos_w, mask)
        rec = recon_loss_from_scores(targets, out["scores"], w_edge)
        kl = kl_standard_normal(out["mu"], out["log_sigma"])
        total, _ = joint_objective(
            "vgae", {"rec": rec, "kl": kl, "beta": beta, "sup": sup, "lambda_ssl": loss_cfg.lambda_ssl}
        )
        d_logits = loss_cfg.lambda_ssl * supervised_loss_grad(loss_cfg, out["logits"], Y, pos_w, mask)
        d_scores = recon_loss_scores_grad(targets, out["scores"], w_edge)
        d_mu_kl, d_ls_kl = kl_standard_normal_grads(out["mu"], out["log_sigma"])
        grads = models.vgae_backward(params, cache, d_logits, d_scores, beta * d_mu_kl, beta * d_ls_kl)
    return total, grads


def gradient_check(kind: str, loss_kind: str = "focal", seed: int = 0, h: float = 1e-5, tol: float = 1e-4) -> GradientCheckResult:
    """Compare analytic gradients with central differences.

    Dropout masks and reparameterization noise are frozen, so the
    objective is a smooth deterministic function of the parameters.  A
    failure is reported in the result, never raised.
    """
    X, Y, mask, adj, params, masks, eps, loss_cfg, pos_w, targets, w_edge = _check_instance(
        kind, loss_kind, seed
    )
    _, analytic = _objective_and_grads(
        kind, X, Y, mask, adj, params, masks, eps, loss_cfg, pos_w, targets, w_edge
    )
    weights = params.weights()
    flat_analytic = models.flatten_weights({k: analytic[k] for k in weights})
    x0 = models.flatten_weights(weights)

    def f(vec):
        set_weights_params = {k: w for k, w in weights.items()}
        models.set_weights_from_vector(set_weights_params, vec)
        total, _ = _objective_and_grads(
            kind, X, Y, mask, adj, params, masks, eps, loss_cfg, pos_w, targets, w_edge
        )
        return total

    fd = np.empty_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xp[i] += h
        fp = f(xp)
        xm = x0.copy()
        xm[i] -= h
        fm = f(xm)
        fd[i] = (fp - fm) / (2.0 * h)
    f(x0)  # restore original weights
    denom = np.maximum(np.maximum(np.abs(flat_analytic), np.abs(fd)), 1e-6)
    max_rel = float(np.max(np.abs(flat_analytic - fd) / denom))
    return GradientCheckResult(
        kind=kind, loss_kind=loss_kind, seed=seed, max_rel_err=max_rel, passed=max_rel <= tol
    )


def gradient_check_suite(seeds=range(20)) -> list[GradientCheckResult]:
    """The full acceptance battery: every backbone across many seeds."""
    results = []
    for seed in seeds:
        results.append(gradient_check("gcn", "focal", seed))
        results.append(gradient_check("gcn", "wbce", seed))
        results.append(gradient_check("gae", "focal", seed))
        results.append(gradient_check("vgae", "focal", seed))
    return results
