"""The three graph backbones with hand-derived backward passes.

Forward formulas:

* GCN:  Z = A~ ReLU(A~ X W0) W1, feature dropout on X and the hidden
  activations while training (inverted scaling).
* GAE:  two-layer GCN encoder to a latent Z, inner-product decoder
  sigma(Z Z^T), linear label head on Z.
* VGAE: shared first layer H = ReLU(A~ X W0), then mu = A~ H W_mu and
  log_sigma = clamp(A~ H W_sig); Z = mu + exp(log_sigma) * eps.

Backward passes exploit the symmetry of A~ (its transpose product is
the same spmm) and treat the reparameterization noise as a constant
(pathwise estimator).  Caches hold every intermediate needed, so a
backward call never recomputes a forward quantity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import SeededRng, SparseAdjacency, as_matrix, matmul, spmm

LOG_SIGMA_CLAMP = 10.0


def glorot(rng: SeededRng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


@dataclass
class GcnParams:
    w0: np.ndarray  # d x h
    w1: np.ndarray  # h x c
    dropout: float = 0.0

    def weights(self) -> dict[str, np.ndarray]:
        return {"w0": self.w0, "w1": self.w1}


@dataclass
class GaeParams:
    w0: np.ndarray  # d x h
    w1: np.ndarray  # h x d_z
    head: np.ndarray  # d_z x c
    dropout: float = 0.0

    def weights(self) -> dict[str, np.ndarray]:
        return {"w0": self.w0, "w1": self.w1, "head": self.head}


@dataclass
class VgaeParams:
    w0: np.ndarray  # d x h (shared first layer)
    w_mu: np.ndarray  # h x d_z
    w_sigma: np.ndarray  # h x d_z
    head: np.ndarray  # d_z x c
    dropout: float = 0.0
    clamp: float = LOG_SIGMA_CLAMP

    def weights(self) -> dict[str, np.ndarray]:
        return {"w0": self.w0, "w_mu": self.w_mu, "w_sigma": self.w_sigma, "head": self.head}


def init_params(kind: str, d: int, hidden: int, latent: int, c: int, dropout: float, rng: SeededRng):
    """Glorot-uniform initialization from a dedicated substream."""
    if kind == "gcn":
        return GcnParams(w0=glorot(rng, d, hidden), w1=glorot(rng, hidden, c), dropout=dropout)
    if kind == "gae":
        return GaeParams(
            w0=glorot(rng, d, hidden),
            w1=glorot(rng, hidden, latent),
            head=glorot(rng, latent, c),
            dropout=dropout,
        )
    if kind == "vgae":
        return VgaeParams(
            w0=glorot(rng, d, hidden),
            w_mu=glorot(rng, hidden, latent),
            w_sigma=glorot(rng, hidden, latent),
            head=glorot(rng, latent, c),
            dropout=dropout,
        )
    raise ValueError(f"unknown model kind {kind!r}")


def flatten_weights(weights: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([weights[k].ravel() for k in sorted(weights)])


def set_weights_from_vector(weights: dict[str, np.ndarray], vec: np.ndarray) -> None:
    offset = 0
    for k in sorted(weights):
        size = weights[k].size
        weights[k][...] = vec[offset : offset + size].reshape(weights[k].shape)
        offset += size
    if offset != vec.size:
        raise ValueError("vector length does not match parameter count")


def dropout_mask(rng: SeededRng, shape, rate: float) -> np.ndarray:
    """Inverted-dropout mask: entries 0 or 1/(1-rate)."""
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) < (1.0 - rate)
    return keep / (1.0 - rate)


def draw_feature_masks(rng: SeededRng, n: int, d: int, hidden: int, rate: float):
    """Masks for the input features and the hidden activations."""
    return dropout_mask(rng, (n, d), rate), dropout_mask(rng, (n, hidden), rate)


def _encode_two_layer(w0, w_out, adj: SparseAdjacency, X, masks):
    """Shared skeleton: out = A~ drop(ReLU(A~ drop(X) W0)) W_out."""
    mask_in, mask_hidden = masks
    X0 = X * mask_in if mask_in is not None else X
    m1 = spmm(adj, X0)
    h_pre = matmul(m1, w0)
    h = np.maximum(h_pre, 0.0)
    hd = h * mask_hidden if mask_hidden is not None else h
    m2 = spmm(adj, hd)
    out = matmul(m2, w_out)
    cache = {"adj": adj, "m1": m1, "h_pre": h_pre, "h": h, "hd": hd, "m2": m2, "masks": masks}
    return out, cache


def _encode_backward(cache, w_out, d_out):
    """Gradients of the two-layer skeleton: returns (dW0, dW_out)."""
    d_w_out = matmul(np.ascontiguousarray(cache["m2"].T), d_out)
    d_m2 = matmul(d_out, np.ascontiguousarray(w_out.T))
    d_hd = spmm(cache["adj"], d_m2)  # A~ is symmetric
    mask_in, mask_hidden = cache["masks"]
    d_h = d_hd * mask_hidden if mask_hidden is not None else d_hd
    d_h_pre = d_h * (cache["h_pre"] > 0.0)
    d_w0 = matmul(np.ascontiguousarray(cache["m1"].T), d_h_pre)
    return d_w0, d_w_out


def _resolve_masks(n, d, hidden, rate, training, rng, masks):
    if not training:
        return (None, None)
    if masks is not None:
        return masks
    if rng is None:
        raise ValueError("training forward needs an rng or explicit masks")
    return draw_feature_masks(rng, n, d, hidden, rate)


def gcn_forward(params: GcnParams, adj: SparseAdjacency, X, rng=None, training=False, masks=None):
    """Two-layer GCN logits; cache carries all backprop intermediates."""
    X = as_matrix(X)
    masks = _resolve_masks(X.shape[0], X.shape[1], params.w0.shape[1], params.dropout, training, rng, masks)
    logits, cache = _encode_two_layer(params.w0, params.w1, adj, X, masks)
    return logits, cache


def gcn_backward(params: GcnParams, cache, d_logits) -> dict[str, np.ndarray]:
    d_w0, d_w1 = _encode_backward(cache, params.w1, d_logits)
    return {"w0": d_w0, "w1": d_w1}


def gcn_hidden(cache) -> np.ndarray:
    """Penultimate representation (post-ReLU hidden activations)."""
    return cache["h"]


def encode_gcn2(w0, w_out, adj: SparseAdjacency, X, rng=None, training=False, masks=None):
    """GAE/VGAE-style encoder: the GCN skeleton with a latent output dim."""
    X = as_matrix(X)
    masks = _resolve_masks(X.shape[0], X.shape[1], w0.shape[1], 0.0, training, rng, masks)
    return _encode_two_layer(w0, w_out, adj, X, masks)


def decode_adjacency(Z) -> np.ndarray:
    """Edge probabilities sigma(Z Z^T); symmetric, entries in (0, 1)."""
    Z = as_matrix(Z)
    scores = matmul(Z, np.ascontiguousarray(Z.T))
    out = np.empty_like(scores)
    pos = scores >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-scores[pos]))
    ez = np.exp(scores[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def decode_scores(Z) -> np.ndarray:
    """Decoder logits Z Z^T (the stable quantity for loss evaluation)."""
    Z = as_matrix(Z)
    return matmul(Z, np.ascontiguousarray(Z.T))


def classify_head(Z, head) -> np.ndarray:
    """Linear label head on the latent representation."""
    return matmul(as_matrix(Z), head)


def gae_forward(params: GaeParams, adj: SparseAdjacency, X, rng=None, training=False, masks=None):
    X = as_matrix(X)
    masks = _resolve_masks(X.shape[0], X.shape[1], params.w0.shape[1], params.dropout, training, rng, masks)
    Z, cache = _encode_two_layer(params.w0, params.w1, adj, X, masks)
    cache["Z"] = Z
    logits = classify_head(Z, params.head)
    return {"Z": Z, "logits": logits, "scores": decode_scores(Z)}, cache


def gae_backward(params: GaeParams, cache, d_logits, d_scores) -> dict[str, np.ndarray]:
    """Combine supervised and reconstruction pull on the latent.

    d_scores is dL/d(Z Z^T); its contribution to Z is (G + G^T) Z.
    """
    Z = cache["Z"]
    d_head = matmul(np.ascontiguousarray(Z.T), d_logits)
    dZ = matmul(d_logits, np.ascontiguousarray(params.head.T))
    if d_scores is not None:
        sym = d_scores + d_scores.T
        dZ = dZ + matmul(np.ascontiguousarray(sym), Z)
    d_w0, d_w1 = _encode_backward(cache, params.w1, dZ)
    return {"w0": d_w0, "w1": d_w1, "head": d_head}


def reparameterize(mu, log_sigma, rng: SeededRng) -> np.ndarray:
    """Z = mu + exp(log_sigma) * eps with eps ~ N(0, I) from rng."""
    eps = rng.normal(size=np.asarray(mu).shape)
    return np.asarray(mu) + np.exp(np.asarray(log_sigma)) * eps


def vgae_encode(params: VgaeParams, adj: SparseAdjacency, X, rng=None, training=False, masks=None):
    """Shared-first-layer encoder: returns (mu, log_sigma, cache)."""
    X = as_matrix(X)
    masks = _resolve_masks(X.shape[0], X.shape[1], params.w0.shape[1], params.dropout, training, rng, masks)
    mask_in, mask_hidden = masks
    X0 = X * mask_in if mask_in is not None else X
    m1 = spmm(adj, X0)
    h_pre = matmul(m1, params.w0)
    h = np.maximum(h_pre, 0.0)
    hd = h * mask_hidden if mask_hidden is not None else h
    m2 = spmm(adj, hd)  # shared A~ H, feeds both branches
    mu = matmul(m2, params.w_mu)
    ls_pre = matmul(m2, params.w_sigma)
    log_sigma = np.clip(ls_pre, -params.clamp, params.clamp)
    cache = {
        "adj": adj,
        "m1": m1,
        "h_pre": h_pre,
        "h": h,
        "hd": hd,
        "m2": m2,
        "masks": masks,
        "mu": mu,
        "ls_pre": ls_pre,
        "log_sigma": log_sigma,
    }
    return mu, log_sigma, cache


def vgae_forward(params: VgaeParams, adj: SparseAdjacency, X, rng, training=False, masks=None, eps=None):
    """Full VGAE pass; eps may be passed explicitly to freeze the noise."""
    mu, log_sigma, cache = vgae_encode(params, adj, X, rng=rng, training=training, masks=masks)
    if eps is None:
        eps = rng.normal(size=mu.shape)
    Z = mu + np.exp(log_sigma) * eps
    cache["eps"] = eps
    cache["Z"] = Z
    logits = classify_head(Z, params.head)
    return {"mu": mu, "log_sigma": log_sigma, "Z": Z, "logits": logits, "scores": decode_scores(Z)}, cache


def vgae_backward(params: VgaeParams, cache, d_logits, d_scores, d_mu_extra=None, d_log_sigma_extra=None):
    """Backward through head, decoder, reparameterization and encoder.

    d_mu_extra / d_log_sigma_extra carry the (beta-scaled) KL gradients;
    eps is the frozen constant of the pathwise estimator; the hard
    clamp zeroes gradients where log_sigma saturated.
    """
    Z = cache["Z"]
    d_head = matmul(np.ascontiguousarray(Z.T), d_logits)
    dZ = matmul(d_logits, np.ascontiguousarray(params.head.T))
    if d_scores is not None:
        sym = d_scores + d_scores.T
        dZ = dZ + matmul(np.ascontiguousarray(sym), Z)
    d_mu = dZ.copy()
    d_ls = dZ * cache["eps"] * np.exp(cache["log_sigma"])
    if d_mu_extra is not None:
        d_mu = d_mu + d_mu_extra
    if d_log_sigma_extra is not None:
        d_ls = d_ls + d_log_sigma_extra
    inside = np.abs(cache["ls_pre"]) < params.clamp
    d_ls_pre = d_ls * inside
    d_w_mu = matmul(np.ascontiguousarray(cache["m2"].T), d_mu)
    d_w_sigma = matmul(np.ascontiguousarray(cache["m2"].T), d_ls_pre)
    d_m2 = matmul(d_mu, np.ascontiguousarray(params.w_mu.T)) + matmul(
        d_ls_pre, np.ascontiguousarray(params.w_sigma.T)
    )
    d_hd = spmm(cache["adj"], d_m2)
    mask_in, mask_hidden = cache["masks"]
    d_h = d_hd * mask_hidden if mask_hidden is not None else d_hd
    d_h_pre = d_h * (cache["h_pre"] > 0.0)
    d_w0 = matmul(np.ascontiguousarray(cache["m1"].T), d_h_pre)
    return {"w0": d_w0, "w_mu": d_w_mu, "w_sigma": d_w_sigma, "head": d_head}
