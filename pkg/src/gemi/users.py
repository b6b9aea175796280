"""User preference modeling: synthetic profiles and the ratings pipeline.

Synthetic users draw K-subsets of the training panels uniformly and
threshold the empirical label frequency.  Real users come from ratings:
global min-max normalization, per-user label lift over a personal
baseline, pseudo-count smoothing toward a support-weighted population
prior, and a sigmoid gain mapping lifts into [0, 1] preferences.
Bootstrap augmentation resamples real users into an arbitrarily large
synthetic population.

Profiles only ever reference training panels: a real user's rated test
panels are excluded so evaluation candidates stay unseen.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .ingest import LABEL_NAMES, InteractionTable
from .numerics import SeededRng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UserProfile:
    """Interaction set plus per-label preference vector."""

    user_id: str
    items: tuple[int, ...]  # distinct panel indices, ascending
    preferences: np.ndarray  # (c,) in [0, 1]; binary for synthetic users

    def __post_init__(self):
        items = tuple(sorted(int(i) for i in self.items))
        if len(set(items)) != len(items):
            raise ValueError("profile items must be distinct")
        prefs = np.asarray(self.preferences, dtype=np.float64)
        if prefs.min(initial=0.0) < 0.0 or prefs.max(initial=0.0) > 1.0:
            raise ValueError("preferences must lie in [0, 1]")
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "preferences", prefs)


def empirical_label_frequency(items, Y) -> np.ndarray:
    """Mean label vector over the profile's panels."""
    idx = np.asarray(list(items), dtype=np.int64)
    if idx.size == 0:
        raise ValueError("profile has no interactions")
    return np.asarray(Y, dtype=np.float64)[idx].mean(axis=0)


def threshold_preferences(freq, tau: float) -> np.ndarray:
    """Binary preference: 1 wherever the frequency reaches tau."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    return (np.asarray(freq, dtype=np.float64) >= tau).astype(np.float64)


def sample_synthetic_users(train_indices, Y, num_users: int, k: int, tau: float, rng: SeededRng) -> list[UserProfile]:
    """Uniform K-subset profiles over the training panels.

    K is capped at the training count; items within a profile are
    distinct.  Preferences threshold the empirical label frequency.
    """
    train_indices = np.asarray(train_indices, dtype=np.int64)
    if train_indices.size == 0:
        raise ValueError("no training panels to sample from")
    if k < 1 or num_users < 1:
        raise ValueError("k and num_users must be at least 1")
    k_eff = min(k, train_indices.size)
    profiles = []
    for u in range(num_users):
        items = rng.choice(train_indices, size=k_eff, replace=False)
        freq = empirical_label_frequency(items, Y)
        profiles.append(
            UserProfile(
                user_id=f"synth-{u}",
                items=tuple(int(i) for i in items),
                preferences=threshold_preferences(freq, tau),
            )
        )
    return profiles


def minmax_normalize_ratings(table: InteractionTable) -> InteractionTable:
    """Scale ratings into [0, 1] over the global range; constant → 0."""
    if table.ratings.size == 0:
        raise ValueError("no interactions to normalize")
    lo = table.ratings.min()
    hi = table.ratings.max()
    if hi == lo:
        ratings = np.zeros_like(table.ratings)
    else:
        ratings = (table.ratings - lo) / (hi - lo)
    return InteractionTable(
        user_ids=table.user_ids,
        users=table.users,
        panels=table.panels,
        ratings=ratings,
        dropped=table.dropped,
    )


def compute_lift(panels, ratings, Y) -> tuple[np.ndarray, np.ndarray, float]:
    """Per-label mean-rating lift over the user's baseline.

    Returns (lift, support counts, baseline).  A label the user never
    rated gets lift 0 with support 0.
    """
    panels = np.asarray(panels, dtype=np.int64)
    ratings = np.asarray(ratings, dtype=np.float64)
    if panels.size == 0:
        raise ValueError("user has no interactions")
    Y = np.asarray(Y)
    baseline = float(ratings.mean())
    c = Y.shape[1]
    lift = np.zeros(c)
    support = np.zeros(c, dtype=np.int64)
    for ell in range(c):
        has = Y[panels, ell] == 1
        support[ell] = int(has.sum())
        if support[ell]:
            lift[ell] = ratings[has].mean() - baseline
    return lift, support, baseline


def smooth_lift(lift, support, prior_lift, pseudo_count: float) -> np.ndarray:
    """Pseudo-count shrinkage toward the population prior."""
    lift = np.asarray(lift, dtype=np.float64)
    support = np.asarray(support, dtype=np.float64)
    prior = np.asarray(prior_lift, dtype=np.float64)
    if pseudo_count < 0:
        raise ValueError("pseudo_count must be nonnegative")
    denom = support + pseudo_count
    if np.any(denom == 0):
        raise ValueError("support + pseudo_count must be positive")
    return (support * lift + pseudo_count * prior) / denom


def sigmoid_preference(lift, gain: float) -> np.ndarray:
    """Map lift to a preference in (0, 1) with adjustable sharpness."""
    if gain <= 0:
        raise ValueError("gain must be positive")
    return 1.0 / (1.0 + np.exp(-gain * np.asarray(lift, dtype=np.float64)))


def top_k_panels(panels, ratings, k: int) -> list[int]:
    """The user's k highest-rated panels, ties by ascending panel index."""
    if k < 1:
        raise ValueError("k must be at least 1")
    panels = np.asarray(panels, dtype=np.int64)
    ratings = np.asarray(ratings, dtype=np.float64)
    order = np.lexsort((panels, -ratings))
    return [int(p) for p in panels[order[:k]]]


def build_real_profiles(
    table: InteractionTable,
    Y,
    train_mask,
    pseudo_count: float = 5.0,
    gain: float = 5.0,
    top_k: int = 5,
) -> list[UserProfile]:
    """The full ratings pipeline producing continuous-preference profiles.

    Interactions on non-training panels are dropped before anything else
    (evaluation candidates must stay unseen); users left without any
    training interaction are skipped with a warning.
    """
    train_mask = np.asarray(train_mask, dtype=bool)
    keep = train_mask[table.panels]
    dropped_users_possible = table.users[~keep]
    table = InteractionTable(
        user_ids=table.user_ids,
        users=table.users[keep],
        panels=table.panels[keep],
        ratings=table.ratings[keep],
        dropped=table.dropped,
    )
    if dropped_users_possible.size:
        logger.warning(
            "dropped %d interactions on non-training panels", int(dropped_users_possible.size)
        )
    if table.ratings.size == 0:
        raise ValueError("no interactions on training panels")
    table = minmax_normalize_ratings(table)

    per_user: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for u in np.unique(table.users):
        sel = table.users == u
        per_user[int(u)] = (table.panels[sel], table.ratings[sel])

    lifts = {}
    supports = {}
    for u, (panels, ratings) in per_user.items():
        lift, support, _ = compute_lift(panels, ratings, Y)
        lifts[u] = lift
        supports[u] = support

    c = np.asarray(Y).shape[1]
    num = np.zeros(c)
    den = np.zeros(c)
    for u in per_user:
        num += supports[u] * lifts[u]
        den += supports[u]
    prior = np.divide(num, den, out=np.zeros(c), where=den > 0)

    profiles = []
    for u in sorted(per_user):
        panels, ratings = per_user[u]
        smoothed = smooth_lift(lifts[u], supports[u], prior, pseudo_count)
        prefs = sigmoid_preference(smoothed, gain)
        items = top_k_panels(panels, ratings, top_k)
        profiles.append(
            UserProfile(user_id=table.user_ids[u], items=tuple(items), preferences=prefs)
        )
    return profiles


def bootstrap_augment(
    profiles: list[UserProfile],
    observed_panels,
    target: int,
    k: int,
    p_replace: float,
    gain_low: float,
    gain_high: float,
    bias_sigma: float,
    noise_sigma: float,
    rng: SeededRng,
) -> list[UserProfile]:
    """Resample real users into a large synthetic population.

    Each synthetic user copies a uniformly drawn base: k interaction
    slots sampled with replacement from the base's stored panels, each
    slot replaced by a random observed panel with probability p_replace;
    stored as the distinct set.  Preferences are the base's, rescaled by
    a per-user gain, shifted by a per-user bias, perturbed per label,
    and clipped into [0, 1].
    """
    if not profiles:
        raise ValueError("bootstrap needs at least one base profile")
    if target < 1:
        raise ValueError("target must be at least 1")
    observed = np.asarray(list(observed_panels), dtype=np.int64)
    out = []
    for i in range(target):
        base = profiles[int(rng.integers(0, len(profiles)))]
        base_items = np.asarray(base.items, dtype=np.int64)
        slots = rng.choice(base_items, size=k, replace=True)
        replace_mask = rng.random(k) < p_replace
        if replace_mask.any():
            subs = rng.choice(observed, size=int(replace_mask.sum()), replace=True)
            slots = slots.copy()
            slots[replace_mask] = subs
        gain_scale = rng.uniform(gain_low, gain_high)
        bias = rng.normal(0.0, bias_sigma)
        noise = rng.normal(0.0, noise_sigma, size=base.preferences.shape)
        prefs = np.clip(gain_scale * base.preferences + bias + noise, 0.0, 1.0)
        out.append(
            UserProfile(
                user_id=f"boot-{i}",
                items=tuple(sorted(set(int(s) for s in slots))),
                preferences=prefs,
            )
        )
    return out


def preference_matrix(profiles: list[UserProfile]) -> np.ndarray:
    """Stack preference rows into the U×c matrix."""
    return np.stack([p.preferences for p in profiles])


def write_user_dataset(prefix: str, profiles: list[UserProfile], panel_ids=None) -> tuple[str, str]:
    """Serialize profiles as preferences CSV + interactions CSV.

    ``panel_ids`` maps profile item indices back to panel id strings;
    without it the raw indices are written.
    """
    pref_path = f"{prefix}.preferences.csv"
    inter_path = f"{prefix}.interactions.csv"
    with open(pref_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", *LABEL_NAMES])
        for p in profiles:
            writer.writerow([p.user_id, *[repr(float(v)) for v in p.preferences]])
    with open(inter_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "panel_id", "rating"])
        for p in profiles:
            for item in p.items:
                pid = panel_ids[item] if panel_ids is not None else str(item)
                writer.writerow([p.user_id, pid, "1.0"])
    return pref_path, inter_path
