import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gemi.ingest import InteractionTable, PanelTable, load_interactions
from gemi.numerics import SeededRng
from gemi.users import (
    UserProfile,
    bootstrap_augment,
    build_real_profiles,
    compute_lift,
    empirical_label_frequency,
    minmax_normalize_ratings,
    preference_matrix,
    sample_synthetic_users,
    sigmoid_preference,
    smooth_lift,
    threshold_preferences,
    top_k_panels,
    write_user_dataset,
)


def make_interactions(users, panels, ratings):
    users = np.asarray(users, dtype=np.int64)
    uids = tuple(f"u{i}" for i in range(users.max() + 1))
    return InteractionTable(
        user_ids=uids,
        users=users,
        panels=np.asarray(panels, dtype=np.int64),
        ratings=np.asarray(ratings, dtype=np.float64),
        dropped=0,
    )


class TestUserProfile:
    def test_items_sorted_and_distinct(self):
        p = UserProfile(user_id="u", items=(4, 1, 9), preferences=np.array([0.5]))
        assert p.items == (1, 4, 9)

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            UserProfile(user_id="u", items=(1, 1), preferences=np.array([0.5]))

    def test_rejects_out_of_range_preferences(self):
        with pytest.raises(ValueError):
            UserProfile(user_id="u", items=(1,), preferences=np.array([1.2]))


class TestSyntheticUsers:
    def _labels(self, rng, n=40):
        Y = (rng.random((n, 3)) < 0.4).astype(np.int64)
        return Y

    def test_profiles_have_k_distinct_items(self, rng):
        Y = self._labels(rng)
        train = np.arange(30)
        profs = sample_synthetic_users(train, Y, 10, 5, 0.2, rng.substream("u"))
        assert len(profs) == 10
        for p in profs:
            assert len(p.items) == 5
            assert all(i in set(train.tolist()) for i in p.items)

    def test_k_capped_at_pool_size(self, rng):
        Y = self._labels(rng)
        profs = sample_synthetic_users(np.arange(3), Y, 4, 10, 0.2, rng.substream("u"))
        for p in profs:
            assert len(p.items) == 3

    def test_preferences_threshold_frequency(self, rng):
        Y = self._labels(rng)
        train = np.arange(40)
        tau = 0.2
        for p in sample_synthetic_users(train, Y, 8, 5, tau, rng.substream("u")):
            freq = empirical_label_frequency(p.items, Y)
            assert np.array_equal(p.preferences, (freq >= tau).astype(float))

    def test_deterministic(self, rng):
        Y = self._labels(rng)
        a = sample_synthetic_users(np.arange(30), Y, 5, 4, 0.2, SeededRng(2))
        b = sample_synthetic_users(np.arange(30), Y, 5, 4, 0.2, SeededRng(2))
        assert [p.items for p in a] == [p.items for p in b]

    def test_empty_pool_raises(self, rng):
        with pytest.raises(ValueError):
            sample_synthetic_users(np.array([], dtype=np.int64), np.zeros((0, 3)), 5, 3, 0.2, rng)


class TestRatingPipeline:
    def test_minmax_full_range(self):
        t = make_interactions([0, 0, 1], [0, 1, 2], [1.0, 5.0, 3.0])
        out = minmax_normalize_ratings(t)
        np.testing.assert_allclose(out.ratings, [0.0, 1.0, 0.5])

    def test_minmax_constant_goes_zero(self):
        t = make_interactions([0, 0], [0, 1], [4.0, 4.0])
        assert np.array_equal(minmax_normalize_ratings(t).ratings, [0.0, 0.0])

    def test_lift_oracle(self):
        # panels: 0 has animal, 1 has tree, 2 has animal+tree
        Y = np.array([[1, 0, 0], [0, 0, 1], [1, 0, 1]])
        panels = [0, 1, 2]
        ratings = [1.0, 0.0, 0.5]
        lift, support, baseline = compute_lift(panels, ratings, Y)
        assert baseline == 0.5
        np.testing.assert_allclose(lift[0], (1.0 + 0.5) / 2 - 0.5)  # animal
        assert lift[1] == 0.0 and support[1] == 0  # mythology unseen
        np.testing.assert_allclose(lift[2], (0.0 + 0.5) / 2 - 0.5)  # tree
        assert support.tolist() == [2, 0, 2]

    def test_smoothing_shrinks_toward_prior(self):
        lift = np.array([1.0])
        prior = np.array([0.0])
        light = smooth_lift(lift, np.array([1]), prior, 5.0)
        heavy = smooth_lift(lift, np.array([100]), prior, 5.0)
        np.testing.assert_allclose(light, 1.0 / 6.0)
        np.testing.assert_allclose(heavy, 100.0 / 105.0)

    def test_smoothing_support_zero_gives_prior(self):
        out = smooth_lift(np.array([0.7]), np.array([0]), np.array([0.2]), 5.0)
        np.testing.assert_allclose(out, 0.2)

    def test_sigmoid_preference_range_and_center(self):
        out = sigmoid_preference(np.array([-10.0, 0.0, 10.0]), 5.0)
        assert out[1] == 0.5
        assert 0.0 < out[0] < 0.01 and 0.99 < out[2] <= 1.0

    def test_top_k_ties_by_ascending_panel(self):
        panels = [9, 3, 7, 5]
        ratings = [0.5, 0.9, 0.5, 0.9]
        assert top_k_panels(panels, ratings, 3) == [3, 5, 7]

    def test_top_k_truncates(self):
        assert top_k_panels([2, 4], [1.0, 0.5], 5) == [2, 4]


class TestBuildRealProfiles:
    def _setup(self):
        Y = np.array([[1, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 1]])
        train = np.array([True, True, True, True, False])
        return Y, train

    def test_pipeline_end_to_end(self):
        Y, train = self._setup()
        t = make_interactions(
            [0, 0, 0, 1, 1], [0, 1, 2, 2, 3], [5.0, 4.0, 1.0, 2.0, 4.0]
        )
        profiles = build_real_profiles(t, Y, train, pseudo_count=5.0, gain=5.0, top_k=2)
        assert len(profiles) == 2
        assert profiles[0].user_id == "u0"
        # u0's best two rated panels
        assert profiles[0].items == (0, 1)
        assert np.all((profiles[0].preferences >= 0) & (profiles[0].preferences <= 1))
        # u0 liked animal panels, disliked the mythology one
        assert profiles[0].preferences[0] > profiles[0].preferences[1]

    def test_non_training_interactions_filtered(self):
        Y, train = self._setup()
        # panel 4 is a test panel: interactions on it must not leak in
        t = make_interactions([0, 0, 0], [0, 1, 4], [5.0, 1.0, 3.0])
        profiles = build_real_profiles(t, Y, train)
        assert 4 not in profiles[0].items

    def test_user_with_only_test_interactions_skipped(self):
        Y, train = self._setup()
        t = make_interactions([0, 1], [0, 4], [5.0, 3.0])
        profiles = build_real_profiles(t, Y, train)
        assert [p.user_id for p in profiles] == ["u0"]

    def test_all_test_interactions_raises(self):
        Y, train = self._setup()
        t = make_interactions([0], [4], [3.0])
        with pytest.raises(ValueError):
            build_real_profiles(t, Y, train)

    def test_prior_is_support_weighted(self):
        Y = np.array([[1, 0, 0], [1, 0, 0], [1, 0, 0], [0, 1, 0]])
        train = np.ones(4, dtype=bool)
        # u0 rates 3 animal panels high, u1 rates 1 mythology panel low-ish
        t = make_interactions(
            [0, 0, 0, 0, 1, 1], [0, 1, 2, 3, 0, 3], [5.0, 5.0, 4.0, 1.0, 3.0, 2.0]
        )
        profiles = build_real_profiles(t, Y, train, pseudo_count=5.0)
        # both users exist and have valid prefs; animal lift dominates u0
        assert profiles[0].preferences[0] > 0.5


class TestBootstrap:
    def _bases(self):
        return [
            UserProfile(user_id="a", items=(0, 1, 2), preferences=np.array([0.9, 0.1, 0.5])),
            UserProfile(user_id="b", items=(3, 4), preferences=np.array([0.2, 0.8, 0.4])),
        ]

    def test_target_count_and_naming(self):
        out = bootstrap_augment(
            self._bases(), np.arange(10), 7, 5, 0.3, 0.8, 1.2, 0.05, 0.05, SeededRng(0)
        )
        assert len(out) == 7
        assert [p.user_id for p in out] == [f"boot-{i}" for i in range(7)]

    def test_preferences_clipped(self):
        out = bootstrap_augment(
            self._bases(), np.arange(10), 50, 5, 0.3, 0.8, 1.2, 0.5, 0.5, SeededRng(1)
        )
        for p in out:
            assert p.preferences.min() >= 0.0
            assert p.preferences.max() <= 1.0

    def test_items_from_base_or_observed(self):
        observed = np.array([7, 8, 9])
        out = bootstrap_augment(
            self._bases(), observed, 30, 4, 0.5, 0.8, 1.2, 0.05, 0.05, SeededRng(2)
        )
        allowed = {0, 1, 2, 3, 4, 7, 8, 9}
        for p in out:
            assert set(p.items) <= allowed
            assert 1 <= len(p.items) <= 4  # distinct set of 4 drawn slots

    def test_no_replacement_keeps_base_items(self):
        out = bootstrap_augment(
            self._bases(), np.arange(10), 20, 3, 0.0, 1.0, 1.0, 0.0, 0.0, SeededRng(3)
        )
        for p in out:
            assert set(p.items) <= {0, 1, 2} or set(p.items) <= {3, 4}

    def test_deterministic(self):
        a = bootstrap_augment(self._bases(), np.arange(6), 9, 4, 0.3, 0.8, 1.2, 0.05, 0.05, SeededRng(5))
        b = bootstrap_augment(self._bases(), np.arange(6), 9, 4, 0.3, 0.8, 1.2, 0.05, 0.05, SeededRng(5))
        assert [p.items for p in a] == [p.items for p in b]
        assert np.array_equal(preference_matrix(a), preference_matrix(b))


class TestWriteUserDataset:
    def test_round_trip_via_interactions(self, tmp_path):
        profiles = [
            UserProfile(user_id="u0", items=(0, 2), preferences=np.array([1.0, 0.0, 0.5])),
        ]
        prefix = str(tmp_path / "users")
        pref_path, inter_path = write_user_dataset(prefix, profiles, panel_ids=("pa", "pb", "pc"))
        table = PanelTable(
            ids=("pa", "pb", "pc"),
            features=np.zeros((3, 2)),
            labels=np.zeros((3, 3), dtype=np.int64),
            split=np.array(["train"] * 3, dtype=object),
        )
        loaded = load_interactions(inter_path, table)
        assert loaded.user_ids == ("u0",)
        assert loaded.panels.tolist() == [0, 2]
        text = open(pref_path).read()
        assert text.startswith("user_id,animal,mythology,tree")
        assert "u0,1.0,0.0,0.5" in text


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_threshold_preferences_binary_property(seed):
    rng = SeededRng(seed)
    freq = rng.random(3)
    out = threshold_preferences(freq, 0.2)
    assert set(np.unique(out).tolist()) <= {0.0, 1.0}
    assert np.all((out == 1.0) == (freq >= 0.2))
