import numpy as np
import pytest

from gemi.ingest import (
    IngestError,
    PanelTable,
    assign_split,
    load_embeddings,
    load_gaussians,
    load_interactions,
    load_labels,
    load_panel_table,
    write_embeddings,
    write_interactions,
    write_labels,
)
from gemi.numerics import SeededRng


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestEmbeddings:
    def test_round_trip_exact(self, tmp_path, rng):
        ids = ("a", "b", "c")
        feats = rng.normal(size=(3, 4))
        p = tmp_path / "e.csv"
        write_embeddings(p, ids, feats)
        got_ids, got = load_embeddings(p)
        assert got_ids == ids
        # repr() round-trips float64 exactly
        assert np.array_equal(got, feats)

    def test_ragged_row(self, tmp_path):
        p = _write(tmp_path / "e.csv", "id,f0,f1\na,1.0\n")
        with pytest.raises(IngestError, match="expected 3 cells"):
            load_embeddings(p)

    def test_duplicate_id(self, tmp_path):
        p = _write(tmp_path / "e.csv", "id,f0\na,1.0\na,2.0\n")
        with pytest.raises(IngestError, match="duplicate id"):
            load_embeddings(p)

    def test_non_numeric(self, tmp_path):
        p = _write(tmp_path / "e.csv", "id,f0\na,oops\n")
        with pytest.raises(IngestError, match="non-numeric"):
            load_embeddings(p)

    def test_non_finite(self, tmp_path):
        p = _write(tmp_path / "e.csv", "id,f0\na,inf\n")
        with pytest.raises(IngestError, match="non-finite"):
            load_embeddings(p)

    def test_empty_file(self, tmp_path):
        p = _write(tmp_path / "e.csv", "\n\n")
        with pytest.raises(IngestError, match="no rows"):
            load_embeddings(p)

    def test_blank_lines_skipped(self, tmp_path):
        p = _write(tmp_path / "e.csv", "id,f0\n\na,1.5\n\nb,2.5\n")
        ids, feats = load_embeddings(p)
        assert ids == ("a", "b")
        assert np.array_equal(feats, [[1.5], [2.5]])

    def test_error_names_line_number(self, tmp_path):
        p = _write(tmp_path / "e.csv", "id,f0\na,1.0\nb,zzz\n")
        with pytest.raises(IngestError, match=":3:"):
            load_embeddings(p)


class TestLabels:
    def test_aligned_to_given_ids(self, tmp_path):
        p = _write(
            tmp_path / "l.csv",
            "id,animal,mythology,tree,split\nb,0,1,0,test\na,1,0,1,train\n",
        )
        labels, split = load_labels(p, ("a", "b"))
        assert np.array_equal(labels, [[1, 0, 1], [0, 1, 0]])
        assert list(split) == ["train", "test"]

    def test_standalone_keeps_file_order(self, tmp_path):
        p = _write(tmp_path / "l.csv", "id,animal,mythology,tree\nb,0,1,0\na,1,0,1\n")
        ids, labels, split = load_labels(p)
        assert ids == ("b", "a")
        assert np.array_equal(labels, [[0, 1, 0], [1, 0, 1]])
        assert set(split) == {"unassigned"}

    def test_missing_id(self, tmp_path):
        p = _write(tmp_path / "l.csv", "id,animal,mythology,tree\na,1,0,0\n")
        with pytest.raises(IngestError, match="missing labels"):
            load_labels(p, ("a", "b"))

    def test_extra_id(self, tmp_path):
        p = _write(tmp_path / "l.csv", "id,animal,mythology,tree\na,1,0,0\nb,0,0,1\n")
        with pytest.raises(IngestError, match="no embedding"):
            load_labels(p, ("a",))

    def test_bad_label_cell(self, tmp_path):
        p = _write(tmp_path / "l.csv", "id,animal,mythology,tree\na,2,0,0\n")
        with pytest.raises(IngestError, match="must be 0 or 1"):
            load_labels(p)

    def test_bad_split_tag(self, tmp_path):
        p = _write(tmp_path / "l.csv", "id,animal,mythology,tree,split\na,1,0,0,dev\n")
        with pytest.raises(IngestError, match="split must be"):
            load_labels(p)

    def test_empty_split_cell_is_unassigned(self, tmp_path):
        p = _write(tmp_path / "l.csv", "id,animal,mythology,tree,split\na,1,0,0,\n")
        _, _, split = load_labels(p)
        assert split[0] == "unassigned"

    def test_labels_round_trip(self, tmp_path, planted):
        lp = tmp_path / "l.csv"
        write_labels(lp, planted)
        labels, split = load_labels(lp, planted.ids)
        assert np.array_equal(labels, planted.labels)
        assert np.array_equal(split, planted.split)


class TestPanelTable:
    def test_load_joins_on_ids(self, tmp_path, rng):
        ep = tmp_path / "e.csv"
        write_embeddings(ep, ("x", "y"), rng.normal(size=(2, 3)))
        lp = _write(tmp_path / "l.csv", "id,animal,mythology,tree\ny,0,0,1\nx,1,1,0\n")
        table = load_panel_table(ep, lp)
        assert table.n == 2
        assert table.ids == ("x", "y")
        assert np.array_equal(table.labels, [[1, 1, 0], [0, 0, 1]])

    def test_masks_partition(self, planted):
        assert not np.any(planted.train_mask & planted.test_mask)
        assert np.all(planted.train_mask | planted.test_mask)


class TestInteractions:
    def _table(self):
        return PanelTable(
            ids=("a", "b", "c"),
            features=np.zeros((3, 2)),
            labels=np.zeros((3, 3), dtype=np.int64),
            split=np.array(["train"] * 3, dtype=object),
        )

    def test_keep_last_duplicate(self, tmp_path):
        p = _write(
            tmp_path / "i.csv",
            "user_id,panel_id,rating\nu1,a,1.0\nu1,a,4.0\nu1,b,2.0\n",
        )
        t = load_interactions(p, self._table())
        assert len(t.ratings) == 2
        pair_to_rating = dict(zip(zip(t.users.tolist(), t.panels.tolist()), t.ratings))
        assert pair_to_rating[(0, 0)] == 4.0

    def test_unknown_panel_dropped_and_counted(self, tmp_path):
        p = _write(
            tmp_path / "i.csv",
            "user_id,panel_id,rating\nu1,a,1.0\nu1,zz,5.0\n",
        )
        t = load_interactions(p, self._table())
        assert t.dropped == 1
        assert len(t.ratings) == 1

    def test_rows_sorted_by_user_then_panel(self, tmp_path):
        p = _write(
            tmp_path / "i.csv",
            "user_id,panel_id,rating\nu2,c,1.0\nu1,b,2.0\nu2,a,3.0\nu1,a,4.0\n",
        )
        t = load_interactions(p, self._table())
        order = list(zip(t.users.tolist(), t.panels.tolist()))
        assert order == sorted(order)

    def test_round_trip(self, tmp_path):
        p = tmp_path / "i.csv"
        write_interactions(p, [("u1", "a", 3.5), ("u2", "c", 1.25)])
        t = load_interactions(p, self._table())
        assert t.user_ids == ("u1", "u2")
        assert np.array_equal(t.ratings, [3.5, 1.25])

    def test_bad_header(self, tmp_path):
        p = _write(tmp_path / "i.csv", "user,panel,score\nu,a,1\n")
        with pytest.raises(IngestError, match="expected header"):
            load_interactions(p, self._table())


class TestGaussians:
    def test_load_and_clip(self, tmp_path):
        p = _write(
            tmp_path / "g.csv",
            "id,mu_0,mu_1,logvar_0,logvar_1\na,0.5,-1.0,0.0,-60.0\n",
        )
        t = load_gaussians(p)
        assert np.array_equal(t.mean, [[0.5, -1.0]])
        assert t.var[0, 0] == 1.0
        assert t.var[0, 1] == 1e-10  # clamped from exp(-60)

    def test_header_order_enforced(self, tmp_path):
        p = _write(tmp_path / "g.csv", "id,logvar_0,mu_0\na,0.0,0.5\n")
        with pytest.raises(IngestError, match="expected header"):
            load_gaussians(p)


class TestAssignSplit:
    def _table(self, n, labels, rng):
        return PanelTable(
            ids=tuple(f"p{i}" for i in range(n)),
            features=rng.normal(size=(n, 4)),
            labels=labels,
            split=np.array(["unassigned"] * n, dtype=object),
        )

    def test_partitions_everything(self, rng):
        labels = (rng.random((60, 3)) < 0.4).astype(np.int64)
        labels[labels.sum(axis=1) == 0, 0] = 1
        t = assign_split(self._table(60, labels, rng), 0.2, rng.substream("split"))
        assert set(t.split) <= {"train", "test"}
        assert abs(t.test_mask.sum() - 12) <= 2

    def test_stratifies_each_label(self, rng):
        labels = (rng.random((100, 3)) < 0.3).astype(np.int64)
        labels[labels.sum(axis=1) == 0, 1] = 1
        t = assign_split(self._table(100, labels, rng), 0.2, rng.substream("split"))
        for k in range(3):
            pos = labels[:, k] == 1
            frac = (t.test_mask & pos).sum() / pos.sum()
            assert 0.1 <= frac <= 0.3, f"label {k} test fraction {frac}"

    def test_preserves_preassigned_tags(self, rng):
        labels = (rng.random((30, 3)) < 0.5).astype(np.int64)
        labels[:, 0] = 1
        table = self._table(30, labels, rng)
        split = table.split.copy()
        split[:5] = "train"
        split[5] = "test"
        table = PanelTable(table.ids, table.features, table.labels, split)
        out = assign_split(table, 0.3, rng.substream("s"))
        assert list(out.split[:5]) == ["train"] * 5
        assert out.split[5] == "test"

    def test_rare_label_falls_back_to_random(self, rng, caplog):
        labels = np.zeros((20, 3), dtype=np.int64)
        labels[:, 0] = 1
        labels[3, 2] = 1  # a single tree positive
        import logging

        with caplog.at_level(logging.WARNING, logger="gemi.ingest"):
            t = assign_split(self._table(20, labels, rng), 0.25, rng.substream("s"))
        assert "random split" in caplog.text
        assert t.test_mask.sum() == 5

    def test_deterministic_under_seed(self, rng):
        labels = (rng.random((40, 3)) < 0.4).astype(np.int64)
        labels[labels.sum(axis=1) == 0, 0] = 1
        t1 = assign_split(self._table(40, labels, rng), 0.2, SeededRng(77))
        t2 = assign_split(self._table(40, labels, rng), 0.2, SeededRng(77))
        assert np.array_equal(t1.split, t2.split)

    def test_bad_fraction(self, rng):
        labels = np.ones((4, 3), dtype=np.int64)
        with pytest.raises(ValueError):
            assign_split(self._table(4, labels, rng), 1.5, rng)
