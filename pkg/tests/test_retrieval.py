import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cadalign.errors import EmptyPoolError, InputError
from cadalign.retrieval import CadEntry, build_index, load_manifest, query_chamfer, query_embedding, save_manifest
from cadalign.synth import synthetic_catalog
from cadalign.voxel import fps, voxelize_points


def entry(cid, cat="chair", emb=None, rng=None, n=64):
    rng = rng or np.random.default_rng(abs(hash(cid)) % 2**32)
    return CadEntry(cid, cat, rng.uniform(-0.5, 0.5, (n, 3)), None, emb)


class TestBuildIndex:
    def test_empty(self):
        assert len(build_index([])) == 0

    def test_category_index(self):
        db = build_index([entry("a"), entry("b"), entry("c", "table")])
        assert db.by_category["chair"] == ("a", "b")

    def test_duplicate(self):
        with pytest.raises(InputError):
            build_index([entry("a"), entry("a")])

    def test_pool_reference_check(self):
        with pytest.raises(InputError):
            build_index([entry("a")], pools={"s0": {"a", "zzz"}})

    def test_entry_invariants(self):
        with pytest.raises(InputError):
            CadEntry("x", "chair", np.full((3, 3), 0.7))
        with pytest.raises(InputError):
            CadEntry("x", "chair", np.zeros((3, 3)), embedding=[np.nan])


class TestQueryEmbedding:
    def _db(self):
        e = np.eye(256)
        return build_index([
            entry("near", emb=e[0]),
            entry("far", emb=2 * e[1]),
            entry("b-tie", emb=-e[2]),
            entry("a-tie", emb=e[2]),
            entry("other", "table", emb=e[0]),
        ], pools={"s": {"far", "other"}})

    def test_exact_match_first(self):
        assert query_embedding(self._db(), np.eye(256)[1] * 2, "chair")[0] == "far"

    def test_distance_order(self):
        db = build_index([entry("x", emb=np.eye(256)[0]), entry("y", emb=2 * np.eye(256)[0])])
        ranked = query_embedding(db, np.zeros(256), "chair", with_scores=True)
        assert [c for _, c in ranked] == ["x", "y"]
        assert [d for d, _ in ranked] == [1.0, 4.0]

    def test_tie_break_by_id(self):
        ranked = query_embedding(self._db(), np.zeros(256), "chair")
        assert ranked.index("a-tie") < ranked.index("b-tie") < ranked.index("near")

    def test_pool(self):
        assert query_embedding(self._db(), np.zeros(256), "chair", pool="s") == ["far"]
        with pytest.raises(EmptyPoolError):
            query_embedding(self._db(), np.zeros(256), "bed")

    def test_missing_embedding(self):
        with pytest.raises(InputError):
            query_embedding(build_index([entry("a")]), np.zeros(256), "chair")


class TestQueryChamfer:
    def test_self_retrieval_in_catalog(self):
        db, _ = synthetic_catalog(50)
        for cid in list(db.entries)[::5]:
            e = db.entries[cid]
            query = e.points[fps(e.points, 200)]
            ranked = query_chamfer(db, query, e.category, with_scores=True)
            assert ranked[0] == (0.0, cid)

    def test_far_query_still_ranks_everything(self):
        db = build_index([entry(str(i)) for i in range(5)])
        ranked = query_chamfer(db, np.full((4, 3), 100.0), "chair")
        assert sorted(ranked) == [str(i) for i in range(5)]

    def test_pool_singleton(self):
        db = build_index([entry(str(i)) for i in range(5)], pools={"s": {"3"}})
        assert query_chamfer(db, np.zeros((4, 3)), "chair", pool="s") == ["3"]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31))
    def test_rankings_are_pool_permutations(self, seed):
        rng = np.random.default_rng(seed)
        ents = [entry(f"e{i}", rng.choice(["a", "b"]), rng=rng, n=16) for i in range(8)]
        pool = {e.id for e in ents if rng.random() < 0.6}
        db = build_index(ents, pools={"s": pool})
        q = rng.uniform(-0.5, 0.5, (10, 3))
        for cat in ("a", "b"):
            expected = sorted(pool & set(db.by_category.get(cat, ())))
            if not expected:
                with pytest.raises(EmptyPoolError):
                    query_chamfer(db, q, cat, pool="s")
                continue
            r1 = query_chamfer(db, q, cat, pool="s")
            assert sorted(r1) == expected
            assert r1 == query_chamfer(db, q, cat, pool="s")


class TestManifest:
    def test_round_trip(self, tmp_path, rng):
        pts = rng.uniform(-0.5, 0.5, (32, 3))
        e = CadEntry("m1", "sofa", pts, voxelize_points(pts, 8), rng.normal(size=256))
        db = build_index([e, entry("m2", "sofa")], pools={"sc": {"m1"}})
        path = save_manifest(db, tmp_path / "db")
        back = load_manifest(path)
        assert set(back.entries) == {"m1", "m2"}
        assert back.pools["sc"] == frozenset({"m1"})
        np.testing.assert_allclose(back.entries["m1"].points, pts, atol=1e-7)
        np.testing.assert_allclose(back.entries["m1"].embedding, e.embedding, atol=1e-6)
        assert back.entries["m1"].grid.resolution == 8
        assert back.entries["m2"].embedding is None
