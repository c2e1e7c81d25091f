import json

import numpy as np
import pytest

from cadalign import evalmetrics as em
from cadalign.cli import main
from cadalign.geometry import Pose9DoF, apply_pose, geodesic_angle, random_rotation
from cadalign.retrieval import CadEntry, build_index, save_manifest
from cadalign.voxel import VoxelGrid

from test_evalmetrics import toy_scene


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def corr_file(tmp_path):
    rng = np.random.default_rng(3)
    q = rng.uniform(-0.5, 0.5, (200, 3))
    pose = Pose9DoF([0.3, -0.2, 2.5], [1.5, 0.7, 1.1], random_rotation(rng))
    p = apply_pose(pose, q).points
    path = tmp_path / "corr.json"
    path.write_text(json.dumps({"q": q.tolist(), "p": p.tolist(), "s": pose.s.tolist()}))
    return path, pose


class TestSolve:
    def test_noise_free(self, tmp_path, corr_file, capsys):
        path, pose = corr_file
        out = tmp_path / "pose.json"
        code, _, _ = run(["solve", "--in", path, "--out", out], capsys)
        assert code == 0
        res = json.loads(out.read_text())
        got = Pose9DoF.from_dict(res["pose"])
        assert geodesic_angle(got.R, pose.R) <= 1e-6
        assert np.linalg.norm(got.t - pose.t) <= 1e-6
        assert res["degenerate"] is False
        assert len(res["singular_values"]) == 3

    @pytest.mark.parametrize("policy", ["mask", "irls"])
    def test_policies(self, corr_file, capsys, policy):
        path, pose = corr_file
        code, out, _ = run(["solve", "--in", path, "--policy", policy], capsys)
        assert code == 0
        assert np.linalg.norm(np.array(json.loads(out)["pose"]["t"]) - pose.t) <= 1e-6

    def test_bad_input(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"q": [[0, 0, 0]], "p": [[0, 0, 0]], "s": [1, 1, 1]}))
        code, _, err = run(["solve", "--in", bad], capsys)
        assert code == 1 and "error" in err
        code, _, _ = run(["solve", "--in", tmp_path / "missing.json"], capsys)
        assert code == 1


class TestEval:
    def test_toy(self, tmp_path, capsys):
        preds, gts = toy_scene()
        em.write_jsonl(tmp_path / "p.jsonl", preds, confidence=True)
        em.write_jsonl(tmp_path / "g.jsonl", gts, confidence=False)
        code, out, _ = run(["eval", "--pred", tmp_path / "p.jsonl", "--gt", tmp_path / "g.jsonl",
                            "--retrieval-aware", "--out-json", tmp_path / "r.json", "--out-csv", tmp_path / "r.csv"], capsys)
        assert code == 0
        assert "alignment: class avg 0.7500" in out
        rep = json.loads((tmp_path / "r.json").read_text())
        assert rep["alignment"]["class_avg"] == 0.75
        assert rep["retrieval_aware"]["per_class"]["B"] == 0.0
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "metric,A,B,class,instance"
        assert lines[1] == "alignment,50.0,100.0,75.0,66.7"


class TestGradcheck:
    def test_seed7(self, capsys):
        code, out, _ = run(["gradcheck", "--seed", 7], capsys)
        assert code == 0
        err = float(out.split("error ")[1].split()[0])
        assert err <= 1e-4


class TestVoxelize:
    def test_points(self, tmp_path, capsys):
        src = tmp_path / "pts.json"
        src.write_text(json.dumps({"points": [[0.0, 0.0, 0.0], [0.2, -0.1, 0.3]]}))
        code, _, _ = run(["voxelize", "--in", src, "--out", tmp_path / "g", "--resolution", 16], capsys)
        assert code == 0
        g = VoxelGrid.load(tmp_path / "g")
        assert g.resolution == 16 and g.values.max() == 1.0

    def test_mesh(self, tmp_path, capsys):
        src = tmp_path / "mesh.json"
        src.write_text(json.dumps({"vertices": [[-0.4, -0.4, 0], [0.4, -0.4, 0], [0, 0.4, 0]], "triangles": [[0, 1, 2]]}))
        code, _, _ = run(["voxelize", "--in", src, "--out", tmp_path / "m"], capsys)
        assert code == 0
        assert set(np.nonzero(VoxelGrid.load(tmp_path / "m").values.sum(axis=(1, 2)))[0]) <= {15, 16}


class TestRetrieve:
    def test_embedding_and_points(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        ents = [CadEntry(f"c{i}", "chair", rng.uniform(-0.5, 0.5, (50, 3)), None, rng.normal(size=256)) for i in range(4)]
        save_manifest(build_index(ents, pools={"s1": {"c1", "c2"}}), tmp_path / "db")
        manifest = tmp_path / "db" / "manifest.json"
        (tmp_path / "z.json").write_text(json.dumps({"embedding": ents[2].embedding.tolist()}))
        code, out, _ = run(["retrieve", "--db", manifest, "--category", "chair", "--embedding", tmp_path / "z.json"], capsys)
        assert code == 0 and json.loads(out)[0]["id"] == "c2"
        (tmp_path / "q.json").write_text(json.dumps({"points": ents[3].points[:10].astype(np.float32).tolist()}))
        code, out, _ = run(["retrieve", "--db", manifest, "--category", "chair", "--points", tmp_path / "q.json",
                            "--pool", "s1", "--top", 5], capsys)
        assert code == 0 and {r["id"] for r in json.loads(out)} == {"c1", "c2"}
        code, _, _ = run(["retrieve", "--db", manifest, "--category", "sofa", "--points", tmp_path / "q.json"], capsys)
        assert code == 1

    def test_make_db(self, tmp_path, capsys):
        code, _, _ = run(["make-db", "--out", tmp_path / "cat", "--entries", 9], capsys)
        assert code == 0
        assert len(json.loads((tmp_path / "cat" / "manifest.json").read_text())["entries"]) == 9


class TestBench:
    def test_byte_identical_and_only_declared_outputs(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scenes": 4, "points_per_object": 64}))
        outs = []
        for k in range(2):
            code, _, _ = run(["bench", "--config", cfg, "--seed", 5, "--sigma", 0.0, 0.1,
                              "--out-json", tmp_path / f"r{k}.json", "--out-csv", tmp_path / f"r{k}.csv"], capsys)
            assert code == 0
            outs.append(((tmp_path / f"r{k}.json").read_bytes(), (tmp_path / f"r{k}.csv").read_bytes()))
        assert outs[0] == outs[1]
        assert sorted(p.name for p in tmp_path.iterdir()) == ["cfg.json", "r0.csv", "r0.json", "r1.csv", "r1.json"]
        doc = json.loads(outs[0][0])
        assert doc["config"]["seed"] == 5 and len(doc["scene_seeds"]) == 4

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"nonsense": 1}))
        code, _, _ = run(["bench", "--config", cfg], capsys)
        assert code == 1


class TestUsage:
    def test_unknown_subcommand(self, capsys):
        code = None
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        code = exc.value.code
        assert code == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["gradcheck", "--bogus"])
        assert exc.value.code == 1
