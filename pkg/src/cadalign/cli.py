"""Command-line entry point: ``cadalign <subcommand> ...``.

Exit codes: 0 success, 1 input error (bad flags, files, or values), 2 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evalmetrics as em
from .errors import InputError
from .gradients import gradcheck
from .procrustes import CorrespondenceSet, initial_translation, solve_alignment, solve_irls
from .retrieval import load_manifest, query_chamfer, query_embedding, save_manifest
from .synth import BenchConfig, run_benchmark, synthetic_catalog
from .voxel import Mesh, VoxelGrid, occupancy_from_mesh, voxelize_points

log = logging.getLogger("cadalign")

GRAD_TOL = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def _write_text(path, text: str) -> None:
    Path(path).write_text(text)


def _read_points(path) -> np.ndarray:
    p = Path(path)
    if p.suffix == ".bin":
        return np.frombuffer(p.read_bytes(), dtype="<f4").astype(float).reshape(-1, 3)
    data = _read_json(p)
    return np.asarray(data["points"] if isinstance(data, dict) else data, dtype=float)


def cmd_solve(args) -> int:
    data = _read_json(args.input)
    corr = CorrespondenceSet.from_dict(data)
    if "s" not in data:
        raise InputError("correspondence file needs a scale vector 's'")
    s = np.asarray(data["s"], dtype=float)
    t_init = np.asarray(data["t_init"], dtype=float) if "t_init" in data else initial_translation(corr.p)
    if args.policy == "irls":
        report = solve_irls(corr, s, t_init, kernel=args.kernel, rounds=args.rounds)
    elif args.policy == "mask":
        report = solve_alignment(corr, s, t_init, weights=corr.c * np.maximum(corr.m, 1e-6))
    else:
        report = solve_alignment(corr, s, t_init)
    out = report.to_dict()
    out["t_init"] = np.asarray(t_init).tolist()
    text = json.dumps(out, indent=2) + "\n"
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    cfg_dict = _read_json(args.config) if args.config else {}
    overrides = {
        "seed": args.seed,
        "tau": args.tau,
        "sigmas": args.sigma,
        "policies": args.policy,
        "threads": args.threads,
        "pool": args.pool,
    }
    cfg_dict.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_retrieval:
        cfg_dict["retrieval"] = False
    report = run_benchmark(BenchConfig.from_dict(cfg_dict))
    if args.out_json:
        _write_text(args.out_json, report.to_json())
    if args.out_csv:
        _write_text(args.out_csv, report.to_csv())
    if not (args.out_json or args.out_csv):
        sys.stdout.write(report.to_csv())
    return 0


def cmd_retrieve(args) -> int:
    db = load_manifest(args.db)
    if (args.points is None) == (args.embedding is None):
        raise InputError("give exactly one of --points or --embedding")
    if args.points is not None:
        ranked = query_chamfer(db, _read_points(args.points), args.category, args.pool, with_scores=True)
    else:
        p = Path(args.embedding)
        if p.suffix == ".bin":
            z = np.frombuffer(p.read_bytes(), dtype="<f4").astype(float)
        else:
            data = _read_json(p)
            z = np.asarray(data["embedding"] if isinstance(data, dict) else data, dtype=float)
        ranked = query_embedding(db, z, args.category, args.pool, with_scores=True)
    if args.top:
        ranked = ranked[: args.top]
    out = [{"id": cid, "distance": d} for d, cid in ranked]
    text = json.dumps(out, indent=2) + "\n"
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    preds = em.read_jsonl(args.pred, em.prediction_from_dict)
    gts = em.read_jsonl(args.gt, em.gt_from_dict)
    if not args.no_cluster:
        preds = em.cluster_world(preds, args.tau)
    pools = None
    if args.pool:
        pools = {k: set(v) for k, v in _read_json(args.pool).items()}
    tables = {"alignment": em.match_and_score(preds, gts)}
    if args.retrieval_aware:
        tables["retrieval_aware"] = em.match_and_score(preds, gts, retrieval_aware=True, cad_pools=pools)
    categories = sorted({g.category for g in gts})
    for name, t in tables.items():
        print(f"{name}: class avg {t.class_avg:.4f}  instance avg {t.instance_avg:.4f}")
    if args.out_json:
        _write_text(args.out_json, json.dumps({k: t.to_dict() for k, t in tables.items()}, indent=2) + "\n")
    if args.out_csv:
        lines = [",".join(["metric", *categories, "class", "instance"])]
        for name, t in tables.items():
            lines.append(",".join([name, *em.table_cells(t, categories)]))
        _write_text(args.out_csv, "\n".join(lines) + "\n")
    return 0


def cmd_voxelize(args) -> int:
    data = _read_json(args.input)
    if "triangles" in data:
        grid = occupancy_from_mesh(
            Mesh(data["vertices"], data["triangles"]), args.resolution, args.samples, args.seed
        )
    elif "points" in data:
        grid = voxelize_points(np.asarray(data["points"], dtype=float), args.resolution)
    else:
        raise InputError("voxelize input needs 'points' or 'vertices'+'triangles'")
    bin_path, meta_path = grid.save(args.out)
    print(f"wrote {bin_path} and {meta_path}")
    return 0


def cmd_gradcheck(args) -> int:
    err = gradcheck(args.seed, args.n, args.h, centered=not args.uncentered)
    ok = err <= GRAD_TOL
    print(f"seed {args.seed}: max relative gradient error {err:.3e} ({'ok' if ok else 'FAIL'})")
    return 0 if ok else 1


def cmd_make_db(args) -> int:
    db, _ = synthetic_catalog(args.entries)
    path = save_manifest(db, args.out)
    print(f"wrote {len(db)} entries to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cadalign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve a 9-DoF alignment from correspondences")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.add_argument("--policy", choices=["given", "mask", "irls"], default="given")
    p.add_argument("--kernel", choices=["tukey", "huber"], default="tukey")
    p.add_argument("--rounds", type=int, default=3)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run the synthetic robustness benchmark")
    p.add_argument("--config")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.add_argument("--seed", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--sigma", type=float, nargs="+")
    p.add_argument("--policy", nargs="+", choices=["uniform", "mask", "oracle", "irls"])
    p.add_argument("--pool", choices=["category", "scene"])
    p.add_argument("--threads", type=int)
    p.add_argument("--no-retrieval", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("retrieve", help="rank CAD models for a query")
    p.add_argument("--db", required=True, help="database manifest.json")
    p.add_argument("--category", required=True)
    p.add_argument("--points")
    p.add_argument("--embedding")
    p.add_argument("--pool", help="scene id restricting the candidates")
    p.add_argument("--top", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--tau", type=float, default=em.DEFAULT_TAU)
    p.add_argument("--retrieval-aware", action="store_true")
    p.add_argument("--pool", help="JSON mapping scene id to candidate CAD ids")
    p.add_argument("--no-cluster", action="store_true")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("voxelize", help="voxelize a mesh or point set")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output prefix (.bin and .json are written)")
    p.add_argument("--resolution", type=int, default=32)
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_voxelize)

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--uncentered", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("make-db", help="write the synthetic CAD catalog as a manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--entries", type=int, default=50)
    p.set_defaults(func=cmd_make_db)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        log.exception("internal error")
        return 2


if __name__ == "__main__":
    sys.exit(main())
