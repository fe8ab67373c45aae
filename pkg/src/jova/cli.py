"""Command line: prepare -> train -> evaluate -> recommend.

Stages talk only through files in the output directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as datamod
from .config import ConfigError, RunConfig
from .linalg import ShapeError, spawn
from .metrics import EvaluationError, evaluate_scores, top_k
from .model import load_model, predict, save_model
from .train import STREAMS, TrainConfig, TrainingError, build_model, train

log = logging.getLogger("jova")


class CliError(RuntimeError):
    pass


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _echo_config(cfg: RunConfig, command: str) -> None:
    _write(Path(cfg.out) / f"config.{command}.json", cfg.dumps())


def cmd_prepare(cfg: RunConfig) -> int:
    d = cfg.data
    if not d.path:
        raise CliError("no input file given (set data.path or pass --input)")
    schema = datamod.Schema(d.format, d.delimiter, d.header, d.user_col, d.item_col, d.rating_col)
    raw = datamod.ingest(d.path, schema, d.max_malformed)
    pairs = datamod.binarize(raw.ratings, d.rating_threshold)
    pairs = datamod.filter_min_interactions(pairs, d.min_user_interactions)
    matrix = datamod.split(pairs, d.split_ratios, spawn(cfg.seed, STREAMS)["split"])

    out = Path(cfg.out)
    info = datamod.stats(matrix)
    info["malformed_lines"] = len(raw.malformed_lines)
    matrix.save(cfg.dataset_path(), {"seed": cfg.seed, "source": str(d.path)})
    _write(out / "stats.json", json.dumps(info, indent=2, sort_keys=True) + "\n")
    _echo_config(cfg, "prepare")
    print(f"{'#users':>8} {'#items':>8} {'#interactions':>14} {'sparsity':>9}")
    print(f"{info['users']:>8,} {info['items']:>8,} {info['interactions']:>14,} {info['sparsity']:>9.2%}")
    print(f"split train/valid/test: {info['train']}/{info['valid']}/{info['test']}")
    print(f"wrote {cfg.dataset_path()}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    matrix = datamod.InteractionMatrix.load(cfg.dataset_path())
    m = cfg.model
    model = build_model(
        matrix.n_users, matrix.n_items, cfg.seed, hidden=m.hidden, latent_dim=m.latent_dim,
        alpha=m.alpha, beta=m.beta, margin=m.margin, mode=m.mode,
    )
    t = cfg.train
    tc = TrainConfig(t.lr, t.epochs, t.patience, cfg.seed, t.block_users, t.block_items, t.eval_k)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path, timing_path = out / "train_log.jsonl", out / "timing.jsonl"
    with open(log_path, "w") as lf, open(timing_path, "w") as tf:
        def on_epoch(rec: dict) -> None:
            # wall time is not reproducible, so it lives in its own file
            rec = dict(rec)
            tf.write(json.dumps({"epoch": rec["epoch"], "wall_time": rec.pop("wall_time")}) + "\n")
            lf.write(json.dumps(rec) + "\n")
            print(json.dumps(rec))

        result = train(model, matrix, tc, on_epoch)
    save_model(out / "model.npz", result.model, {
        "seed": cfg.seed,
        "best_epoch": result.best_epoch,
        "best_valid_ndcg": result.best_ndcg,
        "config": cfg.to_dict(),
    })
    _echo_config(cfg, "train")
    print(f"best validation NDCG@{t.eval_k}: {result.best_ndcg:.4f} (epoch {result.best_epoch})")
    return 0


def _load_pair(cfg: RunConfig, model_path: str | None):
    matrix = datamod.InteractionMatrix.load(cfg.dataset_path())
    path = Path(model_path) if model_path else Path(cfg.out) / "model.npz"
    if not path.is_file():
        raise CliError(f"model file not found: {path}")
    model, meta = load_model(path)
    model.check_dims(matrix.train)
    return matrix, model, meta


def cmd_evaluate(cfg: RunConfig, model_path: str | None = None) -> int:
    matrix, model, meta = _load_pair(cfg, model_path)
    e = cfg.eval
    report = evaluate_scores(
        predict(model, matrix.train), matrix, e.ks, e.split, e.idcg, e.grid()
    )
    out = Path(cfg.out)
    doc = {"seed": meta.get("seed"), "config": cfg.to_dict(), **report.to_dict()}
    _write(out / f"report_{e.split}.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    table = report.table()
    _write(out / f"report_{e.split}.txt", table + "\n")
    _write(out / f"cold_start_{e.split}.tsv", report.cold_start_table())
    if e.per_user:
        _write(out / f"per_user_{e.split}.tsv", report.per_user_tsv(matrix.user_ids))
    _echo_config(cfg, "evaluate")
    print(table)
    return 0


def cmd_recommend(cfg: RunConfig, user_ids: list[str], k: int, model_path: str | None,
                  output: str | None) -> int:
    matrix, model, _ = _load_pair(cfg, model_path)
    if k < 1:
        raise CliError(f"k must be >= 1, got {k}")
    missing = [u for u in user_ids if u not in matrix.user_index]
    if missing:
        raise CliError(f"unknown user id(s): {', '.join(missing)}")
    dense = np.array([matrix.user_index[u] for u in user_ids], dtype=np.int64)
    scores = predict(model, matrix.train, dense)
    seen = matrix.csr("train", "valid")
    lines = ["user\trank\titem\tscore"]
    for row, u in enumerate(dense):
        ranked = top_k(scores[row], int(u), k, seen[int(u)].indices)
        for rank, (item, s) in enumerate(zip(ranked.items, ranked.scores), start=1):
            lines.append(f"{user_ids[row]}\t{rank}\t{matrix.item_ids[item]}\t{s:.6f}")
    text = "\n".join(lines) + "\n"
    if output:
        _write(Path(output), text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jova", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="YAML or JSON run config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--dataset", help="prepared dataset file (default <out>/dataset.npz)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. --set train.epochs=50")

    p = sub.add_parser("prepare", help="ingest, binarize, filter and split a ratings file")
    common(p)
    p.add_argument("--input", help="raw ratings file (data.path)")
    p.add_argument("--format", choices=datamod.FORMATS)

    p = sub.add_parser("train", help="train a model on a prepared dataset")
    common(p)
    p.add_argument("--mode", choices=("jova", "jova_hinge", "user_vae_only"))
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("evaluate", help="score a trained model on held-out data")
    common(p)
    p.add_argument("--model")
    p.add_argument("--ks", type=int, nargs="+")
    p.add_argument("--split", choices=("test", "valid"))

    p = sub.add_parser("recommend", help="top-k items for given users")
    common(p)
    p.add_argument("--model")
    p.add_argument("--users", nargs="+", required=True, help="original user ids")
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--output", help="write TSV here instead of stdout")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config)
    overrides = list(args.overrides)
    flag_map = {
        "seed": "seed", "out": "out", "dataset": "data.dataset", "input": "data.path",
        "format": "data.format", "mode": "model.mode", "epochs": "train.epochs",
        "split": "eval.split",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides.append(f"{key}={json.dumps(value)}")
    if getattr(args, "ks", None):
        overrides.append(f"eval.ks={json.dumps(args.ks)}")
    return cfg.override(overrides)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.model)
        return cmd_recommend(cfg, args.users, args.k, args.model, args.output)
    except (CliError, ConfigError, datamod.DataError, ShapeError, TrainingError,
            EvaluationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
