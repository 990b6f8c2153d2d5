"""Command-line pipeline: prepare, train, evaluate, baseline, report.

Every command is a pure function of (inputs, config, seed); all persisted
artifacts are byte-identical across reruns.  Exit codes: 0 ok, 2 usage or
config error, 3 numerical divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import report as report_mod
from .adversary import AdvConfig, AdversaryError
from .baseline import train_logistic
from .data import (DataError, Dataset, apply_normalize, fit_normalize,
                   load_csv, read_norm_stats, save_csv, stratified_split,
                   write_norm_stats)
from .metrics import MetricsError, metrics_report
from .model import (DivergenceError, ModelConfig, ModelError, fit,
                    load_checkpoint, save_checkpoint)
from .resampling import adasyn, random_oversample, random_undersample, smote


class ConfigError(Exception):
    pass


CONFIG_DEFAULTS = {
    "data_dir": None,
    "label_col": "Class",
    "out_dir": None,
    "seed": 0,
    "latent_dim": 8,
    "hidden_sizes": [64, 32],
    "head_hidden": [16],
    "mc_samples_train": 1,
    "beta_rec": 0.0,
    "weight_mode": "ratio",
    "custom_weight": None,
    "lr": 1e-3,
    "epochs": 10,
    "batch_size": 128,
    "eval_every": None,
    "resampler": "none",
    "baseline_epochs": 50,
    "adversary": None,
}

ADV_DEFAULTS = {
    "d_steps_per_g_step": 1,
    "adv_lr": None,
    "n_aug_per_batch": 16,
    "generator_loss": "nonsaturating",
    "hidden": 32,
}

RESAMPLERS = ("none", "undersample", "oversample", "smote", "adasyn")


def load_config(path: str | None, overrides: dict) -> dict:
    doc = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    unknown = set(doc) - set(CONFIG_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = dict(CONFIG_DEFAULTS)
    cfg.update(doc)
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    if cfg["adversary"] is not None:
        adv = cfg["adversary"]
        unknown = set(adv) - set(ADV_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown adversary config keys: {sorted(unknown)}")
        merged = dict(ADV_DEFAULTS)
        merged.update(adv)
        cfg["adversary"] = merged
    if cfg["resampler"] not in RESAMPLERS:
        raise ConfigError(f"resampler must be one of {RESAMPLERS}")
    return cfg


def model_config_from(cfg: dict) -> ModelConfig:
    return ModelConfig(
        latent_dim=cfg["latent_dim"],
        hidden_sizes=list(cfg["hidden_sizes"]),
        head_hidden=list(cfg["head_hidden"]),
        mc_samples_train=cfg["mc_samples_train"],
        beta_rec=cfg["beta_rec"],
        weight_mode=cfg["weight_mode"],
        custom_weight=cfg["custom_weight"],
        lr=cfg["lr"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
        eval_every=cfg["eval_every"],
    )


def write_json(doc: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_split(data_dir: str, split: str, label_col: str) -> Dataset:
    path = os.path.join(data_dir, f"{split}.csv")
    return load_csv(path, label_col)


# ---------------------------------------------------------------------------
# commands

def cmd_prepare(args) -> int:
    ds = load_csv(args.data, args.label_col)
    split = stratified_split(ds, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    train = ds.subset(split.train)
    stats = fit_normalize(train, clip_k=args.clip_k)
    for name, idx in (("train", split.train), ("val", split.val), ("test", split.test)):
        part = apply_normalize(ds.subset(idx), stats)
        save_csv(part, os.path.join(args.out, f"{name}.csv"), args.label_col)
    write_norm_stats(stats, os.path.join(args.out, "norm_stats.json"))
    write_json({"seed": args.seed, "label_col": args.label_col,
                "source": args.data, **split.to_json()},
               os.path.join(args.out, "split_manifest.json"))
    print(f"prepare: {len(split.train)}/{len(split.val)}/{len(split.test)} rows -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed, "out_dir": args.out,
                                    "data_dir": args.data})
    if cfg["data_dir"] is None or cfg["out_dir"] is None:
        raise ConfigError("train needs data_dir and out_dir (config or flags)")
    train = load_split(cfg["data_dir"], "train", cfg["label_col"])
    val = load_split(cfg["data_dir"], "val", cfg["label_col"])
    mcfg = model_config_from(cfg)
    adv_cfg = None if cfg["adversary"] is None else AdvConfig(**cfg["adversary"])
    os.makedirs(cfg["out_dir"], exist_ok=True)
    write_json(cfg, os.path.join(cfg["out_dir"], "effective_config.json"))
    try:
        model, trace, adv = fit(train, val, mcfg, adv_config=adv_cfg)
    except DivergenceError as e:
        if e.checkpoint is not None:
            write_json(e.checkpoint, os.path.join(cfg["out_dir"], "checkpoint_last_good.json"))
        raise
    norm_ref = os.path.join(cfg["data_dir"], "norm_stats.json")
    save_checkpoint(os.path.join(cfg["out_dir"], "checkpoint.json"), model, adv, norm_ref)
    if len(trace):
        report_mod.export_loss_csv(trace, os.path.join(cfg["out_dir"], "trace.csv"))
    scores = model.predict_proba(val.features)
    write_json(metrics_report(scores, val.labels), os.path.join(cfg["out_dir"], "metrics_val.json"))
    print(json.dumps(cfg, sort_keys=True))
    return 0


def cmd_evaluate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    ds = load_split(args.data, args.split, args.label_col)
    if ds.d != model.input_dim:
        raise ModelError(f"checkpoint expects d={model.input_dim}, split has d={ds.d}")
    os.makedirs(args.out, exist_ok=True)
    scores = model.predict_proba(ds.features)
    write_json(metrics_report(scores, ds.labels),
               os.path.join(args.out, f"metrics_{args.split}.json"))
    grid = np.linspace(0.0, 1.0, 101)
    rows = report_mod.threshold_sweep(scores, ds.labels, grid)
    report_mod.export_sweep_csv(rows, os.path.join(args.out, f"sweep_{args.split}.csv"))
    print(f"evaluate: {args.split} metrics -> {args.out}")
    return 0


def cmd_baseline(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed, "out_dir": args.out,
                                    "data_dir": args.data})
    if cfg["data_dir"] is None or cfg["out_dir"] is None:
        raise ConfigError("baseline needs data_dir and out_dir (config or flags)")
    train = load_split(cfg["data_dir"], "train", cfg["label_col"])
    val = load_split(cfg["data_dir"], "val", cfg["label_col"])
    os.makedirs(cfg["out_dir"], exist_ok=True)
    for i, name in enumerate(RESAMPLERS):
        seed = cfg["seed"] + i
        resampled = apply_resampler(train, name, seed)
        clf = train_logistic(resampled, epochs=cfg["baseline_epochs"], seed=seed)
        scores = clf.predict_proba(val.features)
        doc = metrics_report(scores, val.labels)
        doc["resampler"] = name
        doc["train_rows"] = resampled.n
        write_json(doc, os.path.join(cfg["out_dir"], f"baseline_{name}.json"))
        print(f"baseline {name}: train_rows={resampled.n} auc={doc['auc']:.4f}")
    return 0


def apply_resampler(train: Dataset, name: str, seed: int) -> Dataset:
    if name == "none":
        return train
    if name == "undersample":
        return random_undersample(train, seed=seed)
    if name == "oversample":
        return random_oversample(train, seed=seed)
    if name == "smote":
        return smote(train, seed=seed)
    if name == "adasyn":
        return adasyn(train, seed=seed)
    raise ConfigError(f"unknown resampler {name!r}")


def cmd_report(args) -> int:
    model = load_checkpoint(args.checkpoint)
    ds = load_split(args.data, args.split, args.label_col)
    points = ds.features
    labels = ds.labels
    if args.representation == "latent":
        points, _ = model.encode(points)
    if args.method == "tsne" and len(points) > report_mod.TSNE_MAX_POINTS:
        if args.subsample is None:
            raise ConfigError(
                f"{len(points)} points exceed the t-SNE cap of "
                f"{report_mod.TSNE_MAX_POINTS}; pass --subsample N")
        points, labels = report_mod.stratified_subsample(points, labels,
                                                         args.subsample, seed=args.seed)
    if args.method == "pca":
        emb = report_mod.pca2d(points, labels=labels)
    else:
        perplexity = args.perplexity
        if perplexity is None:  # auto-shrink for small splits
            perplexity = min(30.0, max(2.0, (len(points) - 1) / 3.0))
        emb = report_mod.tsne_exact(points, perplexity=perplexity,
                                    seed=args.seed, labels=labels)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, f"embedding_{args.method}_{args.split}.csv")
    report_mod.export_embedding_csv(emb, out_path)
    print(f"report: {args.method} embedding -> {out_path}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="imbvar",
                                description="Imbalanced-classification pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("prepare", help="normalize and split a CSV")
    sp.add_argument("--data", required=True)
    sp.add_argument("--label-col", default="Class")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--clip-k", type=float, default=5.0)
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train", help="train the variational classifier")
    sp.add_argument("--config", default=None)
    sp.add_argument("--data", default=None, help="prepared data dir")
    sp.add_argument("--out", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="metrics + threshold sweep on a split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--label-col", default="Class")
    sp.add_argument("--split", choices=("train", "val", "test"), default="test")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("baseline", help="weighted logistic over each resampler")
    sp.add_argument("--config", default=None)
    sp.add_argument("--data", default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("report", help="2-D embedding of a split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--label-col", default="Class")
    sp.add_argument("--split", choices=("train", "val", "test"), default="test")
    sp.add_argument("--method", choices=("pca", "tsne"), default="tsne")
    sp.add_argument("--representation", choices=("input", "latent"), default="latent")
    sp.add_argument("--subsample", type=int, default=None)
    sp.add_argument("--perplexity", type=float, default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ConfigError, ModelError, AdversaryError, MetricsError,
            report_mod.ReportError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (DataError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
