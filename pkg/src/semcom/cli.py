"""Command-line entry points: train, eval, sweep, matrix, ablate, baseline.

Configuration is a flat key = value text file; any config key can be
overridden on the command line as --key=value. Exit codes: 0 success,
1 runtime failure, 2 usage or config error.
"""

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from .baseline import digital_baseline
from .channel import rate_accounting
from .data import load_image, read_manifest, save_image
from .errors import ConfigError, SemcomError
from .experiments import (
    ablation,
    eval_rows,
    matrix_rows,
    plot_metric_vs_snr,
    result_row,
    snr_mismatch_matrix,
    write_matrix_csv,
    write_results_csv,
)
from .extractors import ExtractorSpec
from .metrics import psnr, ssim
from .model import ModelConfig, MultiLevelCodec
from .training import TrainConfig, train

OUTPUT_ROOT_ENV = "SEMCOM_OUTPUT_ROOT"

# key -> (type, default); None default means required when used
SCHEMA = {
    "version": (int, 1),
    "output_dir": (str, "runs"),
    "model.t": (int, 8),
    "model.l": (int, 4),
    "model.e": (int, 8),
    "model.o": (int, 16),
    "model.h": (int, 128),
    "model.w": (int, 128),
    "model.base_kernel": (int, 3),
    "model.seed": (int, 0),
    "model.hidden_enc": (int, 32),
    "model.hidden_dec": (int, 32),
    "model.hidden_fusion": (int, 64),
    "model.variant": (str, "full"),
    "train.lr": (float, 1e-4),
    "train.batch_size": (int, 32),
    "train.steps": (int, 1000),
    "train.snr_db": (float, 10.0),
    "train.seed": (int, 0),
    "extractor.kind": (str, "toy-frozen"),
    "extractor.seed": (int, 0),
    "extractor.levels": (int, 8),
    "data.train_manifest": (str, ""),
    "data.eval_manifest": (str, ""),
    "eval.seed": (int, 0),
    "eval.snrs": (str, "0,5,10,15,20"),
    "eval.e_list": (str, ""),
    "eval.train_snrs": (str, ""),
    "eval.test_snrs": (str, "0,5,10,15,20"),
}

CONFIG_VERSION = 1


def parse_value(key, raw, lineno=None, path="<cli>"):
    if key not in SCHEMA:
        where = f"{path}:{lineno}: " if lineno is not None else ""
        raise ConfigError(f"{where}unknown config key {key!r}")
    typ, _ = SCHEMA[key]
    try:
        return typ(raw)
    except ValueError as exc:
        where = f"{path}:{lineno}: " if lineno is not None else ""
        raise ConfigError(f"{where}bad value for {key}: {raw!r} ({exc})") from exc


def read_config(path):
    cfg = {k: d for k, (_, d) in SCHEMA.items()}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, raw = (s.strip() for s in line.split("=", 1))
            cfg[key] = parse_value(key, raw, lineno, path)
    if cfg["version"] != CONFIG_VERSION:
        raise ConfigError(f"{path}: config version {cfg['version']} != {CONFIG_VERSION}")
    return cfg


def apply_overrides(cfg, overrides):
    for item in overrides:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(f"override must look like --key=value, got {item!r}")
        key, raw = item[2:].split("=", 1)
        cfg[key] = parse_value(key, raw)
    return cfg


def model_config(cfg) -> ModelConfig:
    return ModelConfig(
        t=cfg["model.t"], l=cfg["model.l"], e=cfg["model.e"], o=cfg["model.o"],
        h=cfg["model.h"], w=cfg["model.w"], base_kernel=cfg["model.base_kernel"],
        seed=cfg["model.seed"], hidden_enc=cfg["model.hidden_enc"],
        hidden_dec=cfg["model.hidden_dec"], hidden_fusion=cfg["model.hidden_fusion"],
        variant=cfg["model.variant"],
    )


def train_config(cfg) -> TrainConfig:
    return TrainConfig(
        cfg=model_config(cfg),
        lr=cfg["train.lr"],
        batch_size=cfg["train.batch_size"],
        steps=cfg["train.steps"],
        train_snr_db=cfg["train.snr_db"],
        seed=cfg["train.seed"],
        extractor=ExtractorSpec(
            kind=cfg["extractor.kind"], seed=cfg["extractor.seed"],
            levels=cfg["extractor.levels"],
        ),
    )


def parse_float_list(text, what):
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad {what} list {text!r}: {exc}") from exc


def run_dir_for(cfg, kind):
    digest = hashlib.sha256(
        json.dumps({k: cfg[k] for k in sorted(cfg)}, sort_keys=True).encode()
    ).hexdigest()[:12]
    root = os.environ.get(OUTPUT_ROOT_ENV, ".")
    out = os.path.join(root, cfg["output_dir"], f"{kind}-{digest}")
    os.makedirs(out, exist_ok=True)
    return out


def snapshot(cfg, out_dir, command):
    with open(os.path.join(out_dir, "config.snapshot"), "w", encoding="utf-8") as fh:
        for key in sorted(cfg):
            fh.write(f"{key} = {cfg[key]}\n")
    # timestamps live only here, so every other artifact is reproducible
    with open(os.path.join(out_dir, "run_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump({"command": command, "timestamp": time.time()}, fh)


def _require_manifest(cfg, key):
    path = cfg[key]
    if not path:
        raise ConfigError(f"{key} must be set for this command")
    return read_manifest(path, split="train" if "train" in key else "test")


def cmd_train(args, overrides):
    cfg = apply_overrides(read_config(args.config), overrides)
    tcfg = train_config(cfg)
    manifest = _require_manifest(cfg, "data.train_manifest")
    out = run_dir_for(cfg, "train")
    snapshot(cfg, out, "train")
    train(manifest, tcfg, out_dir=out)
    print(f"checkpoint and loss history written to {out}")
    return 0


def cmd_eval(args, overrides):
    if overrides:
        raise ConfigError(f"unexpected arguments: {overrides}")
    model = MultiLevelCodec.load(args.ckpt)
    manifest = read_manifest(args.manifest, split="test")
    snrs = parse_float_list(args.snr, "snr")
    os.makedirs(args.out, exist_ok=True)
    rows = eval_rows(
        model, manifest, snrs, seed=args.seed,
        extractor=ExtractorSpec(seed=args.extractor_seed),
    )
    csv_path = os.path.join(args.out, "results.csv")
    write_results_csv(csv_path, rows)
    plot_metric_vs_snr(rows, "psnr_db", os.path.join(args.out, "psnr_vs_snr.png"))
    plot_metric_vs_snr(rows, "ssim", os.path.join(args.out, "ssim_vs_snr.png"))
    print(f"results written to {csv_path}")
    return 0


def cmd_sweep(args, overrides):
    cfg = apply_overrides(read_config(args.config), overrides)
    manifest = _require_manifest(cfg, "data.eval_manifest")
    e_list = [int(v) for v in parse_float_list(cfg["eval.e_list"], "eval.e_list")]
    if not e_list:
        raise ConfigError("eval.e_list must name the operating points to sweep")
    snrs = parse_float_list(cfg["eval.snrs"], "eval.snrs")
    out = run_dir_for(cfg, "sweep")
    snapshot(cfg, out, "sweep")
    rows = []
    for e in e_list:
        ckpt = os.path.join(out, f"e{e}", "model.npz")
        if not os.path.exists(ckpt):
            if args.train_missing:
                sub = apply_overrides(dict(cfg), [f"--model.e={e}"])
                tmanifest = _require_manifest(cfg, "data.train_manifest")
                train(tmanifest, train_config(sub), out_dir=os.path.join(out, f"e{e}"))
            else:
                print(f"warning: checkpoint for e={e} absent, skipping", file=sys.stderr)
                continue
        model = MultiLevelCodec.load(ckpt)
        rows.extend(
            eval_rows(
                model, manifest, snrs, seed=cfg["eval.seed"],
                extractor=ExtractorSpec(
                    kind=cfg["extractor.kind"], seed=cfg["extractor.seed"],
                    levels=cfg["extractor.levels"],
                ),
                train_snr=cfg["train.snr_db"],
            )
        )
    write_results_csv(os.path.join(out, "sweep.csv"), rows)
    plot_metric_vs_snr(rows, "psnr_db", os.path.join(out, "sweep_psnr.png"))
    plot_metric_vs_snr(rows, "ssim", os.path.join(out, "sweep_ssim.png"))
    print(f"sweep written to {out}")
    return 0


def cmd_matrix(args, overrides):
    cfg = apply_overrides(read_config(args.config), overrides)
    manifest = _require_manifest(cfg, "data.eval_manifest")
    train_snrs = parse_float_list(cfg["eval.train_snrs"], "eval.train_snrs")
    test_snrs = parse_float_list(cfg["eval.test_snrs"], "eval.test_snrs")
    if not train_snrs:
        raise ConfigError("eval.train_snrs must be set for the matrix command")
    out = run_dir_for(cfg, "matrix")
    snapshot(cfg, out, "matrix")
    ckpts = {}
    for snr in train_snrs:
        ckpt = os.path.join(out, f"snr{snr:g}", "model.npz")
        if not os.path.exists(ckpt):
            if args.train_missing:
                sub = apply_overrides(dict(cfg), [f"--train.snr_db={snr}"])
                tmanifest = _require_manifest(cfg, "data.train_manifest")
                train(tmanifest, train_config(sub), out_dir=os.path.join(out, f"snr{snr:g}"))
            else:
                print(f"warning: checkpoint for train SNR {snr} absent", file=sys.stderr)
                continue
        ckpts[snr] = ckpt
    ext = ExtractorSpec(
        kind=cfg["extractor.kind"], seed=cfg["extractor.seed"], levels=cfg["extractor.levels"]
    )
    grid = snr_mismatch_matrix(ckpts, test_snrs, manifest, seed=cfg["eval.seed"], extractor=ext)
    write_matrix_csv(os.path.join(out, "matrix.csv"), grid)
    plot_metric_vs_snr(matrix_rows(grid), "psnr_db", os.path.join(out, "matrix_psnr.png"))
    print(f"matrix written to {out}")
    return 0


def cmd_ablate(args, overrides):
    cfg = apply_overrides(read_config(args.config), overrides)
    manifest = _require_manifest(cfg, "data.train_manifest")
    snrs = parse_float_list(cfg["eval.snrs"], "eval.snrs")
    out = run_dir_for(cfg, "ablate")
    snapshot(cfg, out, "ablate")
    tables = ablation(manifest, train_config(cfg), snrs, seed=cfg["eval.seed"], out_dir=out)
    all_rows = []
    for variant, rows in tables.items():
        write_results_csv(os.path.join(out, f"ablation_{variant}.csv"), rows)
        all_rows.extend(rows)
    plot_metric_vs_snr(all_rows, "psnr_db", os.path.join(out, "ablation_psnr.png"))
    print(f"ablation written to {out}")
    return 0


def cmd_baseline(args, overrides):
    if overrides:
        raise ConfigError(f"unexpected arguments: {overrides}")
    img = load_image(args.image)
    mcfg = ModelConfig(t=args.t, l=3, e=args.e, o=2,
                       h=img.pixels.shape[0], w=img.pixels.shape[1])
    rows = []
    os.makedirs(args.out, exist_ok=True)
    for snr in sorted(parse_float_list(args.snr, "snr")):
        budget = rate_accounting(mcfg, mcfg.h, mcfg.w, snr)
        res = digital_baseline(img, budget)
        rows.append(
            result_row(
                "jpeg_capacity", budget.ratio, None, snr,
                psnr(img.pixels, res.reconstruction.pixels),
                ssim(img.pixels, res.reconstruction.pixels), res.failed,
            )
        )
        save_image(res.reconstruction, os.path.join(args.out, f"baseline_snr{snr:g}.png"))
    write_results_csv(os.path.join(args.out, "baseline.csv"), rows)
    print(f"baseline results written to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="semcom",
        description="Learned image transmission over an AWGN channel with "
        "multi-level semantic features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a config file")
    p_train.add_argument("config")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint over an SNR list")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--snr", required=True, help="comma-separated SNRs in dB")
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--extractor-seed", type=int, default=0)
    p_eval.set_defaults(func=cmd_eval)

    for name, fn in (("sweep", cmd_sweep), ("matrix", cmd_matrix), ("ablate", cmd_ablate)):
        p = sub.add_parser(name)
        p.add_argument("config")
        if name in ("sweep", "matrix"):
            p.add_argument("--train-missing", action="store_true",
                           help="train absent operating points first")
        p.set_defaults(func=fn)

    p_base = sub.add_parser("baseline", help="capacity-bounded JPEG baseline on one image")
    p_base.add_argument("--image", required=True)
    p_base.add_argument("--t", type=int, default=8)
    p_base.add_argument("--e", type=int, default=4)
    p_base.add_argument("--snr", required=True)
    p_base.add_argument("--out", required=True)
    p_base.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None):
    parser = build_parser()
    args, overrides = parser.parse_known_args(argv)
    try:
        return args.func(args, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SemcomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
