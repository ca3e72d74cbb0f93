"""Evaluation sweeps, the train/test SNR mismatch matrix, and ablations."""

import csv
import math
import os
import warnings
from dataclasses import replace

import numpy as np

from .baseline import digital_baseline
from .channel import rate_accounting, snr_to_sigma2
from .data import ImageBatch, RawImage, denormalize, make_batches
from .errors import SemcomError
from .extractors import ExtractorSpec
from .metrics import format_psnr, psnr, ssim
from .model import ModelConfig, MultiLevelCodec
from .training import TrainConfig, batch_features, train

RESULT_FIELDS = ["system", "ratio", "train_snr_db", "test_snr_db", "psnr_db", "ssim", "failed"]
EVAL_BATCH = 8


def _eval_rng(seed, snr_db):
    # one generator per (seed, SNR) so identical noise is drawn regardless
    # of sweep order or which model is under test
    return np.random.default_rng([seed, int(round(snr_db * 1000.0)) & 0x7FFFFFFF])


def evaluate_learned(model: MultiLevelCodec, manifest, snr_db, seed=0, extractor=None):
    """Mean PSNR/SSIM of the learned system over the manifest at one SNR."""
    extractor = extractor or ExtractorSpec()
    cfg = model.cfg
    rng = _eval_rng(seed, snr_db)
    sigma = math.sqrt(snr_to_sigma2(snr_db))
    frame_len = (cfg.h // cfg.t) * (cfg.w // cfg.t) * cfg.e
    psnrs, ssims = [], []
    data_rng = np.random.default_rng(seed)
    for batch, entries in make_batches(
        manifest, EVAL_BATCH, data_rng, cfg.h, cfg.w, training=False
    ):
        p, a, f = batch_features(batch, extractor, cfg.t, entries=entries)
        if cfg.variant == "no_segmentation":
            f = batch.data
        noise = (
            rng.normal(0.0, sigma, size=(batch.data.shape[0], frame_len)) if sigma > 0 else None
        )
        out = model.forward(batch.data, p, a, f, noise=noise)
        refs = denormalize(batch)
        recs = denormalize(ImageBatch(out))
        for ref, rec in zip(refs, recs):
            psnrs.append(psnr(ref.pixels, rec.pixels))
            ssims.append(ssim(ref.pixels, rec.pixels))
    return float(np.mean(psnrs)), float(np.mean(ssims))


def evaluate_baseline(manifest, cfg: ModelConfig, snr_db, seed=0):
    """Mean PSNR/SSIM of the capacity-bounded JPEG baseline at one SNR.

    Returns (psnr, ssim, failed) where failed means every image in the
    manifest fell below its minimum-quality budget.
    """
    psnrs, ssims, fails = [], [], []
    data_rng = np.random.default_rng(seed)
    budget = rate_accounting(cfg, cfg.h, cfg.w, snr_db)
    for batch, entries in make_batches(
        manifest, EVAL_BATCH, data_rng, cfg.h, cfg.w, training=False
    ):
        for ref in denormalize(batch):
            res = digital_baseline(ref, budget)
            psnrs.append(psnr(ref.pixels, res.reconstruction.pixels))
            ssims.append(ssim(ref.pixels, res.reconstruction.pixels))
            fails.append(res.failed)
    return float(np.mean(psnrs)), float(np.mean(ssims)), all(fails)


def result_row(system, ratio, train_snr, test_snr, psnr_db, ssim_val, failed):
    return {
        "system": system,
        "ratio": repr(float(ratio)),
        "train_snr_db": repr(float(train_snr)) if train_snr is not None else "-",
        "test_snr_db": repr(float(test_snr)),
        "psnr_db": format_psnr(psnr_db),
        "ssim": repr(float(ssim_val)),
        "failed": int(failed),
    }


def write_results_csv(path, rows):
    rows = sorted(
        rows,
        key=lambda r: (r["system"], r["ratio"], r["train_snr_db"], float(r["test_snr_db"])),
    )
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        writer.writeheader()
        writer.writerows(rows)


def eval_rows(model, manifest, snr_list, seed=0, extractor=None, train_snr=None):
    """Learned-system plus baseline rows, one pair per SNR, sorted ascending."""
    rows = []
    ratio = model.cfg.e / (3 * model.cfg.t**2)
    for snr in sorted(snr_list):
        ps, ss = evaluate_learned(model, manifest, snr, seed=seed, extractor=extractor)
        rows.append(result_row("learned", ratio, train_snr, snr, ps, ss, False))
        bp, bs, bf = evaluate_baseline(manifest, model.cfg, snr, seed=seed)
        rows.append(result_row("jpeg_capacity", ratio, None, snr, bp, bs, bf))
    return rows


def sweep(ckpt_paths_by_ratio, snr_list, manifest, seed=0, extractor=None):
    """Rate sweep: per (ratio, SNR) means for learned system and baseline.

    ckpt_paths_by_ratio maps a ratio label to a checkpoint path; missing
    checkpoints are reported with a warning and skipped.
    """
    rows = []
    for label, path in sorted(ckpt_paths_by_ratio.items()):
        try:
            model = MultiLevelCodec.load(path)
        except (OSError, SemcomError) as exc:
            warnings.warn(f"skipping ratio {label}: {exc}")
            continue
        rows.extend(eval_rows(model, manifest, snr_list, seed=seed, extractor=extractor))
    return rows


def snr_mismatch_matrix(ckpts_by_train_snr, test_snrs, manifest, seed=0, extractor=None):
    """PSNR grid over (train SNR, test SNR) for channel-robustness plots."""
    grid = {}
    for train_snr in sorted(ckpts_by_train_snr):
        entry = ckpts_by_train_snr[train_snr]
        model = entry if isinstance(entry, MultiLevelCodec) else MultiLevelCodec.load(entry)
        for test_snr in sorted(test_snrs):
            ps, ss = evaluate_learned(model, manifest, test_snr, seed=seed, extractor=extractor)
            grid[(float(train_snr), float(test_snr))] = (ps, ss)
    return grid


def matrix_rows(grid):
    rows = []
    for (train_snr, test_snr), (ps, ss) in sorted(grid.items()):
        rows.append(result_row("learned", 0.0, train_snr, test_snr, ps, ss, False))
    return rows


def write_matrix_csv(path, grid):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["train_snr_db", "test_snr_db", "psnr_db", "ssim"])
        for (train_snr, test_snr), (ps, ss) in sorted(grid.items()):
            writer.writerow([train_snr, test_snr, format_psnr(ps), repr(ss)])


ABLATION_VARIANTS = ("full", "no_caption", "no_segmentation")


def ablation(manifest, tcfg: TrainConfig, snr_list, seed=0, out_dir=None):
    """Retrain each architecture variant from scratch and evaluate all of
    them on the shared manifest, seed, and noise draws."""
    tables = {}
    for variant in ABLATION_VARIANTS:
        base = tcfg.cfg
        e_cap = ModelConfig(
            t=base.t, l=base.l, e=1, o=base.o, h=base.h, w=base.w,
            base_kernel=base.base_kernel, seed=base.seed, hidden_enc=base.hidden_enc,
            hidden_dec=base.hidden_dec, hidden_fusion=base.hidden_fusion, variant=variant,
        ).total_width()
        vcfg = replace(base, variant=variant, e=min(base.e, e_cap))
        vt = replace(tcfg, cfg=vcfg)
        run_dir = os.path.join(out_dir, variant) if out_dir else None
        if run_dir:
            os.makedirs(run_dir, exist_ok=True)
        model, _ = train(manifest, vt, out_dir=run_dir)
        rows = []
        ratio = vcfg.e / (3 * vcfg.t**2)
        for snr in sorted(snr_list):
            ps, ss = evaluate_learned(
                model, manifest, snr, seed=seed, extractor=tcfg.extractor
            )
            rows.append(result_row(variant, ratio, tcfg.train_snr_db, snr, ps, ss, False))
        tables[variant] = rows
    return tables


def plot_metric_vs_snr(rows, metric, path, title=""):
    """One line per system over test SNR; written as a PNG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    systems = sorted({(r["system"], r["ratio"]) for r in rows})
    for system, ratio in systems:
        pts = [
            (float(r["test_snr_db"]), float(r[metric]))
            for r in rows
            if r["system"] == system and r["ratio"] == ratio and r[metric] != "inf"
        ]
        pts.sort()
        if pts:
            ax.plot(*zip(*pts), marker="o", label=f"{system} k/n={float(ratio):.4g}")
    ax.set_xlabel("test SNR (dB)")
    ax.set_ylabel("PSNR (dB)" if metric == "psnr_db" else "SSIM")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
