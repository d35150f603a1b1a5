"""Desk-scale versions of the downsampling and content/adversarial loss comparisons.

Two reports are produced on a synthetic dataset, each a CSV with one row per
training variant and the columns sAUC, AUC-B, NSS, CC, IG:

* ``table_downsample.csv``: BCE-only training at downsample factors 1, 2, 4, 8
  (rows ``BCE``, ``BCE/2``, ``BCE/4``, ``BCE/8``).
* ``table_losses.csv``: MSE, BCE, BCE/4 and BCE/4 followed by adversarial
  training (``GAN/4``).

Values are local to the synthetic data and are not expected to resemble
numbers measured on natural images.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from . import metrics
from .data import Dataset, Manifest, gen_synthetic
from .model import build_generator, generator_config
from .train import TrainConfig, predict_batches, train_adversarial, train_bootstrap, train_val_split

log = logging.getLogger(__name__)

TABLE_COLUMNS = ("sAUC", "AUC-B", "NSS", "CC", "IG")
DOWNSAMPLE_ROWS = ("BCE", "BCE/2", "BCE/4", "BCE/8")
LOSS_ROWS = ("MSE", "BCE", "BCE/4", "GAN/4")


@dataclass
class ExperimentConfig:
    count: int = 200
    width: int = 64
    height: int = 48
    scale_divisor: int = 8
    batch_size: int = 8
    bootstrap_epochs: int = 10
    adversarial_epochs: int = 10
    seed: int = 0
    auc_splits: int = 100


def _label(kind: str, factor: int) -> str:
    name = kind.upper()
    return name if factor == 1 else f"{name}/{factor}"


def _evaluate(gen, val: Dataset, pool: dict, cfg: ExperimentConfig) -> dict[str, float]:
    pred = predict_batches(gen, val.images)
    ids = list(val.ids)
    report = metrics.evaluate_maps(
        ids,
        {i: p[0] for i, p in zip(ids, pred)},
        {i: m[0] for i, m in zip(ids, val.maps)},
        dict(zip(ids, val.fixations)),
        metrics.EvalSettings(auc_splits=cfg.auc_splits, seed=cfg.seed),
        other_pool=pool,
    )
    agg = report.aggregates
    return {c: agg.get(c, float("nan")) for c in TABLE_COLUMNS}


def table_csv(rows: dict[str, dict[str, float]]) -> str:
    lines = ["model," + ",".join(TABLE_COLUMNS)]
    lines += [f"{name}," + ",".join(f"{vals[c]:.4f}" for c in TABLE_COLUMNS) for name, vals in rows.items()]
    return "\n".join(lines) + "\n"


def run_tables(out_dir, cfg: ExperimentConfig | None = None, data_dir=None) -> dict[str, dict[str, dict[str, float]]]:
    """Train every variant, evaluate on the validation split and write both tables.

    Returns ``{"downsample": rows, "losses": rows}``. The dataset is generated
    under ``out_dir/data`` unless ``data_dir`` already holds a manifest.
    """
    cfg = cfg or ExperimentConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_dir = Path(data_dir) if data_dir else out / "data"
    if not (data_dir / "manifest.jsonl").exists():
        gen_synthetic(data_dir, cfg.count, cfg.width, cfg.height, seed=cfg.seed)
    data = Dataset.load(Manifest.load(data_dir))
    _, val = train_val_split(data)
    pool = dict(zip(data.ids, data.fixations))
    w, h = data.image_size
    base = TrainConfig(batch_size=cfg.batch_size, bootstrap_epochs=cfg.bootstrap_epochs,
                       adversarial_epochs=cfg.adversarial_epochs, seed=cfg.seed)

    results: dict[str, dict[str, float]] = {}
    checkpoints = {}
    variants = [("bce", f) for f in (1, 2, 4, 8)] + [("mse", 1)]
    for kind, factor in variants:
        label = _label(kind, factor)
        t0 = time.perf_counter()
        gen = build_generator(generator_config(w, h, cfg.scale_divisor), cfg.seed)
        tc = replace(base, content_loss=kind, downsample=factor)
        res = train_bootstrap(gen, data, tc, out / "runs" / label.replace("/", "_"))
        checkpoints[label] = res.checkpoint
        results[label] = _evaluate(gen, val, pool, cfg)
        log.info("%s trained and evaluated in %.1fs", label, time.perf_counter() - t0)

    t0 = time.perf_counter()
    gen = build_generator(generator_config(w, h, cfg.scale_divisor), cfg.seed)
    tc = replace(base, downsample=4)
    train_adversarial(gen, None, data, tc, checkpoints["BCE/4"], out / "runs" / "GAN_4")
    results["GAN/4"] = _evaluate(gen, val, pool, cfg)
    log.info("GAN/4 trained and evaluated in %.1fs", time.perf_counter() - t0)

    tables = {
        "downsample": {r: results[r] for r in DOWNSAMPLE_ROWS},
        "losses": {r: results[r] for r in LOSS_ROWS},
    }
    (out / "table_downsample.csv").write_text(table_csv(tables["downsample"]))
    (out / "table_losses.csv").write_text(table_csv(tables["losses"]))
    (out / "settings.txt").write_text("".join(f"{k}={v}\n" for k, v in asdict(cfg).items()))
    return tables
