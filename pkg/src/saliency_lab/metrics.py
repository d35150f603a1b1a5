"""Saliency evaluation metrics.

Fixation-based: AUC-Judd, AUC-Borji, shuffled AUC, NSS, information gain.
Distribution-based: CC, SIM, KL, EMD. Maps are 2-D arrays indexed
``[y, x]``; fixations are ``(x, y)`` pixel coordinates.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .transport import grid_distances, transport_cost

log = logging.getLogger(__name__)

EPS = 1e-12
EMD_MAX_CELLS = 1024
METRIC_NAMES = ("sAUC", "AUC-B", "AUC-J", "NSS", "CC", "SIM", "KL", "IG", "EMD")
FIXATION_METRICS = ("sAUC", "AUC-B", "AUC-J", "NSS", "IG")


class DegenerateInputError(ValueError):
    """Raised when a metric is undefined for its input (constant map, zero mass, no fixations)."""


class ManifestMismatch(ValueError):
    pass


def _as_map(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 3 and m.shape[0] == 1:
        m = m[0]
    if m.ndim != 2:
        raise ValueError(f"saliency map must be 2-D, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("saliency map contains non-finite values")
    return m


def _fix_array(fix, shape) -> np.ndarray:
    pts = np.asarray(list(fix), dtype=np.int64).reshape(-1, 2)
    if len(pts) == 0:
        raise DegenerateInputError("empty fixation set")
    h, w = shape
    x, y = pts[:, 0], pts[:, 1]
    if (x < 0).any() or (x >= w).any() or (y < 0).any() or (y >= h).any():
        raise ValueError(f"fixation outside {w}x{h} map")
    return pts


def _fix_mask(pts, shape) -> np.ndarray:
    mask = np.zeros(shape, bool)
    mask[pts[:, 1], pts[:, 0]] = True
    return mask


def normalize_sum(m) -> np.ndarray:
    m = _as_map(m)
    s = m.sum()
    if not s > 0:
        raise DegenerateInputError("map has no positive mass")
    return m / s


def standardize(m) -> np.ndarray:
    m = _as_map(m)
    sd = m.std()
    if not sd > 0:
        raise DegenerateInputError("map has zero variance")
    return (m - m.mean()) / sd


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(m, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, radius ceil(3 sigma), mirror-reflected borders."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    m = np.asarray(m, dtype=np.float64)
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    out = m
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (r, r)
        padded = np.pad(out, pad, mode="symmetric")
        n = out.shape[axis]
        acc = np.zeros_like(out)
        for i, wt in enumerate(k):
            sl = [slice(None), slice(None)]
            sl[axis] = slice(i, i + n)
            acc += wt * padded[tuple(sl)]
        out = acc
    return out


def auc_from_scores(pos, neg) -> float:
    """ROC area with a threshold at every distinct score; a value equal to the threshold counts as above it.

    Sweeping every distinct value (not only the positives) makes the trapezoid
    area equal the rank statistic with ties counted half.
    """
    pos = np.sort(np.asarray(pos, dtype=np.float64).ravel())
    neg = np.sort(np.asarray(neg, dtype=np.float64).ravel())
    if pos.size == 0:
        raise DegenerateInputError("no positive samples")
    if neg.size == 0:
        raise DegenerateInputError("no negative samples")
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    tpr = (pos.size - np.searchsorted(pos, thresholds, side="left")) / pos.size
    fpr = (neg.size - np.searchsorted(neg, thresholds, side="left")) / neg.size
    tpr = np.concatenate([[0.0], tpr, [1.0]])
    fpr = np.concatenate([[0.0], fpr, [1.0]])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def auc_judd(m, fix) -> float:
    m = _as_map(m)
    pts = _fix_array(fix, m.shape)
    mask = _fix_mask(pts, m.shape)
    if mask.all():
        raise DegenerateInputError("every pixel is fixated; no negatives")
    return auc_from_scores(m[pts[:, 1], pts[:, 0]], m[~mask])


def auc_borji(m, fix, splits: int = 100, negatives_per_split: int | None = None, seed=0) -> float:
    """Mean AUC over ``splits`` draws of uniformly random non-fixated negatives."""
    m = _as_map(m)
    pts = _fix_array(fix, m.shape)
    if splits < 1:
        raise ValueError("splits must be >= 1")
    mask = _fix_mask(pts, m.shape)
    pool = m[~mask]
    if pool.size == 0:
        raise DegenerateInputError("every pixel is fixated; no negatives")
    k = negatives_per_split or len(pts)
    rng = np.random.default_rng(seed)
    pos = m[pts[:, 1], pts[:, 0]]
    return float(np.mean([auc_from_scores(pos, pool[rng.integers(0, pool.size, k)]) for _ in range(splits)]))


def auc_shuffled(m, fix, other_fixations: Sequence, splits: int = 100, negatives_per_split: int | None = None, seed=0) -> float:
    """As :func:`auc_borji` but negatives are drawn from other images' fixation locations."""
    m = _as_map(m)
    pts = _fix_array(fix, m.shape)
    others = [p for fs in other_fixations for p in fs]
    if not others:
        raise DegenerateInputError("empty shuffled-negative pool")
    other = _fix_array(others, m.shape)
    k = negatives_per_split or len(pts)
    rng = np.random.default_rng(seed)
    pos = m[pts[:, 1], pts[:, 0]]
    pool = m[other[:, 1], other[:, 0]]
    return float(np.mean([auc_from_scores(pos, pool[rng.integers(0, pool.size, k)]) for _ in range(splits)]))


def nss(m, fix) -> float:
    z = standardize(m)
    pts = _fix_array(fix, z.shape)
    return float(z[pts[:, 1], pts[:, 0]].mean())


def cc(pred, gt) -> float:
    a, b = standardize(pred), standardize(gt)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean(a * b))


def sim(pred, gt) -> float:
    p, g = normalize_sum(pred), normalize_sum(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    return float(np.minimum(p, g).sum())


def kl(gt, pred, eps: float = EPS) -> float:
    """KL(gt || pred) in nats over sum-normalised maps."""
    g, p = normalize_sum(gt), normalize_sum(pred)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    return float(np.sum(g * np.log(g / (p + eps) + eps)))


def center_baseline(shape) -> np.ndarray:
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    s = w / 4.0
    b = np.exp(-(((xs - (w - 1) / 2) ** 2 + (ys - (h - 1) / 2) ** 2) / (2 * s * s)))
    return b / b.sum()


def baseline_map(kind: str, shape) -> np.ndarray:
    if kind == "uniform":
        return np.full(shape, 1.0 / (shape[0] * shape[1]))
    if kind == "center":
        return center_baseline(shape)
    raise ValueError(f"unknown IG baseline {kind!r}")


def info_gain(pred, fix, baseline, eps: float = EPS) -> float:
    """Mean log2 improvement of ``pred`` over ``baseline`` at the fixated pixels (bits)."""
    p = normalize_sum(pred)
    if isinstance(baseline, str):
        baseline = baseline_map(baseline, p.shape)
    b = normalize_sum(baseline)
    pts = _fix_array(fix, p.shape)
    y, x = pts[:, 1], pts[:, 0]
    return float(np.mean(np.log2(p[y, x] + eps) - np.log2(b[y, x] + eps)))


def emd(pred, gt, grid_downsample: int = 1) -> float:
    """Earth mover's distance between the maps as mass distributions on a coarse grid.

    Ground distance is Euclidean between cell centres, one unit per cell.
    """
    p = _as_map(pred)
    g = _as_map(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    if grid_downsample > 1:
        p, g = T.avgpool(p, grid_downsample), T.avgpool(g, grid_downsample)
    if p.size > EMD_MAX_CELLS:
        raise ValueError(f"EMD grid has {p.size} cells, limit {EMD_MAX_CELLS}; raise grid_downsample")
    p, g = normalize_sum(p), normalize_sum(g)
    value, _ = transport_cost(p.ravel(), g.ravel(), grid_distances(*p.shape))
    return value


# ---------------------------------------------------------------------------
# batch evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalSettings:
    blur_sigma: float = 0.0
    auc_splits: int = 100
    ig_baseline: str = "uniform"
    emd_downsample: int = 8
    seed: int = 0
    threads: int = 1


@dataclass
class MetricReport:
    rows: list[tuple[str, str, float]] = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    @property
    def aggregates(self) -> dict[str, float]:
        sums: dict[str, list[float]] = {}
        for _, metric, value in self.rows:
            sums.setdefault(metric, []).append(value)
        return {m: sum(v) / len(v) for m, v in sorted(sums.items(), key=lambda kv: _metric_order(kv[0]))}

    def value(self, image_id: str, metric: str) -> float:
        for i, m, v in self.rows:
            if i == image_id and m == metric:
                return v
        raise KeyError((image_id, metric))

    def to_csv(self) -> str:
        lines = [f"# {k}={self.settings[k]}" for k in sorted(self.settings)]
        lines.append("image_id,metric,value")
        lines += [f"{i},{m},{v:.9g}" for i, m, v in self.rows]
        lines += [f"__mean__,{m},{v:.9g}" for m, v in self.aggregates.items()]
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path


def _metric_order(name: str) -> int:
    return METRIC_NAMES.index(name) if name in METRIC_NAMES else len(METRIC_NAMES)


def evaluate_image(pred, gt, fix, other_fix, settings: EvalSettings, rng_key) -> list[tuple[str, float]]:
    """All metrics the inputs permit for one image, in canonical order."""
    pred = _as_map(pred)
    if settings.blur_sigma > 0:
        pred = gaussian_blur(pred, settings.blur_sigma)
    seed = np.random.SeedSequence(rng_key)
    s_borji, s_shuf = seed.spawn(2)
    jobs = {}
    if fix is not None and len(fix):
        jobs["sAUC"] = lambda: auc_shuffled(pred, fix, other_fix or [], settings.auc_splits, seed=s_shuf)
        jobs["AUC-B"] = lambda: auc_borji(pred, fix, settings.auc_splits, seed=s_borji)
        jobs["AUC-J"] = lambda: auc_judd(pred, fix)
        jobs["NSS"] = lambda: nss(pred, fix)
    if gt is not None:
        gt = _as_map(gt)
        jobs["CC"] = lambda: cc(pred, gt)
        jobs["SIM"] = lambda: sim(pred, gt)
        jobs["KL"] = lambda: kl(gt, pred)
    if fix is not None and len(fix):
        jobs["IG"] = lambda: info_gain(pred, fix, settings.ig_baseline)
    if gt is not None:
        factor = settings.emd_downsample
        while factor > 1 and (pred.shape[0] % factor or pred.shape[1] % factor):
            factor //= 2
        jobs["EMD"] = lambda: emd(pred, gt, factor)
    out = []
    for name in METRIC_NAMES:
        if name not in jobs:
            continue
        try:
            out.append((name, jobs[name]()))
        except DegenerateInputError as exc:
            log.warning("skipping %s: %s", name, exc)
    return out


def evaluate_maps(
    ids: Sequence[str],
    preds: dict,
    gts: dict,
    fixations: dict,
    settings: EvalSettings,
    other_pool: dict | None = None,
) -> MetricReport:
    """Evaluate in-memory maps; results are reduced in ``ids`` order whatever the thread count."""
    fixations = fixations or {}
    pool = other_pool if other_pool is not None else fixations

    def one(k):
        image_id = ids[k]
        fix = fixations.get(image_id)
        if fix is None:
            log.info("no fixations for %s; fixation metrics skipped", image_id)
        others = [f for oid, f in pool.items() if oid != image_id]
        return evaluate_image(preds[image_id], gts.get(image_id), fix, others, settings, [settings.seed, k])

    with ThreadPoolExecutor(max_workers=max(1, settings.threads)) as ex:
        results = list(ex.map(one, range(len(ids))))
    report = MetricReport(settings={k: v for k, v in asdict(settings).items() if k != "threads"})
    for image_id, vals in zip(ids, results):
        report.rows += [(image_id, name, v) for name, v in vals]
    return report


def evaluate_all(pred_dir, gt_dir, fix_dir=None, other_fix=None, settings: EvalSettings | None = None) -> MetricReport:
    """Evaluate every prediction map in ``pred_dir`` against ``gt_dir`` maps and ``fix_dir`` fixation lists.

    Files are matched by stem: ``<id>.pfm`` (or ``.pgm``) maps and ``<id>.txt`` fixations.
    ``other_fix`` is an optional id -> fixations pool for shuffled AUC; it
    defaults to the fixations of the other images.
    """
    from . import data

    settings = settings or EvalSettings()
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    pred_files = data.map_files(pred_dir)
    gt_files = data.map_files(gt_dir)
    ids = sorted(gt_files)
    if set(pred_files) != set(gt_files):
        missing = sorted(set(gt_files) - set(pred_files))
        extra = sorted(set(pred_files) - set(gt_files))
        raise ManifestMismatch(f"prediction/ground-truth ids differ: missing {missing[:5]}, extra {extra[:5]}")
    preds = {i: data.read_map(pred_files[i]) for i in ids}
    gts = {i: data.read_map(gt_files[i]) for i in ids}
    fixations = {}
    if fix_dir is not None:
        for i in ids:
            f = Path(fix_dir) / f"{i}.txt"
            if f.exists():
                fixations[i] = data.read_fixations(f)
    return evaluate_maps(ids, preds, gts, fixations, settings, other_fix)
