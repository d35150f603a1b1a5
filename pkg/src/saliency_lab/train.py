"""AdaGrad with L2 weight decay, BCE bootstrap training and the alternating adversarial phase."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import loss as L
from . import metrics
from .autodiff import Graph, Parameter
from .checkpoint import Checkpoint, checkpoint_name
from .data import Dataset, val_count
from .model import NetConfig, Network, build_discriminator, build_generator, discriminator_config

log = logging.getLogger(__name__)

LOG_HEADER = ("phase", "epoch", "step", "loss_total", "loss_bce", "loss_adv", "loss_disc")
EPOCH_HEADER = ("phase", "epoch", "train_loss", "val_bce", "val_bce_down", "val_cc", "gen_updates", "disc_updates")


@dataclass
class TrainConfig:
    alpha: float = 0.005
    lr: float = 3e-4
    weight_decay: float = 1e-4
    batch_size: int = 32
    bootstrap_epochs: int = 15
    adversarial_epochs: int = 0
    downsample: int = 4
    seed: int = 0
    adagrad_eps: float = 1e-8
    content_loss: str = "bce"

    DESK_BATCH = 8

    def __post_init__(self):
        for name in ("alpha", "lr", "weight_decay", "bootstrap_epochs", "adversarial_epochs", "adagrad_eps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.downsample not in L.DOWNSAMPLE_FACTORS:
            raise ValueError(f"downsample must be one of {L.DOWNSAMPLE_FACTORS}")
        if self.content_loss not in ("bce", "mse"):
            raise ValueError("content_loss must be 'bce' or 'mse'")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


def adagrad_step(param, grad, accum, lr: float, weight_decay: float, eps: float):
    """One AdaGrad update with L2 decay folded into the gradient.

    Returns ``(new_param, new_accum)``; the inputs are left untouched.
    """
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    accum = np.asarray(accum, dtype=np.float64)
    if not (param.shape == grad.shape == accum.shape):
        raise ValueError(f"shape mismatch: param {param.shape}, grad {grad.shape}, state {accum.shape}")
    g = grad + weight_decay * param
    accum = accum + g * g
    return param - lr * g / (np.sqrt(accum) + eps), accum


class Adagrad:
    def __init__(self, params: list[Parameter], lr: float, weight_decay: float = 0.0, eps: float = 1e-8):
        self.params = [p for p in params if p.trainable]
        self.lr, self.weight_decay, self.eps = lr, weight_decay, eps
        self.state = {p.name: np.zeros_like(p.value) for p in self.params}
        self.steps = 0

    def step(self) -> None:
        for p in self.params:
            p.value, self.state[p.name] = adagrad_step(
                p.value, p.grad, self.state[p.name], self.lr, self.weight_decay, self.eps
            )
        self.steps += 1

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        """Resume accumulators saved under the same parameter names; unknown names are an error."""
        for name, value in state.items():
            if name not in self.state:
                raise ValueError(f"optimizer state for unknown parameter {name!r}")
            if value.shape != self.state[name].shape:
                raise ValueError(f"{name}: optimizer state shape {value.shape} != {self.state[name].shape}")
            self.state[name] = np.array(value, dtype=np.float64)


# ---------------------------------------------------------------------------
# logging records
# ---------------------------------------------------------------------------


@dataclass
class LossRow:
    phase: str
    epoch: int
    step: int
    loss_total: float
    loss_bce: float | None = None
    loss_adv: float | None = None
    loss_disc: float | None = None


@dataclass
class EpochStats:
    phase: str
    epoch: int
    train_loss: float
    val_bce: float
    val_bce_down: float
    val_cc: float
    gen_updates: int
    disc_updates: int


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def rows_to_csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(getattr(r, h)) for h in header])
    return buf.getvalue()


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    rows: list[LossRow] = field(default_factory=list)
    epochs: list[EpochStats] = field(default_factory=list)
    gen_updates: int = 0
    disc_updates: int = 0

    def loss_csv(self) -> str:
        return rows_to_csv(self.rows, LOG_HEADER)

    def epoch_csv(self) -> str:
        return rows_to_csv(self.epochs, EPOCH_HEADER)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def train_val_split(data: Dataset) -> tuple[Dataset, Dataset]:
    """Manifest-tagged split; untagged data falls back to the last 10% as validation."""
    if "val" in data.splits:
        return data.split("train"), data.split("val")
    n_val = max(1, val_count(len(data))) if len(data) > 1 else 0
    return data.subset(range(len(data) - n_val)), data.subset(range(len(data) - n_val, len(data)))


def make_checkpoint(gen: Network, cfg: TrainConfig, phase: str, epoch: int, disc: Network | None = None,
                    g_opt: Adagrad | None = None, d_opt: Adagrad | None = None) -> Checkpoint:
    config = {
        "phase": phase,
        "epoch": epoch,
        "generator": gen.config.to_dict(),
        "discriminator": disc.config.to_dict() if disc is not None else None,
        "train": asdict(cfg),
    }
    params = {f"generator.{k}": v for k, v in gen.state().items()}
    if disc is not None:
        params.update({f"discriminator.{k}": v for k, v in disc.state().items()})
    # AdaGrad accumulators travel with the weights so a later phase resumes the same schedule
    for prefix, opt in (("adagrad.generator", g_opt), ("adagrad.discriminator", d_opt)):
        if opt is not None:
            params.update({f"{prefix}.{k}": v.copy() for k, v in opt.state.items()})
    return Checkpoint(config, params)


def generator_from_checkpoint(ckpt: Checkpoint, seed: int = 0) -> Network:
    gen = build_generator(NetConfig.from_dict(ckpt.config["generator"]), seed)
    gen.load_state(ckpt.subset("generator"))
    return gen


def discriminator_for(gen: Network, seed: int, ckpt: Checkpoint | None = None) -> Network:
    if ckpt is not None and ckpt.config.get("discriminator"):
        disc = build_discriminator(NetConfig.from_dict(ckpt.config["discriminator"]), seed)
        disc.load_state(ckpt.subset("discriminator"))
        return disc
    _, h, w = gen.config.input_shape
    return build_discriminator(discriminator_config(w, h, gen.config.scale_divisor, gen.config.init), seed)


def predict_batches(gen: Network, images: np.ndarray, batch_size: int = 8) -> np.ndarray:
    return np.concatenate([gen.predict(images[i:i + batch_size]) for i in range(0, len(images), batch_size)])


def validate(gen: Network, val: Dataset, factor: int, batch_size: int = 8) -> tuple[float, float, float]:
    """(full-resolution BCE, downsampled BCE, mean CC) on the validation set."""
    if len(val) == 0:
        return float("nan"), float("nan"), float("nan")
    pred = predict_batches(gen, val.images, batch_size)
    full = float(L.bce(pred, val.maps))
    down = float(L.bce(L.downsample_map(pred, factor), L.downsample_map(val.maps, factor)))
    ccs = []
    for p, t in zip(pred, val.maps):
        try:
            ccs.append(metrics.cc(p[0], t[0]))
        except metrics.DegenerateInputError:
            pass
    return full, down, float(np.mean(ccs)) if ccs else float("nan")


def _check_data(gen: Network, data: Dataset) -> None:
    if len(data) == 0:
        raise ValueError("dataset is empty")
    if data.images.shape[1] != 3:
        raise ValueError("images must be RGB")
    gen._check_input(data.images.shape)
    if data.maps.shape[2:] != data.images.shape[2:]:
        raise ValueError("map size does not match image size")


def _write_outputs(out_dir, phase: str, result: TrainResult) -> None:
    if out_dir is None:
        return
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"loss_log_{phase}.csv").write_text(result.loss_csv())
    (out_dir / f"epochs_{phase}.csv").write_text(result.epoch_csv())


# ---------------------------------------------------------------------------
# training phases
# ---------------------------------------------------------------------------


def bootstrap_step(gen: Network, opt: Adagrad, images, maps, cfg: TrainConfig) -> float:
    g = Graph()
    pred = gen.forward(g.constant(images, op="input"), g)
    target = g.constant(L.downsample_map(maps, cfg.downsample))
    loss = L.content_loss(L.downsample_map(pred, cfg.downsample), target, cfg.content_loss)
    g.backward(loss)
    opt.step()
    gen.zero_grad()
    return float(loss)


def train_bootstrap(gen: Network, data: Dataset, cfg: TrainConfig, out_dir=None, epochs: int | None = None,
                    resume: Checkpoint | None = None) -> TrainResult:
    """Content-loss-only training of the generator (``cfg.bootstrap_epochs`` epochs by default).

    ``resume`` restores saved AdaGrad accumulators (the weights are expected
    to be loaded into ``gen`` already). Writes ``ckpt_bootstrap_NNNN.sglb`` per epoch and the loss logs when
    ``out_dir`` is given.
    """
    _check_data(gen, data)
    epochs = cfg.bootstrap_epochs if epochs is None else epochs
    train, val = train_val_split(data)
    if len(train) == 0:
        raise ValueError("no training samples")
    opt = Adagrad(gen.parameters(), cfg.lr, cfg.weight_decay, cfg.adagrad_eps)
    if resume is not None:
        opt.load_state(resume.subset("adagrad.generator"))
    shuffle = np.random.default_rng([cfg.seed, 1])
    result = TrainResult(make_checkpoint(gen, cfg, "bootstrap", 0))
    step = 0
    for epoch in range(1, epochs + 1):
        losses = []
        for idx in train.batches(cfg.batch_size, shuffle):
            step += 1
            value = bootstrap_step(gen, opt, train.images[idx], train.maps[idx], cfg)
            losses.append(value)
            result.rows.append(LossRow("bootstrap", epoch, step, value, loss_bce=value))
        vb, vd, vc = validate(gen, val, cfg.downsample)
        result.epochs.append(EpochStats("bootstrap", epoch, float(np.mean(losses)), vb, vd, vc, opt.steps, 0))
        log.info("bootstrap epoch %d: train %.5f val_bce %.5f val_cc %.4f", epoch, np.mean(losses), vb, vc)
        result.checkpoint = make_checkpoint(gen, cfg, "bootstrap", epoch, g_opt=opt)
        if out_dir is not None:
            result.checkpoint.save(Path(out_dir) / checkpoint_name("bootstrap", epoch))
    result.gen_updates = opt.steps
    _write_outputs(out_dir, "bootstrap", result)
    return result


def discriminator_step(gen: Network, disc: Network, opt: Adagrad, images, maps) -> float:
    fake = gen.predict(images)
    g = Graph()
    img = g.constant(images, op="input")
    d_real = disc.forward(ad.concat([img, g.constant(maps)]), g)
    d_fake = disc.forward(ad.concat([img, g.constant(fake)]), g)
    loss = L.discriminator_loss(d_real, d_fake)
    g.backward(loss)
    opt.step()
    disc.zero_grad()
    return float(loss)


def generator_step(gen: Network, disc: Network, opt: Adagrad, images, maps, cfg: TrainConfig) -> tuple[float, float, float]:
    g = Graph()
    img = g.constant(images, op="input")
    pred = gen.forward(img, g)
    target = g.constant(L.downsample_map(maps, cfg.downsample))
    content = L.content_loss(L.downsample_map(pred, cfg.downsample), target, cfg.content_loss)
    d_out = disc.forward(ad.concat([img, pred]), g, trainable=False)
    loss = L.generator_adv_loss(d_out, content, cfg.alpha)
    g.backward(loss)
    opt.step()
    gen.zero_grad()
    weighted = cfg.alpha * float(content)
    return float(loss), weighted, float(loss) - weighted


def train_adversarial(gen: Network, disc: Network | None, data: Dataset, cfg: TrainConfig, init: Checkpoint,
                      out_dir=None, epochs: int | None = None) -> TrainResult:
    """Alternate one discriminator update and one generator update per batch.

    ``gen`` is loaded from ``init`` first. A ``None`` discriminator is built
    fresh from ``cfg.seed`` (or loaded from ``init`` if it carries one).
    """
    try:
        gen.load_state(init.subset("generator"))
    except ValueError as exc:
        raise ValueError(f"checkpoint does not fit the generator: {exc}") from None
    if disc is None:
        disc = discriminator_for(gen, cfg.seed + 1, init)
    _check_data(gen, data)
    epochs = cfg.adversarial_epochs if epochs is None else epochs
    train, val = train_val_split(data)
    if epochs == 0:
        return TrainResult(init)
    g_opt = Adagrad(gen.parameters(), cfg.lr, cfg.weight_decay, cfg.adagrad_eps)
    d_opt = Adagrad(disc.parameters(), cfg.lr, cfg.weight_decay, cfg.adagrad_eps)
    g_opt.load_state(init.subset("adagrad.generator"))
    d_opt.load_state(init.subset("adagrad.discriminator"))
    shuffle = np.random.default_rng([cfg.seed, 2])
    result = TrainResult(init)
    step = 0
    for epoch in range(1, epochs + 1):
        totals = []
        for idx in train.batches(cfg.batch_size, shuffle):
            step += 1
            images, maps = train.images[idx], train.maps[idx]
            ld = discriminator_step(gen, disc, d_opt, images, maps)
            total, weighted, adv = generator_step(gen, disc, g_opt, images, maps, cfg)
            totals.append(total)
            result.rows.append(LossRow("adversarial", epoch, step, total, weighted, adv, ld))
        vb, vd, vc = validate(gen, val, cfg.downsample)
        result.epochs.append(EpochStats("adversarial", epoch, float(np.mean(totals)), vb, vd, vc, g_opt.steps, d_opt.steps))
        log.info("adversarial epoch %d: G %.5f val_bce %.5f val_cc %.4f", epoch, np.mean(totals), vb, vc)
        result.checkpoint = make_checkpoint(gen, cfg, "adversarial", epoch, disc, g_opt, d_opt)
        if out_dir is not None:
            result.checkpoint.save(Path(out_dir) / checkpoint_name("adversarial", epoch))
    result.gen_updates, result.disc_updates = g_opt.steps, d_opt.steps
    _write_outputs(out_dir, "adversarial", result)
    return result
