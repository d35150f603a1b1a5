"""Command-line entry point: ``saliency-lab {gen-data,train,predict,eval,gradcheck}``.

Every option is resolved as flag > ``--config`` JSON file > built-in default,
and the resolved settings are printed as one JSON line before any work.
Exit codes: 0 success, 1 invalid arguments or inputs, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from pathlib import Path

from . import __version__
from .checkpoint import FORMAT_VERSION, Checkpoint, CheckpointError

DEFAULTS = {
    "gen-data": dict(out=None, count=200, width=64, height=48, sigma=None, objects_min=1, objects_max=3, seed=0),
    "train": dict(
        data=None, phase="bootstrap", epochs=None, scale=8, seed=0, alpha=0.005, lr=3e-4,
        weight_decay=1e-4, batch=32, downsample=4, init=None, out="runs", content_loss="bce",
    ),
    "predict": dict(model=None, image=None, out=None),
    "eval": dict(
        pred=None, model=None, images=None, data=None, gt=None, fix=None, report="report.csv", seed=0,
        splits=100, ig_baseline="uniform", emd_downsample=8, blur=0.0, threads=1,
    ),
    "gradcheck": dict(seed=0, h=1e-5, tol=1e-4, coords=24),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="saliency-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version",
                   version=f"saliency-lab {__version__} (checkpoint format {FORMAT_VERSION})")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    g = sub.add_parser("gen-data", help="write a synthetic fixation dataset")
    g.add_argument("--out", default=S)
    g.add_argument("--count", type=int, default=S)
    g.add_argument("--width", type=int, default=S)
    g.add_argument("--height", type=int, default=S)
    g.add_argument("--sigma", type=float, default=S, help="ground-truth blur (default width/16)")
    g.add_argument("--objects-min", type=int, default=S)
    g.add_argument("--objects-max", type=int, default=S)
    g.add_argument("--seed", type=int, default=S)

    t = sub.add_parser("train", help="bootstrap (content loss) or adversarial training")
    t.add_argument("--data", default=S)
    t.add_argument("--phase", choices=("bootstrap", "adversarial"), default=S)
    t.add_argument("--epochs", type=int, default=S)
    t.add_argument("--scale", type=int, default=S, help="channel-width divisor")
    t.add_argument("--seed", type=int, default=S)
    t.add_argument("--alpha", type=float, default=S)
    t.add_argument("--lr", type=float, default=S)
    t.add_argument("--weight-decay", type=float, default=S)
    t.add_argument("--batch", type=int, default=S, help="batch size (8 keeps desk runs short)")
    t.add_argument("--downsample", type=int, default=S)
    t.add_argument("--init", default=S, help="checkpoint to start from (required for adversarial)")
    t.add_argument("--out", default=S)
    t.add_argument("--content-loss", choices=("bce", "mse"), default=S)

    r = sub.add_parser("predict", help="predict a saliency map for one image")
    r.add_argument("--model", default=S)
    r.add_argument("--image", default=S)
    r.add_argument("--out", default=S)

    e = sub.add_parser("eval", help="compute all metrics and write a report CSV")
    e.add_argument("--pred", default=S, help="directory of predicted maps")
    e.add_argument("--model", default=S, help="checkpoint to predict with instead of --pred")
    e.add_argument("--images", default=S, help="image directory used with --model")
    e.add_argument("--data", default=S, help="dataset root: implies --gt/--fix/--images")
    e.add_argument("--gt", default=S)
    e.add_argument("--fix", default=S)
    e.add_argument("--report", default=S)
    e.add_argument("--seed", type=int, default=S)
    e.add_argument("--splits", type=int, default=S)
    e.add_argument("--ig-baseline", choices=("uniform", "center"), default=S)
    e.add_argument("--emd-downsample", type=int, default=S)
    e.add_argument("--blur", type=float, default=S)
    e.add_argument("--threads", type=int, default=S)

    c = sub.add_parser("gradcheck", help="finite-difference check of every primitive and loss")
    c.add_argument("--seed", type=int, default=S)
    c.add_argument("--h", type=float, default=S)
    c.add_argument("--tol", type=float, default=S)
    c.add_argument("--coords", type=int, default=S)

    for sp in (g, t, r, e, c):
        sp.add_argument("--config", default=None, help="JSON file of option defaults")
    return p


def resolve(args: argparse.Namespace) -> dict:
    cmd = args.command
    cfg = dict(DEFAULTS[cmd])
    if args.config:
        try:
            from_file = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        from_file = {k.replace("-", "_"): v for k, v in from_file.items()}
        unknown = set(from_file) - set(cfg)
        if unknown:
            raise UsageError(f"unknown keys in config file: {sorted(unknown)}")
        cfg.update(from_file)
    cfg.update({k: v for k, v in vars(args).items() if k in cfg})
    return cfg


def _require(cfg, *names):
    for n in names:
        if cfg.get(n) in (None, ""):
            raise UsageError(f"--{n.replace('_', '-')} is required")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen_data(cfg) -> int:
    from .data import gen_synthetic

    _require(cfg, "out")
    m = gen_synthetic(cfg["out"], cfg["count"], cfg["width"], cfg["height"], cfg["sigma"],
                      (cfg["objects_min"], cfg["objects_max"]), cfg["seed"])
    print(f"wrote {len(m.entries)} samples to {m.root}")
    return 0


def cmd_train(cfg) -> int:
    from .data import Dataset
    from .model import build_generator, generator_config
    from .train import TrainConfig, generator_from_checkpoint, train_adversarial, train_bootstrap

    _require(cfg, "data")
    phase = cfg["phase"]
    if phase == "adversarial" and not cfg["init"]:
        raise UsageError("adversarial training needs --init <bootstrap checkpoint>")
    tc = TrainConfig(
        alpha=cfg["alpha"], lr=cfg["lr"], weight_decay=cfg["weight_decay"], batch_size=cfg["batch"],
        downsample=cfg["downsample"], seed=cfg["seed"], content_loss=cfg["content_loss"],
    )
    if cfg["epochs"] is not None:
        if phase == "bootstrap":
            tc.bootstrap_epochs = cfg["epochs"]
        else:
            tc.adversarial_epochs = cfg["epochs"]
    elif phase == "adversarial":
        tc.adversarial_epochs = 10
    data = Dataset.load(cfg["data"])
    init = Checkpoint.load(cfg["init"]) if cfg["init"] else None
    out = Path(cfg["out"])
    if phase == "bootstrap":
        if init is not None:
            gen = generator_from_checkpoint(init, cfg["seed"])
        else:
            w, h = data.image_size
            gen = build_generator(generator_config(w, h, cfg["scale"]), cfg["seed"])
        result = train_bootstrap(gen, data, tc, out, resume=init)
    else:
        gen = generator_from_checkpoint(init, cfg["seed"])
        result = train_adversarial(gen, None, data, tc, init, out)
    for e in result.epochs:
        print(f"{e.phase} epoch {e.epoch}: train {e.train_loss:.6g} val_bce {e.val_bce:.6g} val_cc {e.val_cc:.4f}")
    print(f"generator updates {result.gen_updates}, discriminator updates {result.disc_updates}; outputs in {out}")
    return 0


def _load_generator(path):
    from .train import generator_from_checkpoint

    return generator_from_checkpoint(Checkpoint.load(path))


def cmd_predict(cfg) -> int:
    from .data import read_image, write_map

    _require(cfg, "model", "image", "out")
    gen = _load_generator(cfg["model"])
    image = read_image(cfg["image"])
    pred = gen.predict(image)[0]
    write_map(cfg["out"], pred)
    print(f"wrote {pred.shape[1]}x{pred.shape[0]} map to {cfg['out']}")
    return 0


def cmd_eval(cfg) -> int:
    from .data import map_files, read_image, write_map
    from .metrics import EvalSettings, evaluate_all

    if cfg["data"]:
        root = Path(cfg["data"])
        cfg["gt"] = cfg["gt"] or str(root / "maps")
        cfg["fix"] = cfg["fix"] or str(root / "fixations")
        cfg["images"] = cfg["images"] or str(root / "images")
    _require(cfg, "gt")
    if bool(cfg["pred"]) == bool(cfg["model"]):
        raise UsageError("give exactly one of --pred or --model")
    settings = EvalSettings(cfg["blur"], cfg["splits"], cfg["ig_baseline"], cfg["emd_downsample"], cfg["seed"], cfg["threads"])
    with tempfile.TemporaryDirectory() as tmp:
        pred_dir = cfg["pred"]
        if cfg["model"]:
            _require(cfg, "images")
            gen = _load_generator(cfg["model"])
            for image_id in map_files(cfg["gt"]):
                image = read_image(Path(cfg["images"]) / f"{image_id}.ppm")
                write_map(Path(tmp) / f"{image_id}.pfm", gen.predict(image)[0])
            pred_dir = tmp
        report = evaluate_all(pred_dir, cfg["gt"], cfg["fix"], None, settings)
    report.write(cfg["report"])
    for metric, value in report.aggregates.items():
        print(f"{metric:>6}: {value:.6g}")
    print(f"report written to {cfg['report']}")
    return 0


def cmd_gradcheck(cfg) -> int:
    from .checks import run_all

    failed = 0
    print(f"{'case':<34} {'parameter':<10} {'max_rel_err':>12}  result")
    for name, report in run_all(cfg["seed"], cfg["h"], cfg["tol"], cfg["coords"]):
        for c in report.checks:
            print(f"{name:<34} {c.name:<10} {c.max_rel_error:12.3e}  {'pass' if c.passed else 'FAIL'}")
            failed += not c.passed
    print("all checks passed" if not failed else f"{failed} check(s) failed")
    return 0 if not failed else 2


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve(args)
        print(json.dumps({"command": args.command, **cfg}, sort_keys=True), flush=True)
        return COMMANDS[args.command](cfg)
    except (UsageError, ValueError, CheckpointError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
