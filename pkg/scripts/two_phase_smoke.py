"""Bootstrap then adversarial training on 200 synthetic 64x48 images, printing per-epoch validation stats.

    python scripts/two_phase_smoke.py --out runs/smoke
"""

import argparse
import time

from saliency_lab import data, model, train


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/smoke")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=10, help="epochs per phase")
    args = p.parse_args()

    root = data.gen_synthetic(f"{args.out}/data", 200, 64, 48, seed=args.seed).root
    ds = data.Dataset.load(root)
    cfg = train.TrainConfig(batch_size=8, seed=args.seed, bootstrap_epochs=args.epochs, adversarial_epochs=args.epochs)
    gen = model.build_generator(model.generator_config(64, 48, 8), seed=args.seed)
    t0 = time.perf_counter()
    boot = train.train_bootstrap(gen, ds, cfg, f"{args.out}/bootstrap")
    adv = train.train_adversarial(gen, None, ds, cfg, boot.checkpoint, f"{args.out}/adversarial")
    print(boot.epoch_csv() + adv.epoch_csv().split("\n", 1)[1], end="")
    print(f"total {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
