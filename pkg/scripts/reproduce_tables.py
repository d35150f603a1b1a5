"""Regenerate the downsampling table and the content/adversarial loss table on synthetic data.

    python scripts/reproduce_tables.py --out runs/tables
    python scripts/reproduce_tables.py --out runs/quick --count 40 --bootstrap-epochs 2 --adversarial-epochs 2

Writes table_downsample.csv and table_losses.csv under --out.
"""

import argparse
import logging
from dataclasses import fields

from saliency_lab.experiments import ExperimentConfig, run_tables, table_csv


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/tables")
    p.add_argument("--data", default=None, help="existing dataset root (generated under --out otherwise)")
    for f in fields(ExperimentConfig):
        p.add_argument("--" + f.name.replace("_", "-"), type=type(f.default), default=f.default)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = ExperimentConfig(**{f.name: getattr(args, f.name) for f in fields(ExperimentConfig)})
    tables = run_tables(args.out, cfg, args.data)
    print("downsample factors (BCE only)")
    print(table_csv(tables["downsample"]))
    print("content loss vs adversarial")
    print(table_csv(tables["losses"]))


if __name__ == "__main__":
    main()
