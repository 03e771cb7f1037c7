"""Full-scale run on event-camera digits 0 and 7 (hours of CPU time).

Build the dataset first from ``<root>/<digit>/*.csv`` recordings::

    spikejscc gen-data --events <root> --classes 0,7 --crop 51,51,26,26 \\
        --num-steps 80 --window-us 25000 --out mnist_dvs.jsonl

then run ``python scripts/reproduce_mnist_dvs.py mnist_dvs.jsonl``.
"""

from __future__ import annotations

import argparse
import json

from spikejscc.config import ExperimentConfig
from spikejscc.experiment import train

SNRS = (-6.0, -8.0)


def config(path: str, snr_db: float, iterations: int, seed: int) -> ExperimentConfig:
    return ExperimentConfig.model_validate(
        {
            "dataset": {"source": "file", "path": path, "classes": [0, 7], "d_u": 676, "num_steps": 80,
                        "train_fraction": 0.8},
            "topology": {"rate": 1.0, "encoder_hidden": 0},
            "channel": {"snr_db": snr_db},
            "iterations": iterations,
            "evaluation": {"every": max(iterations // 10, 1)},
            "seed": seed,
        }
    )


def run(path: str, iterations: int = 20_000, seed: int = 0) -> dict:
    """Final test accuracy keyed by training SNR."""
    return {snr: train(config(path, snr, iterations, seed)).final.accuracy for snr in SNRS}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("dataset", help="JSONL dataset written by gen-data")
    parser.add_argument("--iterations", type=int, default=20_000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    print(json.dumps({str(k): v for k, v in run(args.dataset, args.iterations, args.seed).items()}, indent=2))


if __name__ == "__main__":
    main()
