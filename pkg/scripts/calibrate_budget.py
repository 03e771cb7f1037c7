"""Find the iteration budget at which the median test accuracy over seeds reaches a target.

Trains every seed once for ``--max-iterations``, logging test accuracy every
``--every`` iterations, and reports the first logged iteration whose median
across seeds meets ``--target``.
"""

from __future__ import annotations

import argparse
import json

import numpy as np

from spikejscc.config import load_config
from spikejscc.experiment import train
from spikejscc.outputs import parse_snr


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default="configs/synthetic.json")
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--first-seed", type=int, default=0)
    parser.add_argument("--max-iterations", type=int, default=6000)
    parser.add_argument("--every", type=int, default=500)
    parser.add_argument("--snr", default="inf", help="training SNR in dB; 'inf' is noiseless")
    parser.add_argument("--target", type=float, default=0.95)
    args = parser.parse_args()

    base = load_config(args.config).with_updates(
        iterations=args.max_iterations, **{"evaluation.every": args.every, "channel.snr_db": parse_snr(args.snr)}
    )
    curves, iterations = [], None
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        metrics = train(base.with_updates(seed=seed)).metrics
        iterations = [m["iteration"] for m in metrics]
        curves.append([m["test_accuracy"] for m in metrics])
        print(f"seed {seed}: final {curves[-1][-1]:.3f}", flush=True)
    median = np.median(np.array(curves), axis=0)
    hits = [it for it, m in zip(iterations, median) if m >= args.target]
    print(json.dumps({
        "snr_db": args.snr,
        "iterations": iterations,
        "median_accuracy": np.round(median, 4).tolist(),
        "budget": hits[0] if hits else None,
        "target": args.target,
    }, indent=2))


if __name__ == "__main__":
    main()
