"""Command-line runner: ``spikejscc {train,eval,sweep,gen-data}``.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical
divergence, 4 file or I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from . import outputs
from .config import ConfigError, ExperimentConfig, format_validation_error, load_config
from .data import DatasetFormatError, PreprocessConfig, load_event_directory, save_dataset
from .experiment import build_data, evaluate_trained, mismatch_matrix, snr_sweep, train
from .glm import CheckpointError, load_checkpoint
from .spikes import generate_synthetic_dataset
from .trainer import DivergenceError

log = logging.getLogger("spikejscc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4


class UsageError(Exception):
    pass


def _snr_list(text: str) -> list:
    items = [s for s in text.split(",") if s.strip()]
    if not items:
        raise UsageError("--snr-list is empty")
    try:
        return [outputs.parse_snr(s) for s in items]
    except ValueError as exc:
        raise UsageError(f"--snr-list: {exc}") from None


def _resolve(args, cfg: ExperimentConfig) -> tuple[ExperimentConfig, Path]:
    if args.seed is not None:
        cfg = cfg.with_updates(seed=args.seed)
    out = args.out or cfg.output_dir
    if out is None:
        raise UsageError("no output directory: pass --out or set output_dir in the config")
    return cfg, Path(out)


def _load(args) -> ExperimentConfig:
    if args.config is None:
        raise UsageError("--config is required")
    return load_config(args.config)


def _progress(rec: dict) -> None:
    loss = rec["train_loss"]
    log.info(
        "iteration %d  train_loss %s  test_accuracy %.4f",
        rec["iteration"],
        "-" if loss is None else f"{loss:.4f}",
        rec["test_accuracy"],
    )


def cmd_train(args) -> int:
    cfg, out = _resolve(args, _load(args))
    out.mkdir(parents=True, exist_ok=True)
    result = train(cfg, progress=_progress)
    outputs.save_training_run(out, cfg, result)
    outputs.write_manifest(out, "train", cfg)
    print(f"final test accuracy {result.final.accuracy:.4f}  ({out})")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.checkpoint is None:
        raise UsageError("--checkpoint is required")
    encoder, decoder, meta = load_checkpoint(args.checkpoint)
    if args.config is not None:
        cfg = load_config(args.config)
    elif "config" in meta:
        cfg = ExperimentConfig.model_validate(meta["config"])
    else:
        raise UsageError("checkpoint carries no config; pass --config")
    cfg, out = _resolve(args, cfg)
    data = build_data(cfg)
    if (encoder is None) != (cfg.scheme == "uncoded"):
        raise ConfigError("scheme: checkpoint and config disagree on the presence of an encoder")
    if decoder.topology.num_inputs != cfg.d_x or decoder.topology.num_outputs != len(data.classes):
        raise ConfigError(
            "topology: checkpoint decoder has "
            f"{decoder.topology.num_inputs} inputs / {decoder.topology.num_outputs} outputs, "
            f"config implies {cfg.d_x} / {len(data.classes)}"
        )
    if encoder is not None and encoder.topology.num_inputs != cfg.d_u:
        raise ConfigError(f"dataset.d_u: checkpoint encoder expects {encoder.topology.num_inputs} inputs")
    try:
        snr = cfg.channel.snr_db if args.test_snr is None else outputs.parse_snr(args.test_snr)
    except ValueError as exc:
        raise UsageError(f"--test-snr: {exc}") from None
    res, calib = evaluate_trained(cfg, encoder, decoder, data, snr)
    T = res.curve.size
    horizon = T if args.horizon is None else args.horizon
    if not 1 <= horizon <= T:
        raise UsageError(f"--horizon must lie in 1..{T}")
    out.mkdir(parents=True, exist_ok=True)
    outputs.write_timestep_csv(out / outputs.TIMESTEP_CSV, res.curve)
    summary = {
        "accuracy": float(res.curve[horizon - 1]),
        "horizon": horizon,
        "snr_db": snr,
        "sigma2": calib.sigma2_mean,
        "no_spike_fraction": res.no_spike_fraction,
        "output_spikes": res.output_spikes,
        "checkpoint": str(args.checkpoint),
    }
    (out / "eval.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    outputs.write_manifest(out, "eval", cfg, {"test_snr_db": snr, "horizon": horizon})
    print(f"test accuracy {summary['accuracy']:.4f} at horizon {horizon}")
    return EXIT_OK


def _point_dir(out: Path, snr_db) -> Path:
    return out / f"snr_{outputs.snr_label(snr_db)}"


def cmd_sweep(args) -> int:
    cfg, out = _resolve(args, _load(args))
    if args.snr_list is None:
        raise UsageError("--snr-list is required")
    snrs = _snr_list(args.snr_list)
    out.mkdir(parents=True, exist_ok=True)
    dirs = [_point_dir(out, s) for s in snrs]
    if args.mode == "per-snr":
        rows = snr_sweep(cfg, snrs, args.jobs, dirs)
        outputs.write_snr_csv(out / outputs.SNR_CSV, rows)
        for r in rows:
            print(f"snr {outputs.snr_label(r['snr_db'])}: accuracy {r['test_accuracy']:.4f}")
        extra = {"mode": "per-snr", "snr_list": snrs}
    else:
        test_snrs = snrs if args.test_snr_list is None else _snr_list(args.test_snr_list)
        matrix = mismatch_matrix(cfg, snrs, test_snrs, args.jobs, dirs)
        outputs.write_mismatch_csv(out / outputs.MISMATCH_CSV, snrs, test_snrs, matrix)
        print(matrix)
        extra = {"mode": "mismatch", "snr_list": snrs, "test_snr_list": test_snrs}
    outputs.write_manifest(out, "sweep", cfg, extra)
    return EXIT_OK


def _crop(text):
    if text is None:
        return None
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 4:
        raise UsageError("--crop takes x0,y0,width,height")
    return tuple(parts)


def cmd_gen_data(args) -> int:
    if args.out is None:
        raise UsageError("--out is required")
    out = Path(args.out)
    if args.events is not None:
        classes = None if args.classes is None else [int(c) for c in args.classes.split(",")]
        pcfg = PreprocessConfig(
            sensor_width=args.sensor_size,
            sensor_height=args.sensor_size,
            crop=_crop(args.crop),
            downsample=args.downsample,
            num_steps=args.num_steps,
            window_us=args.window_us,
            polarity=args.polarity,
        )
        root = Path(args.events)
        if not root.is_dir():
            raise FileNotFoundError(f"event directory {root} not found")
        data = load_event_directory(root, pcfg, classes)
    else:
        cfg = _load(args)
        if args.seed is not None:
            cfg = cfg.with_updates(seed=args.seed)
        ds = cfg.dataset
        if ds.source != "synthetic":
            raise ConfigError("dataset.source: gen-data builds synthetic data only; use --events for recordings")
        seed = cfg.seed if ds.seed is None else ds.seed
        data = generate_synthetic_dataset(
            ds.num_classes, ds.d_u, ds.num_steps, ds.spike_density, ds.jitter, seed, ds.per_class
        )
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(out, data)
    shape = data.shape if len(data) else None
    print(f"wrote {len(data)} examples of shape {shape} to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikejscc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="JSON config or run manifest")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--out", help="output directory (file for gen-data)")

    p = sub.add_parser("train", help="train encoder and decoder")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", help="checkpoint.json written by train")
    p.add_argument("--test-snr", help="evaluate at this SNR in dB ('inf' for noiseless)")
    p.add_argument("--horizon", type=int, help="decode after this many steps (default: all)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train one model per SNR point")
    common(p)
    p.add_argument("--snr-list", help="comma-separated SNRs in dB; 'inf' is noiseless")
    p.add_argument("--test-snr-list", help="test SNRs for mismatch mode (default: --snr-list)")
    p.add_argument("--mode", choices=["per-snr", "mismatch"], default="per-snr")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-data", help="write a JSONL spike dataset")
    common(p)
    p.add_argument("--events", help="directory of <label>/*.csv event recordings")
    p.add_argument("--classes", help="comma-separated labels to keep")
    p.add_argument("--sensor-size", type=int, default=128)
    p.add_argument("--crop", help="x0,y0,width,height")
    p.add_argument("--downsample", type=int, default=1)
    p.add_argument("--num-steps", type=int, default=80)
    p.add_argument("--window-us", type=int, default=25_000)
    p.add_argument("--polarity", choices=["merge", "positive"], default="merge")
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"config error: {format_validation_error(exc)}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (OSError, DatasetFormatError, CheckpointError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
