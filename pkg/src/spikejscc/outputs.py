"""Run artifacts: metrics log, CSV tables, checkpoints and the manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

from . import __version__
from .glm import save_checkpoint

MANIFEST_VERSION = 1

METRICS_FILE = "metrics.jsonl"
CHECKPOINT_FILE = "checkpoint.json"
MANIFEST_FILE = "manifest.json"
ITERATION_CSV = "accuracy_vs_iteration.csv"
TIMESTEP_CSV = "accuracy_vs_timestep.csv"
SNR_CSV = "accuracy_vs_snr.csv"
MISMATCH_CSV = "mismatch_matrix.csv"


def snr_label(snr_db) -> str:
    """CSV spelling of an SNR point; the noiseless link is ``inf``."""
    return "inf" if snr_db is None else repr(float(snr_db))


def parse_snr(text: str):
    """Inverse of :func:`snr_label`; ``inf``, ``none`` and ``noiseless`` mean no noise."""
    t = text.strip().lower()
    if t in ("inf", "+inf", "none", "noiseless"):
        return None
    value = float(t)
    if math.isnan(value) or math.isinf(value):
        raise ValueError(f"invalid SNR value {text!r}")
    return value


def write_metrics(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _cell(x):
    return "" if x is None else x


def write_iteration_csv(path, records) -> None:
    write_csv(
        path,
        ["iteration", "train_loss", "test_accuracy", "snr_db", "sigma2"],
        [
            [r["iteration"], _cell(r["train_loss"]), r["test_accuracy"], snr_label(r["snr_db"]), r["sigma2"]]
            for r in records
        ],
    )


def write_timestep_csv(path, curve) -> None:
    write_csv(path, ["timestep", "accuracy"], [[t + 1, float(a)] for t, a in enumerate(curve)])


def write_snr_csv(path, rows) -> None:
    write_csv(
        path,
        ["snr_db", "seed", "test_accuracy", "sigma2"],
        [[snr_label(r["snr_db"]), r["seed"], r["test_accuracy"], r["sigma2"]] for r in rows],
    )


def write_mismatch_csv(path, train_snrs, test_snrs, matrix) -> None:
    write_csv(
        path,
        ["train_snr_db"] + [snr_label(s) for s in test_snrs],
        [[snr_label(s)] + [float(a) for a in row] for s, row in zip(train_snrs, matrix)],
    )


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, cfg, extra: dict | None = None) -> Path:
    """Record the resolved config, seed and a hash of every file already in ``out_dir``.

    The manifest is itself a valid ``--config`` input, so a run can be
    repeated from it.
    """
    out_dir = Path(out_dir)
    artifacts = {
        p.relative_to(out_dir).as_posix(): sha256(p)
        for p in sorted(out_dir.rglob("*"))
        if p.is_file() and p.name != MANIFEST_FILE
    }
    doc = {
        "manifest_version": MANIFEST_VERSION,
        "package_version": __version__,
        "command": command,
        "seed": cfg.seed,
        "config": cfg.model_dump(mode="json"),
        "artifacts": artifacts,
    }
    if extra:
        doc.update(extra)
    path = out_dir / MANIFEST_FILE
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def save_training_run(out_dir, cfg, result) -> None:
    """Write the metrics log, checkpoint and accuracy tables of a finished training run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics(out_dir / METRICS_FILE, result.metrics)
    write_iteration_csv(out_dir / ITERATION_CSV, result.metrics)
    write_timestep_csv(out_dir / TIMESTEP_CSV, result.final.curve)
    save_checkpoint(
        out_dir / CHECKPOINT_FILE,
        result.encoder,
        result.decoder,
        {"config": cfg.model_dump(mode="json"), "final_accuracy": result.final.accuracy},
    )
