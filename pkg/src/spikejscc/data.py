"""Dataset files, event-stream binning and target spike trains."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spikes import LabeledDataset, SpikeTensor


class DatasetFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class EmptyEventsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EventRecord:
    x: int
    y: int
    timestamp: int
    polarity: int


@dataclass(frozen=True)
class PreprocessConfig:
    """Binning of an event stream into a ``(d_u, T)`` spike tensor.

    ``crop`` is ``(x0, y0, width, height)`` in sensor pixels; without it the
    whole sensor is used. Pixels are pooled in ``downsample x downsample``
    blocks and signals are numbered row-major over the pooled grid. Time
    starts at ``t_start`` (first event when ``None``).
    """

    sensor_width: int = 128
    sensor_height: int = 128
    crop: tuple[int, int, int, int] | None = None
    downsample: int = 1
    num_steps: int = 80
    window_us: int = 25_000
    polarity: str = "merge"
    t_start: int | None = None

    def __post_init__(self):
        if self.num_steps < 1 or self.window_us < 1 or self.downsample < 1:
            raise ValueError("num_steps, window_us and downsample must be positive")
        if self.polarity not in ("merge", "positive"):
            raise ValueError(f"unknown polarity mode {self.polarity!r}")

    @property
    def grid(self) -> tuple[int, int]:
        w, h = (self.sensor_width, self.sensor_height) if self.crop is None else self.crop[2:]
        return w // self.downsample, h // self.downsample

    @property
    def num_signals(self) -> int:
        gw, gh = self.grid
        return gw * gh


def preprocess_events(events, cfg: PreprocessConfig) -> SpikeTensor:
    """A pixel-step cell is 1 iff at least one retained event falls in it."""
    gw, gh = cfg.grid
    out = np.zeros((gw * gh, cfg.num_steps), dtype=np.uint8)
    events = list(events)
    if not events:
        warnings.warn("no events; returning an all-zero tensor", EmptyEventsWarning, stacklevel=2)
        return SpikeTensor(out)
    x0, y0 = (0, 0) if cfg.crop is None else cfg.crop[:2]
    t0 = events[0].timestamp if cfg.t_start is None else cfg.t_start
    prev = None
    for ev in events:
        if prev is not None and ev.timestamp < prev:
            raise ValueError("events must be sorted by timestamp")
        prev = ev.timestamp
        if cfg.polarity == "positive" and ev.polarity <= 0:
            continue
        step = (ev.timestamp - t0) // cfg.window_us
        if step < 0 or step >= cfg.num_steps:
            continue
        gx = (ev.x - x0) // cfg.downsample
        gy = (ev.y - y0) // cfg.downsample
        if ev.x < x0 or ev.y < y0 or not (0 <= gx < gw and 0 <= gy < gh):
            continue
        out[gy * gw + gx, step] = 1
    return SpikeTensor(out)


def read_events_csv(path) -> list[EventRecord]:
    """Parse ``timestamp_us,x,y,polarity`` lines; a header row is optional."""
    events = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and not row[0].strip().lstrip("-").isdigit():
                continue
            if len(row) != 4:
                raise DatasetFormatError(f"expected 4 fields, got {len(row)}", lineno)
            try:
                ts, x, y, pol = (int(float(v)) for v in row)
            except ValueError as exc:
                raise DatasetFormatError(str(exc), lineno) from None
            if events and ts < events[-1].timestamp:
                raise DatasetFormatError("timestamps must be nondecreasing", lineno)
            events.append(EventRecord(x, y, ts, 1 if pol > 0 else -1))
    return events


def load_event_directory(root, cfg: PreprocessConfig, classes=None) -> LabeledDataset:
    """Read ``root/<label>/*.csv`` event files into a labeled dataset."""
    root = Path(root)
    examples, labels = [], []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            label = int(sub.name)
        except ValueError:
            continue
        if classes is not None and label not in classes:
            continue
        for f in sorted(sub.glob("*.csv")):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", EmptyEventsWarning)
                examples.append(preprocess_events(read_events_csv(f), cfg))
            labels.append(label)
    return LabeledDataset(examples, labels)


def target_spike_train(label: int, d_v: int, num_steps: int, target_rate: float = 1.0) -> SpikeTensor:
    """Neuron ``label`` fires every ``floor(1 / rate)`` steps from step 1; others stay silent."""
    if not 0 <= label < d_v:
        raise ValueError(f"label {label} outside 0..{d_v - 1}")
    if not 0.0 < target_rate <= 1.0:
        raise ValueError(f"target rate must lie in (0, 1], got {target_rate}")
    period = int(np.floor(1.0 / target_rate))
    out = np.zeros((d_v, num_steps), dtype=np.uint8)
    out[label, ::period] = 1
    return SpikeTensor(out)


# -- JSONL dataset files --------------------------------------------------------


def _record(tensor: SpikeTensor, label: int) -> str:
    j, t = np.nonzero(tensor.data)
    return json.dumps(
        {"label": int(label), "shape": list(tensor.shape), "spikes": [[int(a), int(b)] for a, b in zip(j, t)]},
        separators=(",", ":"),
    )


def save_dataset(path, data: LabeledDataset) -> None:
    with open(path, "w") as fh:
        for tensor, label in data:
            fh.write(_record(tensor, label) + "\n")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def load_dataset(path) -> LabeledDataset:
    examples, labels = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(rec, dict) or set(rec) != {"label", "shape", "spikes"}:
                raise DatasetFormatError("record must have exactly label, shape and spikes", lineno)
            shape = rec["shape"]
            if not (isinstance(shape, list) and len(shape) == 2 and all(_is_int(s) and s >= 1 for s in shape)):
                raise DatasetFormatError(f"bad shape {shape!r}", lineno)
            if not _is_int(rec["label"]):
                raise DatasetFormatError(f"bad label {rec['label']!r}", lineno)
            arr = np.zeros(shape, dtype=np.uint8)
            for pair in rec["spikes"]:
                if not (isinstance(pair, list) and len(pair) == 2 and all(_is_int(c) for c in pair)):
                    raise DatasetFormatError(f"bad spike coordinate {pair!r}", lineno)
                j, t = pair
                if not (0 <= j < shape[0] and 0 <= t < shape[1]):
                    raise DatasetFormatError(f"spike {pair} outside shape {shape}", lineno)
                arr[j, t] = 1
            examples.append(SpikeTensor(arr))
            labels.append(rec["label"])
    return LabeledDataset(examples, labels)


def split_dataset(data: LabeledDataset, train_fraction: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified split; each class keeps at least one example on each side."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    labels = np.asarray(data.labels)
    train_idx, test_idx = [], []
    for c in sorted(set(data.labels)):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            raise ValueError(f"class {c} has {idx.size} example(s); need at least 2 to split")
        idx = rng.permutation(idx)
        n_train = min(max(int(round(train_fraction * idx.size)), 1), idx.size - 1)
        train_idx.extend(idx[:n_train].tolist())
        test_idx.extend(idx[n_train:].tolist())
    return data.subset(sorted(train_idx)), data.subset(sorted(test_idx))
