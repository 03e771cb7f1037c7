"""Binary spike containers, temporal filter banks and online trace computation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes do not line up."""


class SpikeTensor:
    """Immutable binary matrix of shape ``(num_signals, num_steps)``."""

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.asarray(data)
        if arr.ndim != 2:
            raise DimensionError(f"spike tensor must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"spike tensor needs d >= 1 and T >= 1, got {arr.shape}")
        if arr.dtype != np.uint8:
            if not np.all((arr == 0) | (arr == 1)):
                raise ValueError("spike tensor entries must be 0 or 1")
            arr = arr.astype(np.uint8)
        else:
            if arr.max(initial=0) > 1:
                raise ValueError("spike tensor entries must be 0 or 1")
            arr = arr.copy()
        arr.setflags(write=False)
        self._data = arr

    @classmethod
    def zeros(cls, num_signals: int, num_steps: int) -> "SpikeTensor":
        return cls(np.zeros((num_signals, num_steps), dtype=np.uint8))

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    @property
    def num_signals(self) -> int:
        return self._data.shape[0]

    @property
    def num_steps(self) -> int:
        return self._data.shape[1]

    def count(self) -> int:
        return int(self._data.sum())

    def density(self) -> float:
        return self.count() / self._data.size

    def __eq__(self, other):
        if not isinstance(other, SpikeTensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._data, other._data))

    def __hash__(self):
        return hash((self.shape, self._data.tobytes()))

    def __repr__(self):
        return f"SpikeTensor(shape={self.shape}, spikes={self.count()})"


@dataclass(frozen=True)
class FilterBank:
    """K synaptic filters and one feedback filter, all of window length W.

    ``synaptic[k, d - 1]`` holds the amplitude at lag ``d``; lags beyond the
    window are zero.
    """

    synaptic: np.ndarray
    feedback: np.ndarray

    def __post_init__(self):
        syn = np.array(self.synaptic, dtype=float, ndmin=2)
        fb = np.array(self.feedback, dtype=float).ravel()
        if syn.shape[0] < 1 or syn.shape[1] < 1:
            raise ValueError("filter bank needs K >= 1 and W >= 1")
        if fb.shape[0] != syn.shape[1]:
            raise DimensionError(
                f"feedback window {fb.shape[0]} does not match synaptic window {syn.shape[1]}"
            )
        if not (np.all(np.isfinite(syn)) and np.all(np.isfinite(fb))):
            raise ValueError("filter values must be finite")
        syn.setflags(write=False)
        fb.setflags(write=False)
        object.__setattr__(self, "synaptic", syn)
        object.__setattr__(self, "feedback", fb)

    @property
    def num_filters(self) -> int:
        return self.synaptic.shape[0]

    @property
    def window(self) -> int:
        return self.synaptic.shape[1]


def convolve_filter(filt, spikes, t: int) -> float:
    """Direct evaluation of ``sum_{d >= 1} filt[d] * spikes[t - d]``.

    ``t`` is 1-based, so ``spikes[0]`` is the spike at step 1. This is the slow
    reference used to check the online traces.
    """
    filt = np.asarray(filt, dtype=float).ravel()
    spikes = np.asarray(spikes).ravel()
    T = spikes.shape[0]
    if not 1 <= t <= T:
        raise DimensionError(f"step {t} outside 1..{T}")
    total = 0.0
    for d in range(1, min(filt.shape[0], t - 1) + 1):
        total += filt[d - 1] * spikes[t - d - 1]
    return float(total)


class TraceState:
    """Online synaptic and feedback traces for a set of spiking signals.

    After :meth:`update` has consumed the spikes of steps ``1..t-1``, the traces
    equal ``convolve_filter(., history, t)``: the most recent spike enters with
    lag 1. Traces are recomputed from a ring buffer of the last W spike vectors.
    """

    def __init__(self, filters: FilterBank, num_signals: int):
        if num_signals < 1:
            raise DimensionError("need at least one signal")
        self.filters = filters
        self.num_signals = num_signals
        # history[d - 1] holds the spike vector d steps back
        self._history = np.zeros((filters.window, num_signals))
        self.synaptic = np.zeros((num_signals, filters.num_filters))
        self.feedback = np.zeros(num_signals)
        self.steps = 0

    def reset(self) -> None:
        self._history[:] = 0.0
        self.synaptic = np.zeros_like(self.synaptic)
        self.feedback = np.zeros_like(self.feedback)
        self.steps = 0

    def update(self, spikes_t) -> "TraceState":
        spikes_t = np.asarray(spikes_t, dtype=float).ravel()
        if spikes_t.shape[0] != self.num_signals:
            raise DimensionError(
                f"expected {self.num_signals} spikes, got {spikes_t.shape[0]}"
            )
        self._history[1:] = self._history[:-1]
        self._history[0] = spikes_t
        self.synaptic = (self.filters.synaptic @ self._history).T
        self.feedback = self.filters.feedback @ self._history
        self.steps += 1
        return self

    def copy(self) -> "TraceState":
        new = TraceState(self.filters, self.num_signals)
        new._history = self._history.copy()
        new.synaptic = self.synaptic.copy()
        new.feedback = self.feedback.copy()
        new.steps = self.steps
        return new


def raised_cosine_bank(num_filters: int = 2, window: int = 10, offset: float = 1.0) -> FilterBank:
    """Raised-cosine basis with log-spaced peaks over ``1..window``.

    ``a_k[d] = 0.5 cos(clip(pi (log(d + c) - phi_k) / dphi, -pi, pi)) + 0.5``,
    with centres ``phi_k`` evenly spaced on ``[log(1 + c), log(W + c)]``. Each
    filter is rescaled to a peak of 1. The feedback filter reuses the first
    basis element; its sign is learned through the feedback weight.
    """
    if num_filters < 1 or window < 1:
        raise ValueError(f"need K >= 1 and W >= 1, got K={num_filters}, W={window}")
    if offset <= 0:
        raise ValueError("offset must be positive")
    lo, hi = np.log(1 + offset), np.log(window + offset)
    centers = np.linspace(lo, hi, num_filters)
    spacing = (hi - lo) / max(num_filters - 1, 1)
    if spacing <= 0:
        spacing = 1.0
    lags = np.arange(1, window + 1)
    arg = np.pi * (np.log(lags + offset)[None, :] - centers[:, None]) / spacing
    basis = 0.5 * np.cos(np.clip(arg, -np.pi, np.pi)) + 0.5
    basis /= basis.max(axis=1, keepdims=True)
    return FilterBank(basis, basis[0].copy())


def exponential_bank(betas=(0.5, 0.8), window: int = 10) -> FilterBank:
    """Exponential filters ``a_k[d] = beta_k ** d``; feedback uses the first."""
    betas = np.asarray(betas, dtype=float).ravel()
    if betas.size < 1 or window < 1:
        raise ValueError("need at least one decay constant and W >= 1")
    lags = np.arange(1, window + 1)
    bank = betas[:, None] ** lags[None, :]
    return FilterBank(bank, bank[0].copy())


@dataclass
class LabeledDataset:
    """Parallel lists of spike tensors and integer labels."""

    examples: list[SpikeTensor] = field(default_factory=list)
    labels: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len(self.examples) != len(self.labels):
            raise DimensionError("examples and labels differ in length")

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(zip(self.examples, self.labels))

    def __getitem__(self, idx):
        return self.examples[idx], self.labels[idx]

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset([self.examples[i] for i in indices], [self.labels[i] for i in indices])

    @property
    def shape(self) -> tuple[int, int] | None:
        return self.examples[0].shape if self.examples else None

    def classes(self) -> list[int]:
        return sorted(set(self.labels))


def generate_synthetic_dataset(
    num_classes: int,
    d_u: int,
    num_steps: int,
    spike_density: float,
    jitter: float,
    seed: int,
    per_class: int = 50,
) -> LabeledDataset:
    """Class prototypes with independent per-entry flip noise.

    Each class gets a random binary prototype of the requested density; every
    example flips each entry of its prototype with probability ``jitter``.
    """
    if not 0.0 <= spike_density <= 1.0:
        raise ValueError(f"spike_density must lie in [0, 1], got {spike_density}")
    if not 0.0 <= jitter <= 1.0:
        raise ValueError(f"jitter must lie in [0, 1], got {jitter}")
    rng = np.random.default_rng(seed)
    shape = (d_u, num_steps)
    prototypes = [(rng.random(shape) < spike_density).astype(np.uint8) for _ in range(num_classes)]
    if spike_density == 0.0:
        # zero-density data stays silent regardless of jitter
        jitter = 0.0
    examples, labels = [], []
    for c, proto in enumerate(prototypes):
        for _ in range(per_class):
            flips = (rng.random(shape) < jitter).astype(np.uint8)
            examples.append(SpikeTensor(proto ^ flips))
            labels.append(c)
    return LabeledDataset(examples, labels)


def filter_bank_from_config(cfg: dict) -> FilterBank:
    """Build a bank from a ``{"type": ..., ...}`` block."""
    kind = cfg.get("type", "raised_cosine")
    if kind == "raised_cosine":
        return raised_cosine_bank(
            int(cfg.get("num_filters", 2)), int(cfg.get("window", 10)), float(cfg.get("offset", 1.0))
        )
    if kind == "exponential":
        return exponential_bank(cfg.get("betas", (0.5, 0.8)), int(cfg.get("window", 10)))
    if kind == "explicit":
        return FilterBank(cfg["synaptic"], cfg["feedback"])
    raise ValueError(f"unknown filter type {kind!r}")
