"""Rate decoding and inference-time measurements."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import GaussianQuantizedChannel
from .glm import SnnModel

EVAL_STREAM = 7
CALIBRATION_STREAM = 11


@dataclass
class ClassificationResult:
    predicted_class: int
    spike_counts: np.ndarray
    cumulative_counts: np.ndarray
    no_spikes: bool


def rate_decode(spikes, horizon: int | None = None) -> ClassificationResult:
    """Pick the output neuron with the most spikes in steps ``1..horizon``.

    Ties go to the lowest index, so a silent output layer decodes to class 0
    with ``no_spikes`` set.
    """
    arr = np.asarray(spikes.data if hasattr(spikes, "data") and not isinstance(spikes, np.ndarray) else spikes)
    T = arr.shape[1]
    horizon = T if horizon is None else horizon
    if not 1 <= horizon <= T:
        raise ValueError(f"horizon must lie in 1..{T}, got {horizon}")
    cumulative = np.cumsum(arr, axis=1, dtype=np.int64)
    counts = cumulative[:, horizon - 1]
    return ClassificationResult(int(np.argmax(counts)), counts, cumulative, bool(counts.max() == 0))


def example_rng(seed: int, stream: int, index: int, rep: int = 0) -> np.random.Generator:
    """Independent generator per (run seed, purpose, example, repetition)."""
    return np.random.default_rng([seed, stream, index, rep])


def infer(encoder: SnnModel | None, decoder: SnnModel, channel, u, rng) -> np.ndarray:
    """Run the whole link once with every neuron sampled; returns output spikes ``(d_v, T)``."""
    u = np.asarray(u.data if hasattr(u, "data") and not isinstance(u, np.ndarray) else u, dtype=float)
    T = u.shape[1]
    out_idx = decoder.topology.outputs
    out = np.zeros((out_idx.size, T), dtype=np.uint8)
    if encoder is not None:
        encoder.reset_state()
    decoder.reset_state()
    for t in range(T):
        if encoder is None:
            x_t = u[:, t]
        else:
            x_t = encoder.step(u[:, t], rng=rng).spikes[encoder.topology.outputs]
        y_t = x_t if channel is None else channel.step(x_t, rng)
        out[:, t] = decoder.step(y_t, rng=rng).spikes[out_idx]
    return out


def encoder_outputs(encoder: SnnModel, u, rng) -> np.ndarray:
    u = np.asarray(u.data if hasattr(u, "data") and not isinstance(u, np.ndarray) else u, dtype=float)
    encoder.reset_state()
    x = np.zeros((encoder.topology.num_outputs, u.shape[1]), dtype=np.uint8)
    for t in range(u.shape[1]):
        x[:, t] = encoder.step(u[:, t], rng=rng).spikes[encoder.topology.outputs]
    return x


def transmit_densities(encoder: SnnModel | None, dataset, seed: int) -> np.ndarray:
    """Per-example spike density of the transmitted signal.

    Encoder outputs are sampled with per-example generators, so the result is
    a pure function of the parameters, the data and ``seed``.
    """
    dens = np.zeros(len(dataset))
    for n, (u, _) in enumerate(dataset):
        if encoder is None:
            dens[n] = u.density()
        else:
            x = encoder_outputs(encoder, u, example_rng(seed, CALIBRATION_STREAM, n))
            dens[n] = x.mean()
    return dens


@dataclass
class EvalResult:
    accuracy: float
    curve: np.ndarray
    predictions: np.ndarray
    no_spike_fraction: float
    output_spikes: int


def _vote(per_rep: np.ndarray, num_classes: int) -> np.ndarray:
    """Majority vote along axis 0 with lowest-index tie-break; ``per_rep`` is ``(M, T)``."""
    votes = np.zeros((num_classes, per_rep.shape[1]), dtype=np.int64)
    for row in per_rep:
        votes[row, np.arange(per_rep.shape[1])] += 1
    return np.argmax(votes, axis=0)


def evaluate(
    encoder: SnnModel | None,
    decoder: SnnModel,
    dataset,
    class_index: dict,
    sigma2,
    threshold: float = 0.5,
    seed: int = 0,
    repetitions: int = 1,
) -> EvalResult:
    """Test accuracy and the time-to-accuracy curve.

    ``sigma2`` is one noise power or one per example. Each example uses its
    own generator derived from ``seed``, so results do not depend on
    evaluation order.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("empty evaluation set")
    d_v = decoder.topology.num_outputs
    T = dataset.shape[1]
    sig = np.broadcast_to(np.asarray(sigma2, dtype=float), (n,))
    d_x = decoder.topology.num_inputs
    preds = np.zeros((n, T), dtype=np.int64)
    truth = np.zeros(n, dtype=np.int64)
    silent = 0
    spikes_total = 0
    for i, (u, label) in enumerate(dataset):
        truth[i] = class_index[label]
        channel = GaussianQuantizedChannel(d_x, float(sig[i]), threshold)
        per_rep = np.zeros((repetitions, T), dtype=np.int64)
        for r in range(repetitions):
            out = infer(encoder, decoder, channel, u, example_rng(seed, EVAL_STREAM, i, r))
            res = rate_decode(out)
            per_rep[r] = np.argmax(res.cumulative_counts, axis=0)
            silent += res.no_spikes
            spikes_total += int(res.spike_counts.sum())
        preds[i] = per_rep[0] if repetitions == 1 else _vote(per_rep, d_v)
    curve = (preds == truth[:, None]).mean(axis=0)
    return EvalResult(float(curve[-1]), curve, preds[:, -1], silent / (n * repetitions), spikes_total)


def time_to_accuracy(encoder, decoder, dataset, class_index, sigma2, threshold=0.5, seed=0, repetitions=1) -> np.ndarray:
    """Accuracy after observing ``t = 1..T`` steps."""
    return evaluate(encoder, decoder, dataset, class_index, sigma2, threshold, seed, repetitions).curve
