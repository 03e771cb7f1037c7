"""Probabilistic GLM spiking networks.

A network holds ``N`` neurons fed by ``d_in`` exogeneous signals. The
presynaptic signal vector is ``[inputs, neurons]`` so every neuron can listen
to any input and any other neuron. Neurons are ordered hidden first, then
outputs.

Each neuron ``i`` has a membrane potential

    o_i(t) = sum_{j in P_i} sum_k W[i, j, k] * syn[j, k] + w_i * fb_i + gamma_i

computed from traces that contain spikes up to step ``t - 1`` only, and fires
with probability ``sigmoid(o_i(t))``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .spikes import DimensionError, FilterBank, TraceState, filter_bank_from_config

CHECKPOINT_VERSION = 1


class ProbabilityClampWarning(RuntimeWarning):
    """A probability of exactly 0 or 1 was clamped before taking a log."""


def spike_probability(o):
    """Logistic sigmoid, computed without overflow."""
    return expit(o)


def log_loss(s, p, eps: float = 1e-12):
    """Binary cross-entropy ``-s log p - (1 - s) log(1 - p)``.

    Probabilities are clamped to ``[eps, 1 - eps]``; a clamp that changes the
    result triggers :class:`ProbabilityClampWarning`.
    """
    s = np.asarray(s, dtype=float)
    p = np.asarray(p, dtype=float)
    clipped = np.clip(p, eps, 1.0 - eps)
    if np.any((clipped != p) & (((p <= 0) & (s == 1)) | ((p >= 1) & (s == 0)))):
        warnings.warn("probability clamped at epsilon in log_loss", ProbabilityClampWarning, stacklevel=2)
    out = -s * np.log(clipped) - (1.0 - s) * np.log1p(-clipped)
    return float(out) if out.ndim == 0 else out


def loss_from_potential(s, o):
    """``log_loss(s, sigmoid(o))`` in log-sum-exp form, stable for large ``|o|``."""
    s = np.asarray(s, dtype=float)
    return np.logaddexp(0.0, o) - s * o


def log_prob_from_potential(s, o):
    return -loss_from_potential(s, o)


@dataclass(frozen=True, eq=False)
class Topology:
    """Neuron counts and connectivity.

    ``presynaptic[i, j]`` is true when signal ``j`` of ``[inputs, neurons]``
    feeds neuron ``i``; ``feedback[i]`` enables neuron ``i``'s self-memory
    term (all enabled when omitted).
    """

    num_inputs: int
    num_hidden: int
    num_outputs: int
    presynaptic: np.ndarray
    feedback: np.ndarray | None = None

    def __post_init__(self):
        mask = np.asarray(self.presynaptic, dtype=bool)
        if self.num_inputs < 0 or self.num_hidden < 0 or self.num_outputs < 0:
            raise ValueError("neuron counts must be nonnegative")
        if self.num_neurons < 1:
            raise ValueError("network needs at least one neuron")
        if mask.shape != (self.num_neurons, self.num_signals):
            raise DimensionError(
                f"presynaptic mask must be {(self.num_neurons, self.num_signals)}, got {mask.shape}"
            )
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "presynaptic", mask)
        fb = np.ones(self.num_neurons, dtype=bool) if self.feedback is None else np.array(self.feedback, dtype=bool)
        if fb.shape != (self.num_neurons,):
            raise DimensionError(f"feedback mask must have {self.num_neurons} entries, got {fb.shape}")
        fb.setflags(write=False)
        object.__setattr__(self, "feedback", fb)

    @classmethod
    def fully_connected(
        cls, num_inputs: int, num_hidden: int, num_outputs: int, output_recurrence: bool = True
    ) -> "Topology":
        """Inputs feed every neuron; every neuron feeds every other neuron.

        With ``output_recurrence=False`` output neurons feed no neuron at all,
        themselves included: they read the inputs and hidden neurons only.
        Outputs clamped to targets during training then cannot hand the label
        back to the network.
        """
        n = num_hidden + num_outputs
        mask = np.ones((n, num_inputs + n), dtype=bool)
        mask[:, num_inputs:] &= ~np.eye(n, dtype=bool)
        fb = np.ones(n, dtype=bool)
        if not output_recurrence:
            mask[:, num_inputs + num_hidden :] = False
            fb[num_hidden:] = False
        return cls(num_inputs, num_hidden, num_outputs, mask, fb)

    @property
    def num_neurons(self) -> int:
        return self.num_hidden + self.num_outputs

    def same_as(self, other: "Topology") -> bool:
        return (
            (self.num_inputs, self.num_hidden, self.num_outputs)
            == (other.num_inputs, other.num_hidden, other.num_outputs)
            and np.array_equal(self.presynaptic, other.presynaptic)
            and np.array_equal(self.feedback, other.feedback)
        )

    @property
    def num_signals(self) -> int:
        return self.num_inputs + self.num_neurons

    @property
    def hidden(self) -> np.ndarray:
        return np.arange(self.num_hidden)

    @property
    def outputs(self) -> np.ndarray:
        return np.arange(self.num_hidden, self.num_neurons)

    def to_dict(self) -> dict:
        return {
            "num_inputs": self.num_inputs,
            "num_hidden": self.num_hidden,
            "num_outputs": self.num_outputs,
            "presynaptic": [np.flatnonzero(row).tolist() for row in self.presynaptic],
            "feedback": [bool(f) for f in self.feedback],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Topology":
        n = d["num_hidden"] + d["num_outputs"]
        mask = np.zeros((n, d["num_inputs"] + n), dtype=bool)
        if len(d["presynaptic"]) != n:
            raise DimensionError("presynaptic list length does not match neuron count")
        for i, idx in enumerate(d["presynaptic"]):
            mask[i, idx] = True
        return cls(d["num_inputs"], d["num_hidden"], d["num_outputs"], mask, d.get("feedback"))


@dataclass
class StepRecord:
    """Everything produced by one network step.

    ``syn`` and ``fb`` are the traces the potentials were computed from, i.e.
    the inputs to :func:`log_prob_grad`.
    """

    spikes: np.ndarray
    potentials: np.ndarray
    syn: np.ndarray
    fb: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return spike_probability(self.potentials)

    @property
    def log_probs(self) -> np.ndarray:
        return log_prob_from_potential(self.spikes, self.potentials)


class SnnModel:
    """GLM spiking network with a flat parameter vector.

    ``theta`` is laid out as ``[W (N x S x K), w (N), gamma (N)]``; ``W``,
    ``w`` and ``gamma`` are views into it, so in-place updates on ``theta``
    are seen everywhere. Synaptic weights of absent connections stay zero.
    """

    def __init__(
        self,
        topology: Topology,
        filters: FilterBank,
        rng=None,
        filter_config: dict | None = None,
        init_scale: float = 0.1,
    ):
        self.topology = topology
        self.filters = filters
        self.filter_config = filter_config
        N, S, K = topology.num_neurons, topology.num_signals, filters.num_filters
        self._n_syn = N * S * K
        self.theta = np.zeros(self._n_syn + 2 * N)
        self.W = self.theta[: self._n_syn].reshape(N, S, K)
        self.w = self.theta[self._n_syn : self._n_syn + N]
        self.gamma = self.theta[self._n_syn + N :]
        self._mask_flat = np.repeat(topology.presynaptic.astype(float), K, axis=1)
        self.param_owner = np.concatenate(
            [np.repeat(np.arange(N), S * K), np.arange(N), np.arange(N)]
        )
        self._fb_mask = topology.feedback.astype(float)
        self.param_mask = np.concatenate([self._mask_flat.ravel(), self._fb_mask, np.ones(N)])
        self.traces = TraceState(filters, S)
        if rng is not None:
            self.init_params(rng, init_scale)

    # -- parameters ---------------------------------------------------------

    def init_params(self, rng, scale: float = 0.1) -> None:
        """Gaussian weights with std ``scale / sqrt(|P_i| K)``; zero biases."""
        K = self.filters.num_filters
        fan_in = np.maximum(self.topology.presynaptic.sum(axis=1), 1) * K
        std = scale / np.sqrt(fan_in)
        self.W[...] = rng.standard_normal(self.W.shape) * std[:, None, None]
        self.W *= self.topology.presynaptic[:, :, None]
        self.w[...] = rng.standard_normal(self.w.shape) * std * self.topology.feedback
        self.gamma[...] = 0.0

    @property
    def num_params(self) -> int:
        return self.theta.size

    def neuron_params(self, i: int) -> dict:
        """Parameters of neuron ``i``: ``|P_i| * K + 2`` numbers (feedback is 0 when disabled)."""
        pre = np.flatnonzero(self.topology.presynaptic[i])
        return {"synaptic": self.W[i, pre].copy(), "feedback": float(self.w[i]), "bias": float(self.gamma[i])}

    def set_theta(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != self.theta.shape:
            raise DimensionError(f"expected {self.theta.shape} parameters, got {theta.shape}")
        self.theta[...] = theta * self.param_mask

    def copy(self) -> "SnnModel":
        new = SnnModel(self.topology, self.filters, filter_config=self.filter_config)
        new.theta[...] = self.theta
        new.traces = self.traces.copy()
        return new

    # -- dynamics -----------------------------------------------------------

    def reset_state(self) -> None:
        self.traces.reset()

    def potentials(self) -> np.ndarray:
        """Membrane potentials for the next step from the current traces."""
        N = self.topology.num_neurons
        d_in = self.topology.num_inputs
        syn = self.traces.synaptic
        fb = self.traces.feedback[d_in:]
        return self.W.reshape(N, -1) @ syn.ravel() + self.w * fb + self.gamma

    def step(self, exogeneous_t, clamp=None, rng=None, forced=None) -> StepRecord:
        """Advance one step.

        Free neurons sample from Bernoulli(sigmoid(o)). ``clamp`` fixes the
        output neurons; ``forced`` fixes every neuron (used for replaying a
        given trajectory). Traces then absorb the inputs and realized spikes.
        """
        topo = self.topology
        exo = np.asarray(exogeneous_t, dtype=float).ravel()
        if exo.shape[0] != topo.num_inputs:
            raise DimensionError(f"expected {topo.num_inputs} inputs, got {exo.shape[0]}")
        o = self.potentials()
        syn = self.traces.synaptic
        fb = self.traces.feedback[topo.num_inputs :]
        if forced is not None:
            spikes = np.array(forced, dtype=float).ravel()
            if spikes.shape[0] != topo.num_neurons:
                raise DimensionError(f"forced vector must have {topo.num_neurons} entries")
        else:
            if rng is None:
                raise ValueError("rng required for sampling")
            spikes = (rng.random(topo.num_neurons) < spike_probability(o)).astype(float)
        if clamp is not None:
            clamp = np.asarray(clamp, dtype=float).ravel()
            if clamp.shape[0] != topo.num_outputs:
                raise DimensionError(
                    f"clamp vector has {clamp.shape[0]} entries, network has {topo.num_outputs} outputs"
                )
            spikes[topo.num_hidden :] = clamp
        self.traces.update(np.concatenate([exo, spikes]))
        return StepRecord(spikes, o, syn, fb)

    def log_prob_grad(self, rec: StepRecord) -> np.ndarray:
        """Gradient of ``log p(s_i | o_i)`` for every neuron, as a flat vector.

        Parameters of neuron ``i`` only receive the gradient of neuron ``i``'s
        own term; the vector is aligned with ``theta``.
        """
        return log_prob_grad(rec.spikes, rec.potentials, rec.syn, rec.fb * self._fb_mask, self._mask_flat)


def log_prob_grad(s, o, syn, fb, mask_flat=None) -> np.ndarray:
    """``d log p(s | o) / d theta`` with ``(s - sigmoid(o))`` times each feature.

    ``syn`` is ``(S, K)``, ``fb`` the neurons' feedback traces. Output layout
    is ``[W, w, gamma]`` as in :class:`SnnModel`.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    r = s - spike_probability(np.atleast_1d(o))
    g_syn = r[:, None] * np.asarray(syn).ravel()[None, :]
    if mask_flat is not None:
        g_syn *= mask_flat
    return np.concatenate([g_syn.ravel(), r * np.atleast_1d(fb), r])


def sequence_log_prob(model: SnnModel, spikes, exogeneous) -> float:
    """``sum_t sum_i log p(s_i(t) | o_i(t))`` of a realized spike history.

    ``spikes`` is ``(N, T)``, ``exogeneous`` is ``(d_in, T)``. The model's own
    trace state is left untouched.
    """
    spikes = np.asarray(spikes.data if hasattr(spikes, "data") else spikes, dtype=float)
    exo = np.asarray(exogeneous.data if hasattr(exogeneous, "data") else exogeneous, dtype=float)
    topo = model.topology
    if exo.ndim == 1:
        exo = exo.reshape(topo.num_inputs, -1)
    if spikes.shape[0] != topo.num_neurons or exo.shape[0] != topo.num_inputs or spikes.shape[1] != exo.shape[1]:
        raise DimensionError(
            f"spikes {spikes.shape} / inputs {exo.shape} do not match topology "
            f"({topo.num_neurons} neurons, {topo.num_inputs} inputs)"
        )
    saved = model.traces
    model.traces = TraceState(model.filters, topo.num_signals)
    try:
        total = 0.0
        for t in range(spikes.shape[1]):
            rec = model.step(exo[:, t], forced=spikes[:, t])
            total += float(rec.log_probs.sum())
    finally:
        model.traces = saved
    return total


# -- checkpoints --------------------------------------------------------------


def model_to_dict(model: SnnModel) -> dict:
    neurons = []
    for i in range(model.topology.num_neurons):
        p = model.neuron_params(i)
        neurons.append({"synaptic": p["synaptic"].ravel().tolist(), "feedback": p["feedback"], "bias": p["bias"]})
    filters = model.filter_config
    if filters is None:
        filters = {
            "type": "explicit",
            "synaptic": model.filters.synaptic.tolist(),
            "feedback": model.filters.feedback.tolist(),
        }
    return {
        "topology": model.topology.to_dict(),
        "filters": filters,
        "neurons": neurons,
    }


def model_from_dict(d: dict) -> SnnModel:
    topo = Topology.from_dict(d["topology"])
    cfg = d["filters"]
    model = SnnModel(topo, filter_bank_from_config(cfg), filter_config=cfg)
    K = model.filters.num_filters
    if len(d["neurons"]) != topo.num_neurons:
        raise DimensionError("checkpoint neuron count does not match topology")
    for i, nd in enumerate(d["neurons"]):
        pre = np.flatnonzero(topo.presynaptic[i])
        syn = np.asarray(nd["synaptic"], dtype=float)
        if syn.size != pre.size * K:
            raise DimensionError(f"neuron {i}: expected {pre.size * K} synaptic weights, got {syn.size}")
        model.W[i, pre] = syn.reshape(pre.size, K)
        model.w[i] = nd["feedback"]
        model.gamma[i] = nd["bias"]
    return model


def save_checkpoint(path, encoder: SnnModel | None, decoder: SnnModel, meta: dict | None = None) -> None:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "encoder": None if encoder is None else model_to_dict(encoder),
        "decoder": model_to_dict(decoder),
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


class CheckpointError(ValueError):
    pass


def load_checkpoint(path) -> tuple[SnnModel | None, SnnModel, dict]:
    """Inverse of :func:`save_checkpoint`; malformed files raise :class:`CheckpointError`."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict) or doc.get("format_version") != CHECKPOINT_VERSION:
        version = doc.get("format_version") if isinstance(doc, dict) else None
        raise CheckpointError(f"{path}: unsupported checkpoint version {version!r}")
    try:
        enc = None if doc["encoder"] is None else model_from_dict(doc["encoder"])
        dec = model_from_dict(doc["decoder"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed model record ({exc})") from None
    return enc, dec, doc.get("meta", {})
