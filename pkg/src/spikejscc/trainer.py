"""Online end-to-end training of encoder and decoder through a stochastic channel.

The objective is the expected summed output loss

    L(theta) = E[ sum_t sum_{i in V} bce(v_i(t), sigmoid(o_i(t))) ]

with the expectation over encoder spikes, channel outputs and decoder hidden
spikes (decoder outputs are clamped to the targets). Observed output neurons
descend the loss directly; every sampled neuron uses a score-function term
``(l_t - b) * e`` with ``e`` a running average of ``grad log p`` of its own
realized spikes. All updates are ``theta <- theta - eta * delta``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import GaussianQuantizedChannel
from .glm import SnnModel, loss_from_potential

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Non-finite quantity encountered during training."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message if iteration is None else f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class Hyperparams:
    """Learning rate and smoothing constants.

    ``eligibility`` selects how sampled neurons' eligibility traces combine
    score terms over time: ``"geometric"`` is the ``kappa``-weighted moving
    average, ``"accumulate"`` is the plain running sum (unbiased estimator).

    ``baseline_timing`` picks which statistics the baseline reads. With
    ``"lagged"`` the running averages still absorb every step, but the value
    applied during an example is the ratio reached at its start, so it never
    depends on the trajectory it corrects. ``"per_step"`` keeps separate
    averages for each step index ``t`` and applies, at step ``t``, the ratio
    over earlier examples' step ``t``; it is equally trajectory-independent
    and follows how the loss varies along an example. ``"online"`` applies
    the ratio updated at every step, current step included.
    """

    eta: float = 0.05
    eta_encoder: float | None = None
    kappa: float = 0.2
    kappa2: float = 0.2
    alpha: float = 0.9
    eps: float = 1e-12
    eligibility: str = "geometric"
    baseline: bool = True
    baseline_timing: str = "lagged"
    reset_per_example: bool = True

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        if self.eta_encoder is not None and not self.eta_encoder >= 0:
            raise ValueError(f"eta_encoder must be nonnegative, got {self.eta_encoder}")
        for name in ("kappa", "kappa2", "alpha"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")
        if self.eligibility not in ("geometric", "accumulate"):
            raise ValueError(f"unknown eligibility mode {self.eligibility!r}")
        if self.baseline_timing not in ("lagged", "per_step", "online"):
            raise ValueError(f"unknown baseline timing {self.baseline_timing!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    def learning_rate(self, network: str) -> float:
        if network == "encoder" and self.eta_encoder is not None:
            return self.eta_encoder
        return self.eta


# -- elementary recursions -------------------------------------------------------


def learning_signal_update(prev: float, losses, kappa: float) -> float:
    """``l_t = kappa * l_{t-1} + (1 - kappa) * sum(losses)``."""
    return kappa * prev + (1.0 - kappa) * float(np.sum(losses))


def eligibility_update(e_prev, grad, kappa: float, accumulate=None):
    """``e_t = kappa * e_{t-1} + (1 - kappa) * grad``.

    Entries selected by the boolean ``accumulate`` mask are summed instead:
    ``e_t = e_{t-1} + grad``.
    """
    e_prev = np.asarray(e_prev, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if e_prev.shape != grad.shape:
        raise ValueError(f"eligibility shape {e_prev.shape} does not match gradient {grad.shape}")
    out = kappa * e_prev + (1.0 - kappa) * grad
    if accumulate is not None:
        out = np.where(accumulate, e_prev + grad, out)
    return out


@dataclass
class BaselineStats:
    """Running averages ``<e^2>`` and ``<l e^2>`` per parameter."""

    mean_e2: np.ndarray
    mean_le2: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "BaselineStats":
        return cls(np.zeros(n), np.zeros(n))


def baseline_ratio(stats: BaselineStats, eps: float = 0.0) -> np.ndarray:
    """``<l e^2> / <e^2>``; 0 where ``<e^2> <= eps``."""
    b = np.zeros_like(stats.mean_e2)
    ok = stats.mean_e2 > eps
    np.divide(stats.mean_le2, stats.mean_e2, out=b, where=ok)
    return b


def baseline_update(stats: BaselineStats, ell: float, e, alpha: float, eps: float = 0.0) -> np.ndarray:
    """Update ``stats`` in place and return the new :func:`baseline_ratio`."""
    e2 = np.square(e)
    stats.mean_e2 = alpha * stats.mean_e2 + (1.0 - alpha) * e2
    stats.mean_le2 = alpha * stats.mean_le2 + (1.0 - alpha) * ell * e2
    return baseline_ratio(stats, eps)


def delta_update(delta_prev, ell: float, b, e, observed, kappa2: float):
    """Smoothed update direction.

    Sampled neurons: ``kappa2 * delta + (1 - kappa2) * (l - b) * e``.
    Observed outputs: ``-e``, the loss gradient, since ``e`` tracks
    ``grad log p`` and the loss is ``-log p``.
    """
    stochastic = kappa2 * np.asarray(delta_prev) + (1.0 - kappa2) * (ell - np.asarray(b)) * np.asarray(e)
    return np.where(observed, -np.asarray(e), stochastic)


def apply_update(theta: np.ndarray, delta, eta: float, iteration: int | None = None) -> np.ndarray:
    """In-place ``theta -= eta * delta``."""
    delta = np.asarray(delta)
    if delta.shape != theta.shape:
        raise ValueError(f"update shape {delta.shape} does not match parameters {theta.shape}")
    if not np.all(np.isfinite(delta)):
        bad = np.flatnonzero(~np.isfinite(delta))
        raise DivergenceError(
            f"non-finite update in {bad.size} coordinates (first index {bad[0]})", iteration
        )
    if eta != 0.0:
        theta -= eta * delta
    return theta


# -- trainer state -----------------------------------------------------------------


@dataclass
class ModelState:
    """Per-parameter trainer arrays for one network."""

    observed: np.ndarray
    e: np.ndarray
    delta: np.ndarray
    baseline: BaselineStats
    b: np.ndarray
    step_baselines: list = field(default_factory=list)

    @classmethod
    def for_model(cls, model: SnnModel, observed_neurons) -> "ModelState":
        n = model.num_params
        observed = np.isin(model.param_owner, np.asarray(observed_neurons, dtype=int))
        return cls(observed, np.zeros(n), np.zeros(n), BaselineStats.zeros(n), np.zeros(n))

    def reset_episode(self) -> None:
        self.e[:] = 0.0
        self.delta[:] = 0.0

    def step_baseline(self, t: int) -> BaselineStats:
        """Statistics kept for step ``t`` of an example, created on first use."""
        while len(self.step_baselines) <= t:
            self.step_baselines.append(BaselineStats.zeros(self.e.size))
        return self.step_baselines[t]


@dataclass
class TrainerState:
    """Learning signal plus one :class:`ModelState` per trained network."""

    learning_signal: float = 0.0
    models: dict = field(default_factory=dict)

    @classmethod
    def create(cls, encoder: SnnModel | None, decoder: SnnModel) -> "TrainerState":
        st = cls()
        if encoder is not None:
            st.models["encoder"] = ModelState.for_model(encoder, [])
        st.models["decoder"] = ModelState.for_model(decoder, decoder.topology.outputs)
        return st

    def reset_episode(self) -> None:
        self.learning_signal = 0.0
        for ms in self.models.values():
            ms.reset_episode()


@dataclass
class ExampleResult:
    losses: np.ndarray
    updates: dict | None = None
    log_prob: float = 0.0

    @property
    def total_loss(self) -> float:
        return float(self.losses.sum())


def _as_array(x) -> np.ndarray:
    return np.asarray(x.data if hasattr(x, "data") and not isinstance(x, np.ndarray) else x, dtype=float)


def train_example(
    encoder: SnnModel | None,
    channel,
    decoder: SnnModel,
    u,
    v,
    hp: Hyperparams,
    state: TrainerState,
    rng=None,
    forced: dict | None = None,
    collect_updates: bool = False,
    iteration: int | None = None,
) -> ExampleResult:
    """One pass of the online rule over ``t = 1..T``.

    At every step the encoder samples, the channel transmits, the decoder
    samples its hidden neurons with outputs clamped to ``v``, and every
    parameter is updated. ``encoder=None`` transmits ``u`` directly.

    ``forced`` replays a given trajectory (keys ``encoder``, ``y``, ``decoder``
    holding ``(n, T)`` arrays) instead of sampling. ``collect_updates`` sums
    each model's ``delta`` over the example; with ``eta = 0`` that sum is the
    update direction at fixed parameters. The returned ``log_prob`` is the log
    probability of the sampled variables (channel included when it exposes
    ``log_prob``).
    """
    u = _as_array(u)
    v = _as_array(v)
    T = u.shape[1]
    d_x = u.shape[0] if encoder is None else encoder.topology.num_outputs
    if v.shape != (decoder.topology.num_outputs, T):
        raise ValueError(f"target shape {v.shape} != ({decoder.topology.num_outputs}, {T})")
    if encoder is not None and u.shape[0] != encoder.topology.num_inputs:
        raise ValueError(f"input has {u.shape[0]} signals, encoder expects {encoder.topology.num_inputs}")
    if channel is not None and channel.dim != d_x:
        raise ValueError(f"channel dimension {channel.dim} != d_x = {d_x}")
    if decoder.topology.num_inputs != d_x:
        raise ValueError(f"decoder expects {decoder.topology.num_inputs} inputs, channel carries {d_x}")

    if hp.reset_per_example:
        state.reset_episode()
    lagged = hp.baseline and hp.baseline_timing == "lagged"
    if lagged:
        for ms in state.models.values():
            ms.b = baseline_ratio(ms.baseline, hp.eps)
    models = {"decoder": decoder} if encoder is None else {"encoder": encoder, "decoder": decoder}
    for m in models.values():
        m.reset_state()
    if channel is not None:
        channel.reset()
    accumulate = {
        name: (~state.models[name].observed if hp.eligibility == "accumulate" else None) for name in models
    }
    sums = {name: np.zeros(m.num_params) for name, m in models.items()} if collect_updates else None
    losses = np.zeros(T)
    logp = 0.0
    out_idx = decoder.topology.outputs
    hid_idx = decoder.topology.hidden

    for t in range(T):
        recs = {}
        if encoder is None:
            x_t = u[:, t]
        else:
            rec = encoder.step(u[:, t], rng=rng, forced=None if forced is None else forced["encoder"][:, t])
            recs["encoder"] = rec
            logp += float(rec.log_probs.sum())
            x_t = rec.spikes[encoder.topology.outputs]
        if forced is not None:
            y_t = np.asarray(forced["y"][:, t], dtype=float)
            if channel is not None:
                channel.x_history.append(np.asarray(x_t, dtype=float))
                channel.y_history.append(y_t)
        elif channel is None:
            y_t = x_t
        else:
            y_t = channel.transmit(x_t, rng)
        if channel is not None and hasattr(channel, "log_prob"):
            logp += channel.log_prob(y_t, x_t)
        rec = decoder.step(
            y_t, clamp=v[:, t], rng=rng, forced=None if forced is None else forced["decoder"][:, t]
        )
        recs["decoder"] = rec
        logp += float(rec.log_probs[hid_idx].sum())

        step_loss = loss_from_potential(v[:, t], rec.potentials[out_idx])
        losses[t] = float(step_loss.sum())
        ell = learning_signal_update(state.learning_signal, step_loss, hp.kappa)
        state.learning_signal = ell

        for name, m in models.items():
            ms = state.models[name]
            g = m.log_prob_grad(recs[name])
            ms.e = eligibility_update(ms.e, g, hp.kappa, accumulate[name])
            if hp.baseline and hp.baseline_timing == "per_step":
                stats = ms.step_baseline(t)
                ms.b = baseline_ratio(stats, hp.eps)
                baseline_update(stats, ell, ms.e, hp.alpha, hp.eps)
            elif hp.baseline:
                b_now = baseline_update(ms.baseline, ell, ms.e, hp.alpha, hp.eps)
                if not lagged:
                    ms.b = b_now
            ms.delta = delta_update(ms.delta, ell, ms.b if hp.baseline else 0.0, ms.e, ms.observed, hp.kappa2)
            if sums is not None:
                sums[name] += ms.delta
            apply_update(m.theta, ms.delta, hp.learning_rate(name), iteration)

    if not np.all(np.isfinite(losses)):
        raise DivergenceError("non-finite loss", iteration)
    return ExampleResult(losses, sums, logp)


def trajectory_score_estimate(encoder, channel, decoder, u, v, forced) -> tuple[dict, float, float]:
    """Full-trajectory score-function estimate at fixed parameters.

    Returns per-model ``grad l_theta + l_theta * sum_t grad log p`` of the
    sampled neurons, the trajectory loss ``l_theta`` and the trajectory log
    probability. Its expectation is the exact gradient of the bound.
    """
    u = _as_array(u)
    v = _as_array(v)
    T = u.shape[1]
    models = {"decoder": decoder} if encoder is None else {"encoder": encoder, "decoder": decoder}
    for m in models.values():
        m.reset_state()
    score = {name: np.zeros(m.num_params) for name, m in models.items()}
    direct = {name: np.zeros(m.num_params) for name, m in models.items()}
    dec_obs = np.isin(decoder.param_owner, decoder.topology.outputs)
    total_loss = 0.0
    logp = 0.0
    for t in range(T):
        if encoder is None:
            x_t = u[:, t]
        else:
            rec = encoder.step(u[:, t], forced=forced["encoder"][:, t])
            score["encoder"] += encoder.log_prob_grad(rec)
            logp += float(rec.log_probs.sum())
            x_t = rec.spikes[encoder.topology.outputs]
        y_t = np.asarray(forced["y"][:, t], dtype=float)
        if channel is not None:
            logp += channel.log_prob(y_t, x_t)
        rec = decoder.step(y_t, clamp=v[:, t], forced=forced["decoder"][:, t])
        g = decoder.log_prob_grad(rec)
        score["decoder"] += np.where(dec_obs, 0.0, g)
        direct["decoder"] -= np.where(dec_obs, g, 0.0)
        logp += float(rec.log_probs[decoder.topology.hidden].sum())
        total_loss += float(loss_from_potential(v[:, t], rec.potentials[decoder.topology.outputs]).sum())
    est = {name: direct[name] + total_loss * score[name] for name in models}
    return est, total_loss, logp


def make_channel(dim: int, sigma2: float, threshold: float = 0.5) -> GaussianQuantizedChannel:
    return GaussianQuantizedChannel(dim, sigma2, threshold)
