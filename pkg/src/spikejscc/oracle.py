"""Exact expectation over every stochastic trajectory of a tiny system.

Used as ground truth for the training rule: the bound ``L(theta)`` and its
gradient are obtained by summing over all assignments of encoder spikes,
channel outputs and decoder hidden spikes, each weighted by its exact
probability.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .glm import SnnModel, loss_from_potential

MAX_VARIABLES = 20


class OracleTooLarge(ValueError):
    pass


@dataclass
class Trajectory:
    forced: dict
    prob: float
    loss: float


@dataclass
class OracleResult:
    loss: float
    grads: dict
    total_prob: float
    neg_log_likelihood: float
    trajectories: list


def _count_variables(encoder, channel, decoder, T: int, noisy: bool) -> dict:
    d_x = decoder.topology.num_inputs
    return {
        "encoder": 0 if encoder is None else encoder.topology.num_neurons * T,
        "channel": d_x * T if noisy else 0,
        "decoder_hidden": decoder.topology.num_hidden * T,
    }


def _bits(n: int):
    if n == 0:
        yield np.zeros(0)
        return
    for combo in itertools.product((0.0, 1.0), repeat=n):
        yield np.array(combo)


def exact_gradient_oracle(
    encoder: SnnModel | None,
    channel,
    decoder: SnnModel,
    u,
    v,
    max_variables: int = MAX_VARIABLES,
    keep_trajectories: bool = False,
) -> OracleResult:
    """Enumerate all trajectories and differentiate the weighted loss exactly.

    ``grad L = sum_traj [P * grad l + l * grad P]`` with
    ``grad P = P * sum_t grad log p`` over the sampled neurons. ``channel`` may
    be ``None`` (identity) or expose ``flip_probability`` and ``log_prob``.
    """
    u = np.asarray(u.data if hasattr(u, "data") and not isinstance(u, np.ndarray) else u, dtype=float)
    v = np.asarray(v.data if hasattr(v, "data") and not isinstance(v, np.ndarray) else v, dtype=float)
    T = u.shape[1]
    noisy = channel is not None and channel.flip_probability(0) > 0.0
    sizes = _count_variables(encoder, channel, decoder, T, noisy)
    total_vars = sum(sizes.values())
    if total_vars > max_variables:
        raise OracleTooLarge(
            f"{total_vars} binary variables ({', '.join(f'{k}={n}' for k, n in sizes.items())}) "
            f"exceed the enumeration limit of {max_variables}"
        )

    n_enc = 0 if encoder is None else encoder.topology.num_neurons
    d_x = decoder.topology.num_inputs
    n_hid = decoder.topology.num_hidden
    n_dec = decoder.topology.num_neurons
    out = decoder.topology.outputs
    dec_obs = np.isin(decoder.param_owner, out)
    models = {"decoder": decoder} if encoder is None else {"encoder": encoder, "decoder": decoder}
    grads = {name: np.zeros(m.num_params) for name, m in models.items()}
    loss_mean = 0.0
    total_prob = 0.0
    marginal = 0.0
    kept = []

    for enc_bits in _bits(sizes["encoder"]):
        enc_spikes = enc_bits.reshape(T, n_enc).T if n_enc else np.zeros((0, T))
        x = u if encoder is None else enc_spikes[encoder.topology.outputs]
        y_choices = _bits(sizes["channel"]) if noisy else [None]
        for y_bits in y_choices:
            y = x if y_bits is None else y_bits.reshape(T, d_x).T
            for h_bits in _bits(sizes["decoder_hidden"]):
                dec_spikes = np.zeros((n_dec, T))
                dec_spikes[:n_hid] = h_bits.reshape(T, n_hid).T if n_hid else 0.0
                dec_spikes[out] = v
                logp = 0.0
                score = {name: np.zeros(m.num_params) for name, m in models.items()}
                dloss = np.zeros(decoder.num_params)
                loss = 0.0
                for m in models.values():
                    m.reset_state()
                for t in range(T):
                    if encoder is not None:
                        rec = encoder.step(u[:, t], forced=enc_spikes[:, t])
                        logp += float(rec.log_probs.sum())
                        score["encoder"] += encoder.log_prob_grad(rec)
                    if noisy:
                        logp += channel.log_prob(y[:, t], x[:, t])
                    rec = decoder.step(y[:, t], forced=dec_spikes[:, t])
                    g = decoder.log_prob_grad(rec)
                    logp += float(rec.log_probs[:n_hid].sum())
                    score["decoder"] += np.where(dec_obs, 0.0, g)
                    dloss -= np.where(dec_obs, g, 0.0)
                    loss += float(loss_from_potential(v[:, t], rec.potentials[out]).sum())
                p = math.exp(logp)
                total_prob += p
                loss_mean += p * loss
                marginal += p * math.exp(-loss)
                for name in models:
                    grads[name] += p * loss * score[name]
                grads["decoder"] += p * dloss
                if keep_trajectories:
                    kept.append(
                        Trajectory({"encoder": enc_spikes, "y": np.asarray(y), "decoder": dec_spikes}, p, loss)
                    )
    for m in models.values():
        m.reset_state()
    return OracleResult(loss_mean, grads, total_prob, -math.log(marginal), kept)


def bound_value(encoder, channel, decoder, u, v, max_variables: int = MAX_VARIABLES) -> float:
    """``L(theta)`` alone, for finite-difference checks of the oracle gradient."""
    return exact_gradient_oracle(encoder, channel, decoder, u, v, max_variables).loss
