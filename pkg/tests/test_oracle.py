import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikejscc.channel import GaussianQuantizedChannel
from spikejscc.glm import loss_from_potential
from spikejscc.oracle import OracleTooLarge, bound_value, exact_gradient_oracle

from helpers import random_model


def tiny_system(seed, noisy=False, T=3):
    rng = np.random.default_rng(seed)
    enc = random_model(rng, 1, 0, 1, scale=1.0, W=3)
    dec = random_model(rng, 1, 1, 1, scale=1.0, W=3)
    u = rng.integers(0, 2, (1, T))
    v = rng.integers(0, 2, (1, T))
    ch = GaussianQuantizedChannel(1, 0.3) if noisy else None
    return enc, ch, dec, u, v


@pytest.mark.parametrize("noisy", [False, True])
def test_probabilities_sum_to_one(noisy):
    enc, ch, dec, u, v = tiny_system(0, noisy)
    res = exact_gradient_oracle(enc, ch, dec, u, v)
    assert abs(res.total_prob - 1.0) < 1e-10


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 1000), noisy=st.booleans())
def test_gradient_matches_finite_differences(seed, noisy):
    enc, ch, dec, u, v = tiny_system(seed, noisy, T=2)
    res = exact_gradient_oracle(enc, ch, dec, u, v)
    h = 1e-6
    for name, model in (("encoder", enc), ("decoder", dec)):
        theta0 = model.theta.copy()
        for idx in np.flatnonzero(model.param_mask):
            model.theta[idx] = theta0[idx] + h
            up = bound_value(enc, ch, dec, u, v)
            model.theta[idx] = theta0[idx] - h
            down = bound_value(enc, ch, dec, u, v)
            model.theta[idx] = theta0[idx]
            fd = (up - down) / (2 * h)
            assert abs(res.grads[name][idx] - fd) <= 1e-6 * max(1.0, abs(fd))


@pytest.mark.parametrize("seed", range(5))
def test_bound_direction(seed):
    enc, ch, dec, u, v = tiny_system(seed, noisy=seed % 2 == 1)
    res = exact_gradient_oracle(enc, ch, dec, u, v)
    assert res.loss >= res.neg_log_likelihood - 1e-12


def test_no_hidden_identity_channel_is_analytic():
    rng = np.random.default_rng(2)
    dec = random_model(rng, 2, 0, 2, scale=1.0)
    u = rng.integers(0, 2, (2, 4))
    v = rng.integers(0, 2, (2, 4))
    res = exact_gradient_oracle(None, None, dec, u, v)
    grad = np.zeros(dec.num_params)
    loss = 0.0
    dec.reset_state()
    for t in range(4):
        rec = dec.step(u[:, t], forced=v[:, t])
        grad -= dec.log_prob_grad(rec)
        loss += float(loss_from_potential(v[:, t], rec.potentials).sum())
    np.testing.assert_allclose(res.grads["decoder"], grad, atol=1e-14)
    assert res.loss == pytest.approx(loss)
    assert res.neg_log_likelihood == pytest.approx(loss)


def test_refuses_large_instances():
    rng = np.random.default_rng(0)
    enc = random_model(rng, 2, 1, 3)
    dec = random_model(rng, 3, 2, 1)
    u = np.zeros((2, 4))
    v = np.zeros((1, 4))
    with pytest.raises(OracleTooLarge, match="encoder=16"):
        exact_gradient_oracle(enc, None, dec, u, v)


def test_trajectory_probabilities_are_products():
    enc, ch, dec, u, v = tiny_system(4)
    res = exact_gradient_oracle(enc, ch, dec, u, v, keep_trajectories=True)
    assert len(res.trajectories) == 2 ** 6
    assert math.fsum(tr.prob for tr in res.trajectories) == pytest.approx(1.0, abs=1e-12)
    assert res.loss == pytest.approx(math.fsum(tr.prob * tr.loss for tr in res.trajectories))
