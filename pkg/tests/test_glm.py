import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikejscc.glm import (
    CheckpointError,
    ProbabilityClampWarning,
    SnnModel,
    Topology,
    load_checkpoint,
    log_loss,
    log_prob_grad,
    save_checkpoint,
    sequence_log_prob,
    spike_probability,
)
from spikejscc.spikes import DimensionError, FilterBank, raised_cosine_bank

from helpers import random_model


def single_synapse_model(w, trace_filter, w_fb, gamma):
    """One input feeding one neuron with K=1."""
    topo = Topology(1, 0, 1, np.array([[True, False]]))
    model = SnnModel(topo, FilterBank([trace_filter], [1.0] + [0.0] * (len(trace_filter) - 1)))
    model.W[0, 0, 0] = w
    model.w[0] = w_fb
    model.gamma[0] = gamma
    return model


class TestPotential:
    def test_bias_only(self):
        model = SnnModel(Topology.fully_connected(2, 1, 1), raised_cosine_bank())
        model.gamma[:] = -2.0
        np.testing.assert_array_equal(model.potentials(), [-2.0, -2.0])

    def test_one_synapse(self):
        model = single_synapse_model(2.0, [0.5], 0.0, -1.0)
        model.step([1], forced=[0])
        assert model.potentials()[0] == 0.0

    def test_linearity(self):
        model = random_model(np.random.default_rng(0), 2, 2, 1)
        rng = np.random.default_rng(1)
        for _ in range(3):
            model.step(rng.integers(0, 2, 2), rng=rng)
        o = model.potentials()
        model.theta *= 2
        np.testing.assert_allclose(model.potentials(), 2 * o)

    def test_causality_future_inputs(self):
        rng = np.random.default_rng(3)
        model = random_model(rng, 3, 2, 2)
        u = rng.integers(0, 2, (3, 8))
        spikes = rng.integers(0, 2, (4, 8))
        pots = []
        for variant in range(2):
            uu = u.copy()
            if variant:
                uu[:, 5:] = 1 - uu[:, 5:]
            model.reset_state()
            for t in range(6):
                rec = model.step(uu[:, t], forced=spikes[:, t])
            pots.append(rec.potentials)
        np.testing.assert_array_equal(pots[0], pots[1])


class TestProbabilities:
    def test_sigmoid_values(self):
        assert spike_probability(0.0) == 0.5
        assert spike_probability(2.0) == pytest.approx(0.8807970779778823, abs=1e-15)
        assert spike_probability(1e4) == 1.0
        assert spike_probability(-1e4) == 0.0

    def test_log_loss_values(self):
        assert log_loss(1, 0.5) == pytest.approx(math.log(2))
        assert log_loss(1, 1 - 1e-12) == pytest.approx(0.0, abs=1e-11)

    @given(st.floats(1e-6, 1 - 1e-6))
    def test_log_loss_symmetry(self, p):
        # 1 - p itself rounds with relative error up to ~1e-10 near p = 1e-6
        assert log_loss(1, p) == pytest.approx(log_loss(0, 1 - p), rel=1e-9)

    def test_clamp_warns(self):
        with pytest.warns(ProbabilityClampWarning):
            val = log_loss(1, 0.0)
        assert val == pytest.approx(-math.log(1e-12))


class TestStep:
    def test_zero_params_rate(self):
        model = SnnModel(Topology.fully_connected(1, 2, 1), raised_cosine_bank())
        rng = np.random.default_rng(0)
        spikes = np.array([model.step([0], rng=rng).spikes for _ in range(10_000)])
        assert abs(spikes.mean() - 0.5) < 0.02

    def test_saturated_silence(self):
        model = SnnModel(Topology.fully_connected(1, 2, 1), raised_cosine_bank())
        model.gamma[:] = -1e3
        rng = np.random.default_rng(0)
        assert sum(model.step([0], rng=rng).spikes.sum() for _ in range(200)) == 0

    def test_clamp_ignores_rng(self):
        model = random_model(np.random.default_rng(1), 2, 3, 2)
        for seed in range(5):
            rec = model.step([1, 0], clamp=[1, 0], rng=np.random.default_rng(seed))
            np.testing.assert_array_equal(rec.spikes[model.topology.outputs], [1, 0])

    def test_clamp_length(self):
        model = random_model(np.random.default_rng(1), 2, 3, 2)
        with pytest.raises(DimensionError):
            model.step([1, 0], clamp=[1], rng=np.random.default_rng(0))

    def test_forced_not_mutated_by_clamp(self):
        model = random_model(np.random.default_rng(1), 1, 1, 1)
        forced = np.array([1.0, 1.0])
        model.step([0], clamp=[0], forced=forced)
        np.testing.assert_array_equal(forced, [1.0, 1.0])

    def test_hidden_frequencies_match_sigmoid(self):
        # with outputs clamped, each hidden neuron fires at sigma(o) given the history
        model = random_model(np.random.default_rng(4), 1, 2, 1, scale=1.0)
        n = 10_000
        rng = np.random.default_rng(5)
        model.reset_state()
        model.step([1], clamp=[1], forced=[1, 0, 1])
        snap = model.traces.copy()
        probs = spike_probability(model.potentials())[:2]
        counts = np.zeros(2)
        for _ in range(n):
            model.traces = snap.copy()
            counts += model.step([0], clamp=[0], rng=rng).spikes[:2]
        se = np.sqrt(probs * (1 - probs) / n)
        assert np.all(np.abs(counts / n - probs) <= 3 * se)


class TestGradients:
    def test_bias_gradient_half(self):
        g = log_prob_grad([1.0], [0.0], np.zeros((1, 1)), [0.0])
        assert g[-1] == 0.5

    def test_zero_traces(self):
        g = log_prob_grad([0.0, 1.0], [0.3, -0.2], np.zeros((3, 2)), [0.0, 0.0])
        np.testing.assert_array_equal(g[:-2][:12], 0.0)
        np.testing.assert_allclose(g[-2:], [0 - spike_probability(0.3), 1 - spike_probability(-0.2)])

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        model = random_model(rng, 2, 1, 1, scale=1.0)
        T = 4
        spikes = rng.integers(0, 2, (2, T)).astype(float)
        exo = rng.integers(0, 2, (2, T)).astype(float)
        model.reset_state()
        grad = np.zeros(model.num_params)
        for t in range(T):
            grad += model.log_prob_grad(model.step(exo[:, t], forced=spikes[:, t]))
        h = 1e-6
        theta0 = model.theta.copy()
        for idx in np.flatnonzero(model.param_mask):
            model.theta[idx] = theta0[idx] + h
            up = sequence_log_prob(model, spikes, exo)
            model.theta[idx] = theta0[idx] - h
            down = sequence_log_prob(model, spikes, exo)
            model.theta[idx] = theta0[idx]
            fd = (up - down) / (2 * h)
            assert abs(grad[idx] - fd) <= 1e-5 * max(1.0, abs(fd))

    def test_absent_connections_get_no_gradient(self):
        model = random_model(np.random.default_rng(0), 2, 1, 1)
        rec = model.step([1, 1], forced=[1, 1])
        rec = model.step([1, 1], forced=[1, 1])
        g = model.log_prob_grad(rec)
        assert np.all(g[model.param_mask == 0] == 0)


class TestSequenceLogProb:
    def test_fair_coins(self):
        model = SnnModel(Topology.fully_connected(2, 1, 2), raised_cosine_bank())
        val = sequence_log_prob(model, np.array([[1], [0], [1]]), np.array([[0], [1]]))
        assert val == pytest.approx(3 * math.log(0.5))

    def test_normalizes(self):
        rng = np.random.default_rng(9)
        model = random_model(rng, 1, 1, 1, scale=2.0)
        exo = rng.integers(0, 2, (1, 5))
        total = 0.0
        for bits in itertools.product((0, 1), repeat=10):
            spikes = np.array(bits, dtype=float).reshape(5, 2).T
            total += math.exp(sequence_log_prob(model, spikes, exo))
        assert abs(total - 1.0) < 1e-10

    def test_leaves_state_untouched(self):
        model = random_model(np.random.default_rng(0), 1, 1, 1)
        model.step([1], forced=[1, 0])
        before = model.traces.synaptic.copy()
        sequence_log_prob(model, np.ones((2, 3)), np.ones((1, 3)))
        np.testing.assert_array_equal(model.traces.synaptic, before)

    def test_shape_mismatch(self):
        model = random_model(np.random.default_rng(0), 1, 1, 1)
        with pytest.raises(DimensionError):
            sequence_log_prob(model, np.ones((3, 3)), np.ones((1, 3)))


class TestTopology:
    def test_partition(self):
        topo = Topology.fully_connected(3, 2, 2)
        assert set(topo.hidden) | set(topo.outputs) == set(range(4))
        assert not set(topo.hidden) & set(topo.outputs)

    def test_no_self_synapse(self):
        topo = Topology.fully_connected(2, 2, 1)
        for i in range(3):
            assert not topo.presynaptic[i, 2 + i]

    def test_without_output_recurrence(self):
        topo = Topology.fully_connected(2, 2, 2, output_recurrence=False)
        assert not topo.presynaptic[:, 4:].any()
        assert not topo.feedback[2:].any() and topo.feedback[:2].all()

    def test_param_count(self):
        model = SnnModel(Topology.fully_connected(3, 1, 1), raised_cosine_bank(2, 5))
        p = model.neuron_params(0)
        assert p["synaptic"].size + 2 == 4 * 2 + 2

    def test_dict_round_trip(self):
        topo = Topology.fully_connected(3, 2, 1, output_recurrence=False)
        assert Topology.from_dict(json.loads(json.dumps(topo.to_dict()))).same_as(topo)


class TestCheckpoint:
    def test_bit_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        enc = SnnModel(Topology.fully_connected(4, 1, 3), raised_cosine_bank(), rng,
                       filter_config={"type": "raised_cosine", "num_filters": 2, "window": 10})
        dec = random_model(rng, 3, 2, 2)
        path = tmp_path / "ck.json"
        save_checkpoint(path, enc, dec, {"note": 1})
        enc2, dec2, meta = load_checkpoint(path)
        assert np.array_equal(enc.theta, enc2.theta) and np.array_equal(dec.theta, dec2.theta)
        assert enc2.topology.same_as(enc.topology) and dec2.topology.same_as(dec.topology)
        np.testing.assert_array_equal(dec2.filters.synaptic, dec.filters.synaptic)
        assert meta == {"note": 1}

    def test_decoder_only(self, tmp_path):
        dec = random_model(np.random.default_rng(1), 2, 1, 2)
        save_checkpoint(tmp_path / "c.json", None, dec)
        enc, dec2, _ = load_checkpoint(tmp_path / "c.json")
        assert enc is None and np.array_equal(dec.theta, dec2.theta)

    def test_version_check(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"format_version": 99}))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_malformed(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
