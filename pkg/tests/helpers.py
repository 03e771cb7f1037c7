"""Small builders shared by the test modules."""

from spikejscc.glm import SnnModel, Topology
from spikejscc.spikes import raised_cosine_bank


def random_model(rng, num_inputs, num_hidden, num_outputs, scale=0.5, output_recurrence=True, K=2, W=4):
    """Fully connected network with Gaussian weights and biases of size ``scale``."""
    topo = Topology.fully_connected(num_inputs, num_hidden, num_outputs, output_recurrence)
    model = SnnModel(
        topo, raised_cosine_bank(K, W), filter_config={"type": "raised_cosine", "num_filters": K, "window": W}
    )
    model.set_theta(rng.normal(0.0, scale, model.num_params))
    return model
