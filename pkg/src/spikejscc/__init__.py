"""Spiking-network joint source-channel coding simulator.

A GLM spiking encoder and decoder separated by a quantized Gaussian channel,
trained end to end with an online score-function rule.
"""

__version__ = "0.1.0"

from .channel import GaussianQuantizedChannel, quantize, sigma2_from_snr
from .config import ConfigError, ExperimentConfig, load_config
from .evaluation import evaluate, rate_decode, time_to_accuracy
from .glm import SnnModel, Topology, load_checkpoint, save_checkpoint
from .oracle import exact_gradient_oracle
from .spikes import FilterBank, LabeledDataset, SpikeTensor, generate_synthetic_dataset, raised_cosine_bank
from .trainer import DivergenceError, Hyperparams, TrainerState, train_example

__all__ = [
    "ConfigError",
    "DivergenceError",
    "ExperimentConfig",
    "FilterBank",
    "GaussianQuantizedChannel",
    "Hyperparams",
    "LabeledDataset",
    "SnnModel",
    "SpikeTensor",
    "Topology",
    "TrainerState",
    "__version__",
    "evaluate",
    "exact_gradient_oracle",
    "generate_synthetic_dataset",
    "load_checkpoint",
    "load_config",
    "quantize",
    "raised_cosine_bank",
    "rate_decode",
    "save_checkpoint",
    "sigma2_from_snr",
    "time_to_accuracy",
    "train_example",
]
