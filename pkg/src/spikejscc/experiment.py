"""Training runs, SNR sweeps, mismatch studies and the uncoded baseline."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import GaussianQuantizedChannel, sigma2_from_snr
from .config import ConfigError, ExperimentConfig
from .data import load_dataset, split_dataset, target_spike_train
from .evaluation import EvalResult, evaluate, transmit_densities
from .glm import SnnModel, Topology
from .spikes import LabeledDataset, filter_bank_from_config, generate_synthetic_dataset
from .trainer import DivergenceError, Hyperparams, TrainerState, train_example

log = logging.getLogger(__name__)

INIT_STREAM = 1
SAMPLE_STREAM = 2
ORDER_STREAM = 3


# -- setup -----------------------------------------------------------------------


@dataclass
class DataSplit:
    train: LabeledDataset
    test: LabeledDataset
    classes: list

    @property
    def class_index(self) -> dict:
        return {c: i for i, c in enumerate(self.classes)}


def data_seed(cfg: ExperimentConfig) -> int:
    return cfg.seed if cfg.dataset.seed is None else cfg.dataset.seed


def build_data(cfg: ExperimentConfig) -> DataSplit:
    ds = cfg.dataset
    seed = data_seed(cfg)
    if ds.source == "synthetic":
        full = generate_synthetic_dataset(
            ds.num_classes, ds.d_u, ds.num_steps, ds.spike_density, ds.jitter, seed, ds.per_class
        )
    else:
        full = load_dataset(ds.path)
        if ds.classes is not None:
            keep = [i for i, c in enumerate(full.labels) if c in set(ds.classes)]
            full = full.subset(keep)
        if len(full) == 0:
            raise ConfigError(f"dataset.path: {ds.path} holds no usable examples")
        if full.shape != (ds.d_u, ds.num_steps):
            raise ConfigError(
                f"dataset.d_u/num_steps: config says {(ds.d_u, ds.num_steps)}, file holds {full.shape}"
            )
    train, test = split_dataset(full, ds.train_fraction, seed)
    classes = full.classes()
    return DataSplit(train, test, classes)


def build_models(cfg: ExperimentConfig, num_classes: int) -> tuple[SnnModel | None, SnnModel]:
    rng = np.random.default_rng([cfg.seed, INIT_STREAM])
    fcfg = cfg.filter_dict()
    bank = filter_bank_from_config(fcfg)
    encoder = None
    if cfg.scheme == "jscc":
        encoder = SnnModel(
            Topology.fully_connected(cfg.d_u, cfg.topology.encoder_hidden, cfg.d_x),
            bank,
            rng,
            filter_config=fcfg,
            init_scale=cfg.topology.init_scale,
        )
    decoder = SnnModel(
        Topology.fully_connected(cfg.d_x, cfg.decoder_hidden, num_classes, cfg.topology.output_recurrence),
        bank,
        rng,
        filter_config=fcfg,
        init_scale=cfg.topology.init_scale if cfg.topology.decoder_init_scale is None else cfg.topology.decoder_init_scale,
    )
    return encoder, decoder


def hyperparams(cfg: ExperimentConfig) -> Hyperparams:
    return Hyperparams(**cfg.hyperparams.model_dump())


@dataclass
class Calibration:
    density: float
    sigma2: float | np.ndarray

    @property
    def sigma2_mean(self) -> float:
        return float(np.mean(self.sigma2))


def calibrate(encoder, dataset, snr_db, seed: int, per_example: bool = False) -> Calibration:
    """Noise power for ``snr_db`` from the spike density of transmitted signals."""
    if snr_db is None or math.isinf(snr_db):
        return Calibration(float("nan"), 0.0)
    dens = transmit_densities(encoder, dataset, seed)
    if per_example:
        return Calibration(float(dens.mean()), np.array([sigma2_from_snr(snr_db, d) for d in dens]))
    return Calibration(float(dens.mean()), sigma2_from_snr(snr_db, float(dens.mean())))


# -- training ------------------------------------------------------------------


@dataclass
class TrainResult:
    encoder: SnnModel | None
    decoder: SnnModel
    metrics: list = field(default_factory=list)
    final: EvalResult | None = None
    calibration: Calibration | None = None
    data: DataSplit | None = None


def _targets(data: DataSplit, cfg: ExperimentConfig) -> list:
    d_v = len(data.classes)
    idx = data.class_index
    cache = {c: target_spike_train(idx[c], d_v, cfg.dataset.num_steps, cfg.evaluation.target_rate) for c in data.classes}
    return [cache[label] for label in data.train.labels]


def train(cfg: ExperimentConfig, data: DataSplit | None = None, progress=None) -> TrainResult:
    """Run the online rule over shuffled training examples.

    Noise power is recalibrated at the start of every epoch from the current
    encoder's spike density on the training set, and once more with the final
    parameters before the last evaluation.
    """
    data = build_data(cfg) if data is None else data
    encoder, decoder = build_models(cfg, len(data.classes))
    hp = hyperparams(cfg)
    state = TrainerState.create(encoder, decoder)
    targets = _targets(data, cfg)
    rng = np.random.default_rng([cfg.seed, SAMPLE_STREAM])
    order_rng = np.random.default_rng([cfg.seed, ORDER_STREAM])
    ch = cfg.channel
    n_train = len(data.train)
    d_x = cfg.d_x
    per_example = ch.calibration == "per_example"

    def do_calibrate():
        return calibrate(encoder, data.train, ch.snr_db, cfg.seed, per_example)

    def record(iteration, calib, loss_sum, loss_count):
        test_cal = calib
        if per_example and not ch.noiseless:
            test_cal = calibrate(encoder, data.test, ch.snr_db, cfg.seed, True)
        res = evaluate(
            encoder, decoder, data.test, data.class_index, test_cal.sigma2, ch.threshold, cfg.seed,
            cfg.evaluation.repetitions,
        )
        rec = {
            "iteration": iteration,
            "train_loss": loss_sum / loss_count if loss_count else None,
            "test_accuracy": res.accuracy,
            "snr_db": ch.snr_db,
            "sigma2": calib.sigma2_mean,
            "rate": cfg.topology.rate,
            "seed": cfg.seed,
            "hyperparams": hp.to_dict(),
        }
        result.metrics.append(rec)
        if progress is not None:
            progress(rec)
        return res

    result = TrainResult(encoder, decoder, data=data)
    calib = None
    loss_sum, loss_count = 0.0, 0
    order = np.arange(n_train)
    if cfg.iterations == 0 or cfg.evaluation.initial:
        calib = do_calibrate()
        if cfg.iterations == 0:
            result.final = record(0, calib, 0.0, 0)
            result.calibration = calib
            return result
        record(0, calib, 0.0, 0)
    for it in range(cfg.iterations):
        if it % n_train == 0:
            order = order_rng.permutation(n_train)
            calib = do_calibrate()
        idx = int(order[it % n_train])
        sigma2 = calib.sigma2 if np.ndim(calib.sigma2) == 0 else calib.sigma2[idx]
        channel = GaussianQuantizedChannel(d_x, float(sigma2), ch.threshold)
        u, _ = data.train[idx]
        out = train_example(encoder, channel, decoder, u, targets[idx], hp, state, rng, iteration=it + 1)
        loss_sum += out.total_loss
        loss_count += 1
        done = it + 1
        if done == cfg.iterations:
            calib = do_calibrate()
            result.final = record(done, calib, loss_sum, loss_count)
            result.calibration = calib
        elif done % cfg.evaluation.every == 0:
            record(done, calib, loss_sum, loss_count)
            loss_sum, loss_count = 0.0, 0
    return result


def evaluate_trained(cfg: ExperimentConfig, encoder, decoder, data: DataSplit, snr_db=None, seed=None) -> tuple[EvalResult, Calibration]:
    """Accuracy of trained models at ``snr_db``, calibrated on the training set."""
    seed = cfg.seed if seed is None else seed
    per_example = cfg.channel.calibration == "per_example"
    calib = calibrate(encoder, data.train, snr_db, seed, per_example)
    test_cal = calibrate(encoder, data.test, snr_db, seed, True) if per_example and snr_db is not None else calib
    res = evaluate(
        encoder, decoder, data.test, data.class_index, test_cal.sigma2, cfg.channel.threshold, seed,
        cfg.evaluation.repetitions,
    )
    return res, calib


# -- sweeps ------------------------------------------------------------------------


def point_seed(seed: int, snr_db) -> int:
    """Seed of one sweep point, a function of the run seed and the SNR value."""
    tag = 0 if snr_db is None else int(round(float(snr_db) * 1000)) + 10**7
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0] % (2**31))


def _sweep_cfg(cfg: ExperimentConfig, snr_db) -> ExperimentConfig:
    updates = {"channel.snr_db": snr_db, "seed": point_seed(cfg.seed, snr_db)}
    if cfg.dataset.seed is None:
        updates["dataset.seed"] = cfg.seed
    return cfg.with_updates(**updates)


def _run_point(args) -> dict:
    cfg_dict, snr_db, test_snrs, out_dir = args
    cfg = _sweep_cfg(ExperimentConfig.model_validate(cfg_dict), snr_db)
    res = train(cfg)
    if out_dir is not None:
        from .outputs import save_training_run, write_manifest

        save_training_run(out_dir, cfg, res)
        write_manifest(out_dir, "train", cfg)
    row = {"snr_db": snr_db, "seed": cfg.seed, "test_accuracy": res.final.accuracy, "sigma2": res.calibration.sigma2_mean}
    if test_snrs is not None:
        accs = []
        for test_snr in test_snrs:
            if test_snr == snr_db:
                accs.append(res.final.accuracy)
            else:
                ev, _ = evaluate_trained(cfg, res.encoder, res.decoder, res.data, test_snr)
                accs.append(ev.accuracy)
        row["test_accuracies"] = accs
    return row


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _point_dirs(point_dirs, n):
    if point_dirs is None:
        return [None] * n
    point_dirs = list(point_dirs)
    if len(point_dirs) != n:
        raise ValueError(f"{len(point_dirs)} output directories for {n} SNR points")
    return point_dirs


def snr_sweep(cfg: ExperimentConfig, snr_list, jobs: int = 1, point_dirs=None) -> list[dict]:
    """Train and test one model per SNR point; ``None`` is the noiseless link.

    ``point_dirs`` optionally gives each point its own artifact directory.
    """
    snr_list = list(snr_list)
    if not snr_list:
        raise ValueError("SNR list is empty")
    dirs = _point_dirs(point_dirs, len(snr_list))
    return _map(_run_point, [(cfg.model_dump(), s, None, d) for s, d in zip(snr_list, dirs)], jobs)


def mismatch_matrix(cfg: ExperimentConfig, train_snrs, test_snrs, jobs: int = 1, point_dirs=None) -> np.ndarray:
    """Accuracy of a model trained at each train SNR, tested at each test SNR."""
    train_snrs, test_snrs = list(train_snrs), list(test_snrs)
    if not train_snrs or not test_snrs:
        raise ValueError("SNR lists must be nonempty")
    dirs = _point_dirs(point_dirs, len(train_snrs))
    rows = _map(_run_point, [(cfg.model_dump(), s, test_snrs, d) for s, d in zip(train_snrs, dirs)], jobs)
    return np.array([r["test_accuracies"] for r in rows])


def run_uncoded_baseline(cfg: ExperimentConfig, data: DataSplit | None = None) -> TrainResult:
    """Decoder-only training on the raw inputs sent with on-off keying."""
    if cfg.topology.rate != 1.0:
        raise ConfigError("topology.rate: uncoded transmission requires rate 1")
    if cfg.scheme != "uncoded":
        cfg = cfg.with_updates(scheme="uncoded")
    return train(cfg, data)


__all__ = [
    "DivergenceError",
    "build_data",
    "build_models",
    "calibrate",
    "evaluate_trained",
    "mismatch_matrix",
    "run_uncoded_baseline",
    "snr_sweep",
    "train",
]
