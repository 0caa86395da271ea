"""Accuracy metrics and the repeated random-split evaluation protocol.

Seed derivation (all integers):

* fold seed = ``master_seed + fold_index``
* per-purpose stream seed = first word of ``SeedSequence([fold_seed, stream_id])``
  with stream ids ``split=0, subsample=1, encode=2, mh=3, backprop=4``

The split and the spike encoding depend only on the fold seed, so every
trainer and every distortion level in a comparison sees the same partition
and the same spike trains for a given fold.
"""

import dataclasses
import functools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import data
from .backprop import BpConfig, bp_train
from .chip import chip_eval, open_chip
from .errors import AggregationError, ChipMHError
from .mh import MhConfig, mh_train
from .network import predict
from .neuron import LifConfig
from .weights import Topology

log = logging.getLogger(__name__)

STREAMS = {"split": 0, "subsample": 1, "encode": 2, "mh": 3, "backprop": 4}
TRAINERS = ("mh", "backprop")


def fold_seed(master_seed, fold_index):
    return master_seed + fold_index


def stream_seed(fold_seed, stream):
    return int(np.random.SeedSequence([fold_seed, STREAMS[stream]]).generate_state(1)[0])


@dataclass(frozen=True)
class FoldSetup:
    """What every trainer shares within one fold."""

    T: int = 10
    alpha: float = 0.9
    mu: float = 1.0
    train_fraction: float = 0.8
    normalization: str = "feature"
    chip: str = "simulated"
    mh: MhConfig = MhConfig()
    bp: BpConfig = BpConfig()
    topology: Topology = Topology()


@dataclass(frozen=True)
class FoldResult:
    fold_index: int
    trainer: str
    sigma: float
    train_size: int
    test_accuracy: float
    seed: int
    hyperparameters: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class AggregateResult:
    mean_accuracy: float
    std_accuracy: float
    folds: tuple


class FoldError(ChipMHError):
    def __init__(self, fold_index, trainer, sigma, train_size, cause):
        self.fold_index = fold_index
        self.cause = cause
        super().__init__(
            f"fold {fold_index} ({trainer}, sigma={sigma}, train_size={train_size}): {cause}"
        )


def accuracy(predictions, labels):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"shape mismatch {predictions.shape} vs {labels.shape}")
    if predictions.size == 0:
        raise ValueError("accuracy of an empty prediction set")
    return float(np.count_nonzero(predictions == labels) / predictions.size)


def aggregate(folds):
    folds = tuple(folds)
    if not folds:
        raise AggregationError("nothing to aggregate")
    keys = {(f.trainer, f.sigma, f.train_size) for f in folds}
    if len(keys) > 1:
        raise AggregationError(f"mixed configurations: {sorted(keys)}")
    accs = np.array([f.test_accuracy for f in folds])
    return AggregateResult(float(accs.mean()), float(accs.std()), folds)


@functools.lru_cache(maxsize=8)
def load_normalized(path, normalization):
    return data.NORMALIZERS[normalization](data.load_wbc(path))


@functools.lru_cache(maxsize=64)
def prepare_fold(path, normalization, train_fraction, T, seed):
    """Split and encode once per fold; cached so trainers reuse identical spikes."""
    d = load_normalized(path, normalization)
    spec = data.split(d, train_fraction, stream_seed(seed, "split"))
    encoded = data.poisson_encode(d, T, stream_seed(seed, "encode"))
    return d, spec, encoded


def hyperparameters(setup, sigma):
    return {
        "T": setup.T,
        "alpha": setup.alpha,
        "mu": setup.mu,
        "sigma": sigma,
        "train_fraction": setup.train_fraction,
        "normalization": setup.normalization,
        "chip": setup.chip,
        "mh": dataclasses.asdict(setup.mh),
        "backprop": dataclasses.asdict(setup.bp),
    }


def run_fold(trainer, sigma, train_size, seed, setup, dataset_path, fold_index=0, traces=None):
    """Train one trainer on one fold and score it on that fold's test split.

    ``train_size`` is an integer or ``None`` for the full training split.
    ``traces``, if given, is a directory receiving the MH trace or the
    backprop loss curve as CSV.
    """
    if trainer not in TRAINERS:
        raise ValueError(f"unknown trainer {trainer!r}")
    d, spec, encoded = prepare_fold(
        dataset_path, setup.normalization, setup.train_fraction, setup.T, seed
    )
    if train_size is not None:
        spec = data.subsample_train(spec, train_size, stream_seed(seed, "subsample"), d.labels)
    assert not set(spec.train_indices.tolist()) & set(spec.test_indices.tolist())
    n_train = len(spec.train_indices)
    train = encoded.subset(spec.train_indices)
    test = encoded.subset(spec.test_indices)
    y_train = d.labels[spec.train_indices]
    y_test = d.labels[spec.test_indices]

    lif = LifConfig(alpha=setup.alpha, mu=setup.mu, sigma=sigma)
    try:
        with open_chip(setup.chip, lif, setup.topology) as chip:
            if trainer == "mh":
                cfg = dataclasses.replace(setup.mh, seed=stream_seed(seed, "mh"))
                w, chain, trace = mh_train(chip, train, y_train, cfg, setup.topology)
                log.info("fold %d mh sigma=%g n=%d accept=%.3f", fold_index, sigma, n_train,
                         chain.accept_count / chain.step_count)
                if traces is not None:
                    trace.write_csv(f"{traces}/mh_trace_sigma{sigma:g}_n{n_train}_fold{fold_index}.csv")
            else:
                cfg = dataclasses.replace(setup.bp, seed=stream_seed(seed, "backprop"))
                w, curve = bp_train(train, y_train, cfg, lif, setup.topology)
                log.info("fold %d backprop sigma=%g n=%d loss %.4f -> %.4f", fold_index, sigma,
                         n_train, curve[0], curve[-1])
                if traces is not None:
                    write_loss_curve(
                        f"{traces}/bp_loss_sigma{sigma:g}_n{n_train}_fold{fold_index}.csv", curve
                    )
            acc = accuracy(predict(chip_eval(chip, w, test)), y_test)
    except ChipMHError as exc:
        raise FoldError(fold_index, trainer, sigma, n_train, exc) from exc

    return FoldResult(fold_index, trainer, float(sigma), n_train, acc, seed, hyperparameters(setup, sigma))


def write_loss_curve(path, curve):
    with open(path, "w") as fh:
        fh.write("epoch,train_mse\n")
        for epoch, loss in enumerate(curve):
            fh.write(f"{epoch},{loss!r}\n")
