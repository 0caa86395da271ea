import dataclasses

import numpy as np
import pytest

from chipmh.errors import AggregationError, SizeError
from chipmh.evaluation import (
    FoldError, FoldResult, FoldSetup, accuracy, aggregate, fold_seed, prepare_fold, run_fold,
    stream_seed,
)
from chipmh.mh import MhConfig
from chipmh.backprop import BpConfig

QUICK = FoldSetup(mh=MhConfig(n_iters=200), bp=BpConfig(epochs=2))


def _fold(acc, trainer="mh", sigma=0.0, n=455, k=0):
    return FoldResult(k, trainer, sigma, n, acc, k)


def test_accuracy_examples():
    assert accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 0.75
    assert accuracy([1], [1]) == 1.0
    with pytest.raises(ValueError):
        accuracy([], [])
    with pytest.raises(ValueError):
        accuracy([0, 1], [0])


def test_aggregate_population_std():
    agg = aggregate([_fold(0.8), _fold(1.0, k=1)])
    assert agg.mean_accuracy == pytest.approx(0.9, abs=1e-15)
    assert agg.std_accuracy == pytest.approx(0.1, abs=1e-15)
    assert aggregate([_fold(0.7)]).std_accuracy == 0.0


def test_aggregate_rejects_empty_and_mixed():
    with pytest.raises(AggregationError):
        aggregate([])
    with pytest.raises(AggregationError):
        aggregate([_fold(0.8), _fold(0.9, trainer="backprop")])
    with pytest.raises(AggregationError):
        aggregate([_fold(0.8), _fold(0.9, sigma=1.0)])


def test_seeds():
    assert [fold_seed(7, k) for k in range(3)] == [7, 8, 9]
    streams = [stream_seed(0, s) for s in ("split", "subsample", "encode", "mh", "backprop")]
    assert len(set(streams)) == 5
    assert stream_seed(0, "mh") != stream_seed(1, "mh")


def test_fold_seeds_give_distinct_splits(wbc_path):
    parts = [prepare_fold(wbc_path, "feature", 0.8, 10, s)[1].train_indices for s in range(5)]
    for i in range(5):
        for j in range(i + 1, 5):
            assert not np.array_equal(parts[i], parts[j])


def test_trainers_share_spikes_across_sigma(wbc_path):
    a = prepare_fold(wbc_path, "feature", 0.8, 10, 3)
    b = prepare_fold(wbc_path, "feature", 0.8, 10, 3)
    assert a[2] is b[2]


def test_run_fold_deterministic(wbc_path):
    for trainer in ("mh", "backprop"):
        a = run_fold(trainer, 2.0, 50, 4, QUICK, wbc_path, fold_index=4)
        b = run_fold(trainer, 2.0, 50, 4, QUICK, wbc_path, fold_index=4)
        assert a == b
        assert a.train_size == 50 and 0 <= a.test_accuracy <= 1


def test_run_fold_result_fields(wbc_path):
    r = run_fold("mh", 1.0, None, 9, QUICK, wbc_path, fold_index=2)
    assert (r.fold_index, r.trainer, r.sigma, r.train_size, r.seed) == (2, "mh", 1.0, 455, 9)
    assert r.hyperparameters["mh"]["n_iters"] == 200
    assert r.hyperparameters["sigma"] == 1.0


def test_oversize_train_size(wbc_path):
    with pytest.raises(SizeError):
        run_fold("mh", 0.0, 456, 0, QUICK, wbc_path)


def test_unknown_trainer(wbc_path):
    with pytest.raises(ValueError):
        run_fold("sgd", 0.0, None, 0, QUICK, wbc_path)


def test_chip_failure_is_wrapped(wbc_path):
    setup = dataclasses.replace(QUICK, chip="external:127.0.0.1:1")
    with pytest.raises(FoldError) as info:
        run_fold("mh", 0.0, 25, 0, setup, wbc_path, fold_index=3)
    assert info.value.fold_index == 3
    assert type(info.value.cause).__name__ == "TransportError"


def test_trace_files(wbc_path, tmp_path):
    run_fold("mh", 0.0, 25, 0, QUICK, wbc_path, traces=tmp_path)
    run_fold("backprop", 0.0, 25, 0, QUICK, wbc_path, traces=tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["bp_loss_sigma0_n25_fold0.csv", "mh_trace_sigma0_n25_fold0.csv"]
    assert len((tmp_path / "bp_loss_sigma0_n25_fold0.csv").read_text().splitlines()) == 4


@pytest.mark.slow
def test_default_fold_regression(wbc_path):
    # frozen from the first full run; any change to seeding or dynamics shows here
    setup = FoldSetup()
    assert run_fold("mh", 0.0, None, 0, setup, wbc_path).test_accuracy == 95 / 114
    assert run_fold("backprop", 0.0, None, 0, setup, wbc_path).test_accuracy == 69 / 114
