import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chipmh.errors import ConfigError
from chipmh.neuron import LifConfig, NeuronState, distort, lif_step, lif_update

finite = st.floats(-50, 50, allow_nan=False)


@given(finite)
def test_distort_identity_at_zero_sigma(x):
    assert distort(x, 0.0) == x


def test_distort_examples():
    assert distort(1.0, 2.0) == pytest.approx(1 + 1 + 1 / 3, abs=1e-9)
    assert distort(-1.0, 3.0) == pytest.approx(0.0, abs=1e-9)


@given(st.floats(0, 20), st.floats(0, 10), st.floats(0, 10))
def test_distort_monotone_in_sigma(x, s1, s2):
    lo, hi = sorted((s1, s2))
    assert distort(x, lo) <= distort(x, hi)


def test_lif_quiescent():
    state, spike = lif_step(NeuronState(0.0), 0.0, LifConfig())
    assert (state.v, spike) == (0.0, 0)


def test_lif_subthreshold():
    state, spike = lif_step(NeuronState(0.5), 1.0, LifConfig(0.9, 1.0, 0.0))
    assert spike == 0
    assert state.v == pytest.approx(0.55, abs=1e-9)


def test_lif_fire_and_reset():
    state, spike = lif_step(NeuronState(0.95), 10.0, LifConfig(0.9, 1.0, 0.0))
    assert (state.v, spike) == (0.0, 1)


def test_negative_potential_resets():
    state, spike = lif_step(NeuronState(0.2), -5.0, LifConfig())
    assert (state.v, spike) == (0.0, 0)


def test_distortion_flips_negative_potential():
    # f(-1) = -1 + 2 - 2/3 at sigma=4: stored, not reset
    cfg = LifConfig(alpha=0.0, mu=1.0, sigma=4.0)
    state, spike = lif_step(NeuronState(0.0), -1.0, cfg)
    assert spike == 0
    assert state.v == pytest.approx(1 / 3, abs=1e-12)


@pytest.mark.parametrize("bad", [dict(alpha=1.0), dict(alpha=-0.1), dict(mu=0.0), dict(sigma=-1.0)])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        LifConfig(**bad)


@given(
    st.floats(0, 0.99), st.floats(0.1, 5), st.floats(0, 5),
    st.lists(st.floats(-20, 20), min_size=1, max_size=40),
)
def test_membrane_stays_in_range(alpha, mu, sigma, currents):
    cfg = LifConfig(alpha, mu, sigma)
    state = NeuronState()
    for i in currents:
        state, _ = lif_step(state, i, cfg)
        assert 0 <= state.v < mu


def _plain_lif(v, i, alpha, mu):
    v = alpha * v + (1 - alpha) * i
    if v >= mu:
        return 0.0, 1
    return (0.0 if v < 0 else v), 0


def test_zero_sigma_matches_plain_lif():
    rng = np.random.default_rng(0)
    cfg = LifConfig(0.9, 1.0, 0.0)
    state, v = NeuronState(), 0.0
    for i in rng.normal(1.0, 3.0, 100_000):
        state, spike = lif_step(state, i, cfg)
        v, ref = _plain_lif(v, i, 0.9, 1.0)
        assert spike == ref and state.v == v


def test_vectorized_update_matches_scalar():
    rng = np.random.default_rng(1)
    cfg = LifConfig(0.8, 1.0, 2.5)
    v = rng.uniform(0, 1, 200)
    i = rng.normal(0, 4, 200)
    new_v, spikes, _ = lif_update(v, i, cfg)
    for k in range(200):
        state, s = lif_step(NeuronState(v[k]), i[k], cfg)
        assert state.v == new_v[k] and s == spikes[k]
