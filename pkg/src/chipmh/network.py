"""Feed-forward simulation of the two-layer spiking network."""

import numpy as np

from .errors import DimensionError
from .neuron import lif_update


def _check(w, spikes):
    if spikes.ndim != 3:
        raise DimensionError(f"spike batch must be (N, F, T), got shape {spikes.shape}")
    if spikes.shape[1] != w.topology.n_in:
        raise DimensionError(
            f"input has {spikes.shape[1]} features, weights expect {w.topology.n_in}"
        )


def _layer(currents, cfg):
    """Run LIF neurons over time given input currents of shape (N, units, T)."""
    v = np.zeros(currents.shape[:2])
    out = np.empty_like(currents)
    for k in range(currents.shape[2]):
        v, out[:, :, k], _ = lif_update(v, currents[:, :, k], cfg)
    return out


def simulate(w, spikes, cfg):
    """Output spike trains (N, n_out, T) for a batch of input spike trains (N, F, T).

    Hidden spikes reach the output layer within the same tick. Each sample
    starts from zero membrane potential. Currents are computed one sample
    at a time (stacked matmul), so results do not depend on batch size.
    """
    spikes = np.asarray(spikes, dtype=np.float64)
    _check(w, spikes)
    hidden = _layer(np.matmul(w.w1, spikes), cfg)
    return _layer(np.matmul(w.w2, hidden), cfg)


def forward(w, sample, cfg):
    """Single sample (F, T) -> (output spikes (n_out, T), rates (n_out,))."""
    sample = np.asarray(sample, dtype=np.float64)
    if sample.ndim != 2:
        raise DimensionError(f"sample must be (F, T), got shape {sample.shape}")
    out = simulate(w, sample[None], cfg)[0]
    return out, out.mean(axis=1)


def batch_rates(w, batch, cfg):
    """Firing rates of the output layer, shape (N, n_out), in sample order."""
    spikes = batch.spikes if hasattr(batch, "spikes") else np.asarray(batch)
    if len(spikes) == 0:
        return np.zeros((0, w.topology.n_out))
    return simulate(w, spikes, cfg).mean(axis=2)


def predict(rates):
    """Argmax readout; ties go to the lowest class index. Accepts (n_out,) or (N, n_out)."""
    return np.argmax(np.asarray(rates), axis=-1)
