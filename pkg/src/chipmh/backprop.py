"""Surrogate-gradient backprop-through-time baseline with a hand-rolled Adam.

The forward pass runs the distorted neuron (what the chip actually does).
The backward pass replaces the spike step's derivative with a Gaussian
surrogate and treats resets as constant masks. In ``ideal_backward`` mode
the distortion is invisible to the gradient (its slope is taken as 1), which
is how a trainer that only knows the nominal neuron model behaves.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ConfigError, DivergenceError
from .mh import mse_loss, one_hot
from .network import batch_rates
from .neuron import LifConfig, distort, distort_slope
from .weights import Topology, WeightSet

INV_SQRT_2PI = 1 / math.sqrt(2 * math.pi)
GRADIENT_MODES = ("ideal_backward", "distorted_backward")
SURROGATE_CENTERS = ("threshold", "zero")


@dataclass(frozen=True)
class BpConfig:
    lr: float = 0.001
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    init_std: float = 0.5
    gradient_mode: str = "ideal_backward"
    surrogate_center: str = "threshold"

    def __post_init__(self):
        if self.gradient_mode not in GRADIENT_MODES:
            raise ConfigError(f"gradient_mode must be one of {GRADIENT_MODES}")
        if self.surrogate_center not in SURROGATE_CENTERS:
            raise ConfigError(f"surrogate_center must be one of {SURROGATE_CENTERS}")
        if self.epochs < 0 or self.batch_size < 1 or not self.lr > 0:
            raise ConfigError("need epochs >= 0, batch_size >= 1, lr > 0")


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v_hat: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def surrogate_grad(v, mu):
    """Gaussian stand-in for the spike derivative, peaked at ``v == mu``."""
    x = np.asarray(v, dtype=np.float64) - mu
    out = INV_SQRT_2PI * np.exp(-2.0 * x * x)
    return float(out) if out.ndim == 0 else out


def smooth_spike(v, mu):
    """Antiderivative of :func:`surrogate_grad`; used by the differentiable twin."""
    return 0.25 * (1.0 + erf(math.sqrt(2.0) * (np.asarray(v, dtype=np.float64) - mu)))


def adam_step(w, grad, st, cfg):
    t = st.t + 1
    m = cfg.beta1 * st.m + (1 - cfg.beta1) * grad
    v = cfg.beta2 * st.v_hat + (1 - cfg.beta2) * grad * grad
    m_hat = m / (1 - cfg.beta1 ** t)
    v_hat = v / (1 - cfg.beta2 ** t)
    flat = w.flat - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps_adam)
    return WeightSet(flat, w.topology), AdamState(m, v, t)


def _run_layer(W, x, lif, twin):
    """Forward one layer over time, recording what the backward pass needs.

    x: (B, n_in, T). Returns spikes (B, units, T) and the cache.
    """
    currents = np.matmul(W, x)
    B, units, T = currents.shape
    v = np.zeros((B, units))
    s = np.empty_like(currents)
    u_rec = np.empty_like(currents)
    d_rec = np.empty_like(currents)
    keep = np.empty_like(currents)
    for k in range(T):
        u = lif.alpha * v + (1 - lif.alpha) * currents[:, :, k]
        d = distort(u, lif.sigma)
        if twin:
            s[:, :, k] = smooth_spike(d, lif.mu)
            keep[:, :, k] = 1.0
        else:
            fired = d >= lif.mu
            s[:, :, k] = fired
            keep[:, :, k] = ~(fired | (d < 0))
        v = keep[:, :, k] * d
        u_rec[:, :, k] = u
        d_rec[:, :, k] = d
    return s, (x, u_rec, d_rec, keep)


def _backward_layer(W, cache, g_s, lif, slope_mode, center):
    """Backprop through time for one layer given dL/ds of shape (B, units, T)."""
    x, u_rec, d_rec, keep = cache
    g_I = np.empty_like(g_s)
    g_v = np.zeros(g_s.shape[:2])
    for k in range(g_s.shape[2] - 1, -1, -1):
        g_d = g_s[:, :, k] * surrogate_grad(d_rec[:, :, k], center) + g_v * keep[:, :, k]
        if slope_mode == "distorted_backward":
            g_u = g_d * distort_slope(u_rec[:, :, k], lif.sigma)
        else:
            g_u = g_d
        g_v = lif.alpha * g_u
        g_I[:, :, k] = (1 - lif.alpha) * g_u
    g_W = np.einsum("buk,bik->ui", g_I, x)
    g_x = np.matmul(W.T, g_I)
    return g_W, g_x


def loss_and_grad(w, spikes, targets, lif, gradient_mode="ideal_backward",
                  surrogate_center="threshold", twin=False):
    """MSE of output rates against targets, and its surrogate gradient (flat).

    ``twin=True`` swaps the spike step for :func:`smooth_spike` and disables
    resets; the returned gradient is then the exact gradient of the returned
    loss when ``gradient_mode == "distorted_backward"`` (or ``sigma == 0``).
    """
    center = lif.mu if surrogate_center == "threshold" else 0.0
    x = np.asarray(spikes, dtype=np.float64)
    s1, c1 = _run_layer(w.w1, x, lif, twin)
    s2, c2 = _run_layer(w.w2, s1, lif, twin)
    T = x.shape[2]
    rates = s2.mean(axis=2)
    resid = rates - targets
    B = x.shape[0]
    loss = float(np.mean(np.sum(resid * resid, axis=1)))
    g_rates = 2.0 * resid / B
    g_s2 = np.repeat(g_rates[:, :, None] / T, T, axis=2)
    g_w2, g_s1 = _backward_layer(w.w2, c2, g_s2, lif, gradient_mode, center)
    g_w1, _ = _backward_layer(w.w1, c1, g_s1, lif, gradient_mode, center)
    return loss, np.concatenate([g_w1.ravel(), g_w2.ravel()])


def init_weights(cfg, topology=Topology()):
    rng = np.random.default_rng([cfg.seed, 0])
    return WeightSet(rng.normal(0.0, cfg.init_std, topology.n_weights), topology)


def bp_train(train, labels, cfg=BpConfig(), lif=None, topology=Topology()):
    """Train by minibatch Adam on the surrogate gradient.

    Returns ``(w, loss_curve)`` where ``loss_curve[e]`` is the full-train MSE
    after ``e`` epochs (entry 0 is the initial weights).
    """
    lif = lif or LifConfig()
    spikes = train.spikes if hasattr(train, "spikes") else np.asarray(train)
    targets = one_hot(labels, topology.n_out)
    w = init_weights(cfg, topology)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    st = AdamState.fresh(topology.n_weights)

    loss_curve = [mse_loss(batch_rates(w, spikes, lif), targets)]
    n = len(spikes)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grad = loss_and_grad(
                w, spikes[idx], targets[idx], lif, cfg.gradient_mode, cfg.surrogate_center
            )
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise DivergenceError(epoch, loss)
            w, st = adam_step(w, grad, st, cfg)
        epoch_loss = mse_loss(batch_rates(w, spikes, lif), targets)
        if not math.isfinite(epoch_loss):
            raise DivergenceError(epoch, epoch_loss)
        loss_curve.append(epoch_loss)
    return w, loss_curve


def gradient_check(draws=10, seed=0, h=1e-4, batch=16, T=10, lif=None, topology=Topology()):
    """Compare BPTT gradients on the differentiable twin to central differences.

    Returns the largest relative error over all coordinates and draws, where
    relative error is ``|a - b| / max(|a|, |b|, 1e-8)``. Returns ``inf`` if
    the twin overflows, which strong distortion can cause since it never resets.
    """
    lif = lif or LifConfig()
    rng = np.random.default_rng(seed)
    worst = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(draws):
            w = WeightSet(rng.normal(0.0, 0.5, topology.n_weights), topology)
            x = (rng.random((batch, topology.n_in, T)) < 0.3).astype(np.float64)
            y = one_hot(rng.integers(0, topology.n_out, batch), topology.n_out)
            _, grad = loss_and_grad(w, x, y, lif, "distorted_backward", twin=True)
            fd = np.empty_like(grad)
            for j in range(grad.size):
                up, down = w.flat.copy(), w.flat.copy()
                up[j] += h
                down[j] -= h
                l_up = loss_and_grad(WeightSet(up, topology), x, y, lif, twin=True)[0]
                l_down = loss_and_grad(WeightSet(down, topology), x, y, lif, twin=True)[0]
                fd[j] = (l_up - l_down) / (2 * h)
            if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(fd))):
                return math.inf
            rel = np.abs(grad - fd) / np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-8)
            worst = max(worst, float(rel.max()))
    return worst
