"""Metropolis-Hastings training of chip weights.

The trainer treats the chip as a black box: it only calls ``chip_eval`` and
scores the returned output rates. It does not import the neuron or network
modules.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .chip import chip_eval
from .errors import ConfigError, DimensionError, TrainingError
from .weights import Topology, WeightSet

LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class MhConfig:
    c: float = 0.5  # proposal std
    v: float = 1.0  # likelihood std
    p: float = 10.0  # prior std
    n_iters: int = 10_000
    burn_in_fraction: float = 0.5
    seed: int = 0
    thin: int = 1
    estimator: str = "mean"  # or "map": highest log-posterior retained state
    strict_alg1: bool = False
    check_every: int = 0
    likelihood: str = "sum"  # "sum": product of per-sample Gaussians; "mean": one Gaussian on the MSE

    def __post_init__(self):
        if not (self.c > 0 and self.v > 0 and self.p > 0):
            raise ConfigError("c, v and p must be positive")
        if self.n_iters < 1:
            raise ConfigError(f"n_iters must be >= 1, got {self.n_iters}")
        if not 0 <= self.burn_in_fraction < 1:
            raise ConfigError(f"burn_in_fraction must lie in [0, 1), got {self.burn_in_fraction}")
        if self.thin < 1:
            raise ConfigError(f"thin must be >= 1, got {self.thin}")
        if self.estimator not in ("mean", "map"):
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.likelihood not in ("sum", "mean"):
            raise ConfigError(f"unknown likelihood {self.likelihood!r}")

    @property
    def n_burn(self):
        return int(self.burn_in_fraction * self.n_iters)


@dataclass
class ChainState:
    current: np.ndarray
    current_log_post: float
    current_log_lik: float
    current_mse: float
    history: np.ndarray = None  # (retained, dim)
    history_log_post: np.ndarray = None
    n_retained: int = 0
    accept_count: int = 0
    step_count: int = 0


@dataclass
class Trace:
    log_likelihood: list = field(default_factory=list)
    log_prior: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    mse: list = field(default_factory=list)

    def __len__(self):
        return len(self.accepted)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["iter", "log_likelihood", "log_prior", "accepted", "mse"])
            for i, row in enumerate(zip(self.log_likelihood, self.log_prior, self.accepted, self.mse), 1):
                out.writerow([i, repr(row[0]), repr(row[1]), row[2], repr(row[3])])


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def mse_loss(rates, labels):
    """Mean over samples of the squared distance between rate vector and one-hot label."""
    rates = np.asarray(rates, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if rates.shape != labels.shape:
        raise DimensionError(f"rates {rates.shape} and labels {labels.shape} differ in shape")
    if rates.shape[0] == 0:
        raise DimensionError("empty batch")
    return float(np.mean(np.sum((labels - rates) ** 2, axis=1)))


def log_likelihood(mse, v, n=1):
    """Gaussian log-density of the MSE with std ``v``.

    ``n > 1`` treats the ``n`` samples behind the MSE as independent
    observations, each with its own Gaussian factor: the log-likelihood is
    then ``n`` times the single-factor value.
    """
    return n * (-mse / (2 * v * v) - (LOG_SQRT_2PI + math.log(v)))


def log_prior(w, p):
    """Independent zero-mean Gaussian of std ``p`` on every weight, summed in log space."""
    flat = w.flat if isinstance(w, WeightSet) else np.asarray(w, dtype=np.float64)
    return float(-np.dot(flat, flat) / (2 * p * p) - flat.size * (LOG_SQRT_2PI + math.log(p)))


def acceptance_rate(chain):
    if chain.step_count < 1:
        raise ValueError("chain has not taken any steps")
    return chain.accept_count / chain.step_count


def metropolis_accept(delta, u):
    """Accept with probability ``min(1, exp(delta))`` given ``u ~ U[0, 1)``."""
    return u == 0 or math.log(u) < delta


def sample_posterior(loss_fn, dim, cfg, n_obs=1):
    """Random-walk Metropolis over ``dim`` weights.

    ``loss_fn(flat) -> mse`` supplies the likelihood through the Gaussian
    model (``n_obs`` independent factors); the prior is the Gaussian weight
    prior. Returns ``(estimate, chain, trace)``.
    """
    rng = np.random.default_rng(cfg.seed)
    n_keep = max(0, (cfg.n_iters - cfg.n_burn + cfg.thin - 1) // cfg.thin)

    def score(flat):
        mse = float(loss_fn(flat))
        ll = log_likelihood(mse, cfg.v, n_obs)
        return mse, ll, ll + log_prior(flat, cfg.p)

    current = rng.normal(0.0, cfg.c, dim)
    mse, ll, lp = score(current)
    chain = ChainState(
        current=current,
        current_log_post=lp,
        current_log_lik=ll,
        current_mse=mse,
        history=np.empty((n_keep, dim)),
        history_log_post=np.empty(n_keep),
    )
    trace = Trace()

    try:
        for n in range(cfg.n_iters):
            if cfg.strict_alg1 or (cfg.check_every and n % cfg.check_every == 0):
                again = score(chain.current)
                if again[2] != chain.current_log_post:
                    raise TrainingError(
                        f"cached log-posterior {chain.current_log_post!r} != recomputed {again[2]!r} at iteration {n}"
                    )
            proposal = chain.current + rng.normal(0.0, cfg.c, dim)
            p_mse, p_ll, p_lp = score(proposal)
            delta = p_lp - chain.current_log_post
            u = rng.random()
            accepted = metropolis_accept(delta, u)
            if accepted:
                chain.current = proposal
                chain.current_log_post = p_lp
                chain.current_log_lik = p_ll
                chain.current_mse = p_mse
                chain.accept_count += 1
            chain.step_count += 1

            trace.log_likelihood.append(chain.current_log_lik)
            trace.log_prior.append(chain.current_log_post - chain.current_log_lik)
            trace.accepted.append(int(accepted))
            trace.mse.append(chain.current_mse)

            if n >= cfg.n_burn and (n - cfg.n_burn) % cfg.thin == 0:
                chain.history[chain.n_retained] = chain.current
                chain.history_log_post[chain.n_retained] = chain.current_log_post
                chain.n_retained += 1
    except Exception as exc:
        exc.chain = chain
        raise

    return estimate(chain, cfg), chain, trace


def estimate(chain, cfg):
    kept = chain.history[: chain.n_retained]
    if chain.n_retained == 0:
        return chain.current.copy()
    if cfg.estimator == "map":
        return kept[int(np.argmax(chain.history_log_post[: chain.n_retained]))].copy()
    return kept.mean(axis=0)


def mh_train(chip, train, labels, cfg=MhConfig(), topology=Topology()):
    """Train chip weights on an encoded batch with fixed spikes.

    Returns ``(w_star, chain, trace)``; ``w_star`` is the posterior mean of
    the retained post-burn-in states unless ``cfg.estimator == "map"``.
    """
    targets = one_hot(labels, topology.n_out)

    def loss(flat):
        return mse_loss(chip_eval(chip, WeightSet(flat, topology), train), targets)

    n_obs = len(targets) if cfg.likelihood == "sum" else 1
    flat, chain, trace = sample_posterior(loss, topology.n_weights, cfg, n_obs)
    chain.current = WeightSet(chain.current, topology)
    return WeightSet(flat, topology), chain, trace
