"""Network topology and the flat weight vector with per-layer views."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class Topology:
    n_in: int = 30
    n_hidden: int = 3
    n_out: int = 2

    @property
    def n_weights(self):
        return self.n_hidden * self.n_in + self.n_out * self.n_hidden


class WeightSet:
    """All synaptic weights in one flat float64 vector.

    ``w1`` (n_hidden x n_in) and ``w2`` (n_out x n_hidden) are views into
    ``flat``, so writes through either are visible in the other.
    """

    def __init__(self, flat, topology=Topology()):
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        if flat.shape != (topology.n_weights,):
            raise DimensionError(
                f"expected {topology.n_weights} weights for {topology}, got shape {flat.shape}"
            )
        self.flat = flat
        self.topology = topology
        split = topology.n_hidden * topology.n_in
        self.w1 = flat[:split].reshape(topology.n_hidden, topology.n_in)
        self.w2 = flat[split:].reshape(topology.n_out, topology.n_hidden)

    @classmethod
    def zeros(cls, topology=Topology()):
        return cls(np.zeros(topology.n_weights), topology)

    def copy(self):
        return WeightSet(self.flat.copy(), self.topology)

    def __len__(self):
        return self.flat.size

    def __repr__(self):
        return f"WeightSet({self.topology}, |w|={np.linalg.norm(self.flat):.4g})"
