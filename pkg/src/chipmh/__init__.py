"""Chip-in-the-loop training of a distorted spiking network by Metropolis-Hastings sampling."""

__version__ = "0.1.0"
