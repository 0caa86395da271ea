"""Experiment configuration: flat TOML files, overrides and manifests.

Keys are flat. Metropolis-Hastings settings carry an ``mh_`` prefix and
backprop settings a ``bp_`` prefix. A ``[manifest]`` table, if present, is
ignored on load, so a run manifest can be passed back as ``--config``.
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field

import tomli

from .backprop import BpConfig
from .datasets import wdbc_path
from .errors import ConfigError
from .evaluation import TRAINERS, FoldSetup
from .mh import MhConfig

# seeds are derived per fold, never configured directly
_MH_KEYS = [f.name for f in dataclasses.fields(MhConfig) if f.name != "seed"]
_BP_KEYS = [f.name for f in dataclasses.fields(BpConfig) if f.name != "seed"]


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = field(default_factory=wdbc_path)
    master_seed: int = 0
    n_folds: int = 5
    T: int = 10
    alpha: float = 0.9
    mu: float = 1.0
    train_fraction: float = 0.8
    normalization: str = "feature"
    chip: str = "simulated"
    mh: MhConfig = MhConfig()
    bp: BpConfig = BpConfig()
    sigma_grid: tuple = (0.0, 1.0, 2.0, 3.0, 4.0)
    trainsize_sigmas: tuple = (0.0, 1.0, 2.0, 3.0)
    trainset_grid: tuple = (25, 50, 100, 200, 455)
    trainers: tuple = TRAINERS
    out: str = "results"
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)
    # single-fold selection for run-fold
    trainer: str = "mh"
    sigma: float = 0.0
    train_size: str = "full"
    fold: int = 0

    def __post_init__(self):
        bad = [t for t in self.trainers if t not in TRAINERS]
        if bad or self.trainer not in TRAINERS:
            raise ConfigError(f"unknown trainer(s) {bad or [self.trainer]}; choose from {TRAINERS}")
        if self.normalization not in ("sample", "feature"):
            raise ConfigError(f"normalization must be 'sample' or 'feature', got {self.normalization!r}")
        if self.n_folds < 1 or self.T < 1 or self.jobs < 1:
            raise ConfigError("n_folds, T and jobs must be positive")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        parse_train_size(self.train_size)

    def setup(self):
        return FoldSetup(
            T=self.T, alpha=self.alpha, mu=self.mu, train_fraction=self.train_fraction,
            normalization=self.normalization, chip=self.chip, mh=self.mh, bp=self.bp,
        )

    def to_flat(self):
        flat = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "mh":
                flat.update({f"mh_{k}": getattr(value, k) for k in _MH_KEYS})
            elif f.name == "bp":
                flat.update({f"bp_{k}": getattr(value, k) for k in _BP_KEYS})
            elif isinstance(value, tuple):
                flat[f.name] = list(value)
            else:
                flat[f.name] = value
        return flat


def parse_train_size(value):
    """``"full"`` -> None, otherwise a positive int."""
    if value in (None, "full"):
        return None
    try:
        n = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"train_size must be an integer or 'full', got {value!r}") from None
    if n < 1:
        raise ConfigError(f"train_size must be positive, got {n}")
    return n


def from_flat(flat, base=None):
    """Apply flat key/values on top of ``base`` (defaults if None)."""
    base = base or ExperimentConfig()
    top = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"mh", "bp"}
    changes, mh, bp = {}, {}, {}
    for key, value in flat.items():
        if key.startswith("mh_") and key[3:] in _MH_KEYS:
            mh[key[3:]] = value
        elif key.startswith("bp_") and key[3:] in _BP_KEYS:
            bp[key[3:]] = value
        elif key in top:
            changes[key] = tuple(value) if isinstance(value, list) else value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if "train_size" in changes:
        changes["train_size"] = str(changes["train_size"])
    try:
        if mh:
            changes["mh"] = dataclasses.replace(base.mh, **mh)
        if bp:
            changes["bp"] = dataclasses.replace(base.bp, **bp)
        return dataclasses.replace(base, **changes)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_file(path):
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    doc.pop("manifest", None)
    return doc


def parse_value(text):
    """Parse a command-line ``key=value`` right-hand side as a TOML value, else a bare string."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def _toml_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if value == value and abs(value) != float("inf") else json.dumps(str(value))
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    if isinstance(value, int):
        return str(value)
    return json.dumps(str(value))


def dumps(flat, manifest=None):
    lines = [f"{key} = {_toml_value(value)}" for key, value in flat.items()]
    if manifest:
        lines += ["", "[manifest]"]
        lines += [f"{key} = {_toml_value(value)}" for key, value in manifest.items()]
    return "\n".join(lines) + "\n"
