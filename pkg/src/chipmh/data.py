"""WDBC ingestion, normalization, train/test splitting and Poisson spike encoding."""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateSampleError, EncodingError, ParseError, SizeError

N_FEATURES = 30
DIAGNOSIS = {"M": 1, "B": 0}


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, F) float64
    labels: np.ndarray  # (N,) int64, 1 = malignant
    sample_ids: tuple = field(default=())

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        ids = tuple(self.sample_ids[i] for i in indices) if self.sample_ids else ()
        return Dataset(self.features[indices], self.labels[indices], ids)


@dataclass(frozen=True)
class SpikeTrainBatch:
    """Binary spikes of shape (N, F, T), stored as 0.0/1.0 float64."""

    spikes: np.ndarray

    def __len__(self):
        return self.spikes.shape[0]

    @property
    def T(self):
        return self.spikes.shape[2]

    @property
    def n_features(self):
        return self.spikes.shape[1]

    def subset(self, indices):
        return SpikeTrainBatch(self.spikes[np.asarray(indices, dtype=np.int64)])


@dataclass(frozen=True)
class SplitSpec:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int
    train_fraction: float


def load_wbc(path):
    """Parse a UCI ``wdbc.data`` file: ``id, M|B, 30 reals`` per row, no header."""
    ids, labels, rows = [], [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != N_FEATURES + 2:
                raise ParseError(f"expected {N_FEATURES + 2} fields, got {len(row)}", lineno)
            diag = row[1].strip()
            if diag not in DIAGNOSIS:
                raise ParseError(f"unknown diagnosis {diag!r}", lineno)
            try:
                values = [float(cell) for cell in row[2:]]
            except ValueError as exc:
                raise ParseError(f"non-numeric feature ({exc})", lineno) from None
            if any(not math.isfinite(x) or x < 0 for x in values):
                raise ParseError("features must be finite and non-negative", lineno)
            ids.append(row[0].strip())
            labels.append(DIAGNOSIS[diag])
            rows.append(values)
    if not rows:
        raise ParseError(f"no data rows in {path}")
    return Dataset(
        np.asarray(rows, dtype=np.float64),
        np.asarray(labels, dtype=np.int64),
        tuple(ids),
    )


def normalize_per_sample(d):
    """Divide every sample vector by its own maximum entry."""
    peak = d.features.max(axis=1)
    bad = np.flatnonzero(peak <= 0)
    if bad.size:
        raise DegenerateSampleError(int(bad[0]))
    return replace(d, features=d.features / peak[:, None])


def normalize_per_feature(d):
    """Column-wise alternative: divide each feature by its maximum over samples."""
    peak = d.features.max(axis=0)
    bad = np.flatnonzero(peak <= 0)
    if bad.size:
        raise DegenerateSampleError(int(bad[0]))
    return replace(d, features=d.features / peak[None, :])


NORMALIZERS = {"sample": normalize_per_sample, "feature": normalize_per_feature}


def split(d, train_fraction, seed):
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(d)
    n_train = round(train_fraction * n)
    perm = np.random.default_rng(seed).permutation(n)
    return SplitSpec(perm[:n_train], perm[n_train:], seed, train_fraction)


def poisson_encode(d, T, seed):
    """Bernoulli(x) spike in each of ``T`` bins, independently per feature and bin."""
    x = d.features
    if np.any(~np.isfinite(x)) or x.min() < 0 or x.max() > 1:
        raise EncodingError("feature values must lie in [0, 1] before encoding")
    if T < 1:
        raise EncodingError(f"T must be positive, got {T}")
    u = np.random.default_rng(seed).random((x.shape[0], x.shape[1], T))
    return SpikeTrainBatch((u < x[:, :, None]).astype(np.float64))


def _stratified_counts(class_sizes, m):
    """Largest-remainder allocation of ``m`` draws over classes, at least one per class."""
    total = sum(class_sizes)
    quotas = [m * n / total for n in class_sizes]
    counts = [int(math.floor(q)) for q in quotas]
    by_remainder = sorted(range(len(quotas)), key=lambda i: (counts[i] - quotas[i], i))
    for i in by_remainder[: m - sum(counts)]:
        counts[i] += 1
    if m >= len(class_sizes):
        for i, c in enumerate(counts):
            if c == 0:
                counts[i] = 1
                counts[counts.index(max(counts))] -= 1
    return counts


def subsample_train(s, m, seed, labels):
    """Class-stratified subset of ``m`` training indices; the test set is untouched."""
    n_train = len(s.train_indices)
    if m < 1 or m > n_train:
        raise SizeError(f"train size {m} outside [1, {n_train}]")
    if m == n_train:
        return s
    train_labels = np.asarray(labels)[s.train_indices]
    classes = np.unique(train_labels)
    positions = [np.flatnonzero(train_labels == c) for c in classes]
    counts = _stratified_counts([len(p) for p in positions], m)
    rng = np.random.default_rng(seed)
    keep = np.concatenate(
        [rng.choice(p, size=k, replace=False) for p, k in zip(positions, counts)]
    )
    keep.sort()
    return SplitSpec(s.train_indices[keep], s.test_indices, s.seed, s.train_fraction)
