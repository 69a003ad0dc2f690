"""Synthetic multi-class data: Gaussian clusters on hypercube vertices in an
informative subspace, followed by redundant (linear-combination) columns and
pure-noise columns.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError


@dataclass(frozen=True)
class DatasetSpec:
    n_samples: int = 2000
    n_features: int = 20
    n_informative: int = 5
    n_redundant: int = 2
    k_classes: int = 3
    clusters_per_class: int = 1
    cluster_std: float = 1.0
    class_separation: float = 2.0
    seed: int = 0

    def validate(self) -> "DatasetSpec":
        if self.n_samples < 1:
            raise ConfigError("n_samples must be positive", "n_samples")
        if self.n_features < 1:
            raise ConfigError("n_features must be positive", "n_features")
        if not 1 <= self.n_informative <= self.n_features:
            raise ConfigError("n_informative must lie in [1, n_features]", "n_informative")
        if self.n_redundant < 0 or self.n_informative + self.n_redundant > self.n_features:
            raise ConfigError("n_informative + n_redundant must not exceed n_features", "n_redundant")
        if self.k_classes < 2:
            raise ConfigError("k_classes must be >= 2", "k_classes")
        if self.clusters_per_class < 1:
            raise ConfigError("clusters_per_class must be >= 1", "clusters_per_class")
        if not self.cluster_std > 0:
            raise ConfigError("cluster_std must be positive", "cluster_std")
        if not self.class_separation > 0:
            raise ConfigError("class_separation must be positive", "class_separation")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative", "seed")
        n_centers = self.k_classes * self.clusters_per_class
        if n_centers > 2**self.n_informative:
            raise ConfigError(
                f"{n_centers} cluster centers do not fit on the {2**self.n_informative} "
                f"vertices of a {self.n_informative}-dimensional hypercube",
                "n_informative",
            )
        if self.n_samples < self.k_classes:
            raise ConfigError("n_samples must be at least k_classes so every class appears", "n_samples")
        return self


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    spec: DatasetSpec
    centers: np.ndarray | None = None  # (k * clusters_per_class, n_informative); center c is class c % k

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]


def _vertices(n_dims, count, rng):
    # distinct hypercube vertices, drawn without replacement
    if n_dims <= 30:
        idx = rng.choice(2**n_dims, size=count, replace=False)
    else:
        seen: set[int] = set()
        while len(seen) < count:
            seen.add(int(rng.integers(0, 2**62)))
        idx = np.array(sorted(seen))
    bits = (idx[:, None] >> np.arange(n_dims)[None, :]) & 1
    return 2.0 * bits - 1.0


def generate(spec: DatasetSpec) -> Dataset:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    k, cpc = spec.k_classes, spec.clusters_per_class
    n_centers = k * cpc
    centers = spec.class_separation * _vertices(spec.n_informative, n_centers, rng)

    # even split over clusters; the first (N mod k*cpc) clusters take one extra sample
    # center c belongs to class c % k so every class gets the same share
    counts = np.full(n_centers, spec.n_samples // n_centers)
    counts[: spec.n_samples % n_centers] += 1
    cluster_of = np.repeat(np.arange(n_centers), counts)
    labels = cluster_of % k

    informative = centers[cluster_of] + spec.cluster_std * rng.standard_normal(
        (spec.n_samples, spec.n_informative)
    )
    mixing = rng.uniform(-1.0, 1.0, size=(spec.n_informative, spec.n_redundant))
    redundant = informative @ mixing
    n_noise = spec.n_features - spec.n_informative - spec.n_redundant
    noise = rng.standard_normal((spec.n_samples, n_noise))
    X = np.hstack([informative, redundant, noise])

    order = rng.permutation(spec.n_samples)
    return Dataset(features=X[order], labels=labels[order].astype(np.int64), spec=spec, centers=centers)


def standardize(ds: Dataset) -> Dataset:
    """Zero-mean, unit-variance columns; constant columns become all zero."""
    X = ds.features
    mean = X.mean(axis=0)
    centered = X - mean
    std = centered.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    Z = np.where(std > 0, centered / safe, 0.0)
    # one refinement pass removes the rounding left by the first centering
    Z = Z - Z.mean(axis=0)
    s2 = Z.std(axis=0)
    Z = np.where(s2 > 0, Z / np.where(s2 > 0, s2, 1.0), 0.0)
    return Dataset(features=Z, labels=ds.labels.copy(), spec=ds.spec, centers=ds.centers)


def write_csv(ds: Dataset, path) -> None:
    D = ds.features.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(D)] + ["label"])
        for row, label in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def read_csv(path, spec: DatasetSpec | None = None) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "label":
            raise ContractError(f"{path}: last column must be 'label'")
        rows = list(reader)
    X = np.array([[float(v) for v in r[:-1]] for r in rows], dtype=np.float64).reshape(len(rows), len(header) - 1)
    y = np.array([int(r[-1]) for r in rows], dtype=np.int64)
    if spec is None:
        spec = DatasetSpec(n_samples=len(rows), n_features=X.shape[1], n_informative=X.shape[1],
                           n_redundant=0, k_classes=max(int(y.max()) + 1, 2) if len(y) else 2)
    return Dataset(features=X, labels=y, spec=spec)
