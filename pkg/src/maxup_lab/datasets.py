"""Synthetic dataset generators and CSV ingestion.

Generators are pure functions of their spec's seed; train and test come from
disjoint substreams.  The CSV format is ``f0,...,f{d-1},label`` with decimal
floats (shortest round-trip repr, so save-then-load is exact) and labels in
{-1, 1} for binary data or {0..K-1} for multiclass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .rng import RngStream


class BadSpec(ValueError):
    """Dataset parameters out of range."""


class ParseError(ValueError):
    """Malformed CSV content; the message names the offending line."""


class DimensionMismatch(ParseError):
    pass


class UnknownLabel(ParseError):
    pass


@dataclass
class Dataset:
    X: np.ndarray           # (n, d) float64
    y: np.ndarray           # (n,) int64; {-1,+1} binary or {0..K-1} multiclass
    binary: bool = True

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise BadSpec(f"inconsistent dataset shapes {self.X.shape} / {self.y.shape}")

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def examples(self):
        for i in range(len(self)):
            yield self.X[i], int(self.y[i])


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "gaussian_mixture_halfspace"  # | two_moons | grid_images | csv
    n_train: int = 200
    n_test: int = 200
    d: int = 10
    theta_star: tuple | None = None  # halfspace mean direction; default e_1 scaled
    noise_sigma: float = 1.0
    seed: int = 0
    path: str | None = None  # csv only

    def resolved_theta_star(self) -> np.ndarray:
        if self.theta_star is not None:
            theta = np.asarray(self.theta_star, dtype=np.float64)
            if theta.shape != (self.d,) or not np.any(theta):
                raise BadSpec("theta_star must be a nonzero vector of length d")
            return theta
        theta = np.zeros(self.d)
        theta[0] = 1.0
        return theta


def _halfspace(spec: DatasetSpec, n: int, rng: RngStream) -> Dataset:
    theta = spec.resolved_theta_star()
    y = np.where(rng.uniform(size=n) < 0.5, 1.0, -1.0)
    X = y[:, None] * theta[None, :] + spec.noise_sigma * rng.normal((n, spec.d))
    return Dataset(X, y.astype(np.int64))


def _two_moons(spec: DatasetSpec, n: int, rng: RngStream) -> Dataset:
    if spec.d != 2:
        raise BadSpec("two_moons is two-dimensional; set d=2")
    y = np.where(rng.uniform(size=n) < 0.5, 1.0, -1.0)
    t = rng.uniform(0.0, math.pi, n)
    X = np.empty((n, 2))
    upper = y > 0
    X[upper, 0] = np.cos(t[upper])
    X[upper, 1] = np.sin(t[upper])
    X[~upper, 0] = 1.0 - np.cos(t[~upper])
    X[~upper, 1] = 0.5 - np.sin(t[~upper])
    X += spec.noise_sigma * rng.normal((n, 2))
    return Dataset(X, y.astype(np.int64))


def _grid_images(spec: DatasetSpec, n: int, rng: RngStream) -> Dataset:
    """Bright square (label +1) vs bright cross (label -1) on a noisy grid."""
    side = int(round(math.sqrt(spec.d)))
    if side * side != spec.d or side < 4:
        raise BadSpec("grid_images needs a square dimension d = side^2, side >= 4")
    y = np.where(rng.uniform(size=n) < 0.5, 1.0, -1.0)
    X = spec.noise_sigma * rng.normal((n, spec.d))
    half = side // 2
    for i in range(n):
        grid = X[i].reshape(side, side)
        r0 = int(rng.integers(0, side - half + 1))
        c0 = int(rng.integers(0, side - half + 1))
        if y[i] > 0:
            grid[r0:r0 + half, c0:c0 + half] += 2.0
        else:
            grid[r0 + half // 2, c0:c0 + half] += 2.0
            grid[r0:r0 + half, c0 + half // 2] += 2.0
    return Dataset(X, y.astype(np.int64))


_GENERATORS = {
    "gaussian_mixture_halfspace": _halfspace,
    "two_moons": _two_moons,
    "grid_images": _grid_images,
}


def generate(spec: DatasetSpec, rng: RngStream | None = None):
    """(train, test) datasets; deterministic given the spec seed."""
    if spec.kind == "csv":
        if spec.path is None:
            raise BadSpec("csv dataset spec needs a path")
        data = load_csv(spec.path)
        if len(data) < spec.n_train + spec.n_test:
            raise BadSpec("csv file has fewer rows than n_train + n_test")
        train = Dataset(data.X[:spec.n_train], data.y[:spec.n_train], data.binary)
        test = Dataset(data.X[spec.n_train:spec.n_train + spec.n_test],
                       data.y[spec.n_train:spec.n_train + spec.n_test], data.binary)
        return train, test
    if spec.kind not in _GENERATORS:
        raise BadSpec(f"unknown dataset kind: {spec.kind!r}")
    if not spec.noise_sigma > 0:
        raise BadSpec("noise_sigma must be positive")
    if spec.n_train < 1 or spec.n_test < 0:
        raise BadSpec("need n_train >= 1 and n_test >= 0")
    base = rng if rng is not None else RngStream(spec.seed)
    gen = _GENERATORS[spec.kind]
    train = gen(spec, spec.n_train, base.substream("train"))
    test = gen(spec, spec.n_test, base.substream("test"))
    return train, test


def save_csv(dataset: Dataset, path, metadata: dict | None = None) -> None:
    """Write the CSV plus a small metadata sidecar JSON next to it."""
    d = dataset.dim
    with open(path, "w") as fh:
        fh.write(",".join([f"f{i}" for i in range(d)] + ["label"]) + "\n")
        for i in range(len(dataset)):
            fields = [repr(float(v)) for v in dataset.X[i]]
            fields.append(str(int(dataset.y[i])))
            fh.write(",".join(fields) + "\n")
    sidecar = {"rows": len(dataset), "dim": d, "binary": dataset.binary}
    sidecar.update(metadata or {})
    with open(str(path) + ".meta.json", "w") as fh:
        json.dump(sidecar, fh, indent=1)


def load_csv(path) -> Dataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file: missing header row")
    header = lines[0].split(",")
    if header[-1] != "label" or header[:-1] != [f"f{i}" for i in range(len(header) - 1)]:
        raise ParseError(f"line 1: bad header {lines[0]!r}")
    d = len(header) - 1
    rows, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if line == "":
            if lineno == len(lines):  # tolerate one trailing blank line
                continue
            raise ParseError(f"line {lineno}: blank line inside data")
        fields = line.split(",")
        if len(fields) != d + 1:
            raise DimensionMismatch(
                f"line {lineno}: expected {d + 1} fields, got {len(fields)}")
        try:
            rows.append([float(v) for v in fields[:-1]])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        try:
            labels.append(int(fields[-1]))
        except ValueError:
            raise UnknownLabel(f"line {lineno}: bad label {fields[-1]!r}") from None
    y = np.array(labels, dtype=np.int64)
    binary = bool(np.all((y == 1) | (y == -1)))
    if not binary and (np.any(y < 0) or y.size == 0):
        raise UnknownLabel("labels must be {-1,1} or {0..K-1}")
    return Dataset(np.array(rows, dtype=np.float64).reshape(len(rows), d), y, binary)
