"""Conditional perturbation samplers used by the augmentation trainers.

``gaussian`` adds isotropic noise of scale sigma, ``cutout`` blanks one square
patch of a flattened h-by-w grid, ``identity`` returns exact copies.  Draws
are pure functions of the supplied stream, and perturbed copies are treated as
constants downstream (gradients never flow through the sampler).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import RngStream


class BadSpec(ValueError):
    """Augmentation parameters out of range."""


@dataclass(frozen=True)
class AugmentationSpec:
    kind: str = "identity"  # gaussian | cutout | identity
    sigma: float = 0.1           # gaussian: noise scale in input units
    patch_fraction: float = 0.25  # cutout: fraction of grid area to blank
    fill_value: float = 0.0       # cutout: value written into the patch

    def __post_init__(self):
        if self.kind not in ("gaussian", "cutout", "identity"):
            raise BadSpec(f"unknown augmentation kind: {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise BadSpec("gaussian sigma must be positive")
        if self.kind == "cutout" and not 0 < self.patch_fraction <= 1:
            raise BadSpec("patch_fraction must lie in (0, 1]")


def _grid_side(d: int) -> int:
    side = int(round(math.sqrt(d)))
    if side * side != d:
        raise BadSpec(f"cutout needs a square grid input; got dimension {d}")
    return side


def sample(spec: AugmentationSpec, x, m: int, rng: RngStream) -> np.ndarray:
    """m independent draws from the perturbation distribution, as (m, d)."""
    x = np.asarray(x, dtype=np.float64)
    if m < 1:
        raise BadSpec("m must be >= 1")
    if not np.all(np.isfinite(x)):
        raise BadSpec("input point must be finite")

    if spec.kind == "identity":
        return np.tile(x, (m, 1))

    if spec.kind == "gaussian":
        z = rng.normal((m, x.shape[0]))
        return x + spec.sigma * z

    side = _grid_side(x.shape[0])
    patch = max(1, int(round(math.sqrt(spec.patch_fraction) * side)))
    patch = min(patch, side)
    out = np.tile(x, (m, 1))
    # uniform over positions where the patch fits entirely inside the grid
    rows = rng.integers(0, side - patch + 1, m)
    cols = rng.integers(0, side - patch + 1, m)
    for i in range(m):
        grid = out[i].reshape(side, side)
        grid[rows[i]:rows[i] + patch, cols[i]:cols[i] + patch] = spec.fill_value
    return out


def cutout_patch_cells(spec: AugmentationSpec, d: int) -> int:
    """Number of cells a cutout patch covers on a d-dimensional grid input."""
    side = _grid_side(d)
    patch = min(max(1, int(round(math.sqrt(spec.patch_fraction) * side))), side)
    return patch * patch
