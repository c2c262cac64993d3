"""Pure-numpy reference implementations of the reduction kernels."""

from __future__ import annotations

import numpy as np


def _as_groups(values, group_size):
    values = np.asarray(values, dtype=np.float64)
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    if values.size % group_size:
        raise ValueError("values length must be a multiple of group_size")
    return values.reshape(-1, group_size)


def group_max(values, group_size):
    return _as_groups(values, group_size).max(axis=1)


def group_min(values, group_size):
    return _as_groups(values, group_size).min(axis=1)


def prefix_max_moments(values, group_size):
    g = _as_groups(values, group_size)
    running = np.maximum.accumulate(g, axis=1)
    return running.sum(axis=0), (running * running).sum(axis=0)
