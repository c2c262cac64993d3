"""Numba-compiled reduction kernels (loop form, no intermediates)."""

from __future__ import annotations

import numpy as np
from numba import njit


def _check(values, group_size):
    values = np.ascontiguousarray(values, dtype=np.float64)
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    if values.size % group_size:
        raise ValueError("values length must be a multiple of group_size")
    return values


@njit(cache=True, nogil=True)
def _group_max(values, group_size):
    n = values.size // group_size
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        base = i * group_size
        best = values[base]
        for j in range(1, group_size):
            x = values[base + j]
            if x > best:
                best = x
        out[i] = best
    return out


@njit(cache=True, nogil=True)
def _group_min(values, group_size):
    n = values.size // group_size
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        base = i * group_size
        best = values[base]
        for j in range(1, group_size):
            x = values[base + j]
            if x < best:
                best = x
        out[i] = best
    return out


@njit(cache=True, nogil=True)
def _prefix_max_moments(values, group_size):
    n = values.size // group_size
    sums = np.zeros(group_size, dtype=np.float64)
    sumsqs = np.zeros(group_size, dtype=np.float64)
    for i in range(n):
        base = i * group_size
        running = values[base]
        sums[0] += running
        sumsqs[0] += running * running
        for j in range(1, group_size):
            x = values[base + j]
            if x > running:
                running = x
            sums[j] += running
            sumsqs[j] += running * running
    return sums, sumsqs


def group_max(values, group_size):
    return _group_max(_check(values, group_size), group_size)


def group_min(values, group_size):
    return _group_min(_check(values, group_size), group_size)


def prefix_max_moments(values, group_size):
    return _prefix_max_moments(_check(values, group_size), group_size)
