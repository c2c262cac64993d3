"""Gaussian special functions and one-dimensional quadrature.

``gaussian_cdf``/``gaussian_pdf`` accept scalars or arrays and are accurate to
a few ulp (the cdf goes through ``erfc`` to avoid cancellation in the tails).
``integrate`` evaluates either a Gauss-Hermite rule against the standard
normal weight or an adaptive Simpson rule on an explicit interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import ndtr

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class NonConvergence(RuntimeError):
    """Adaptive refinement exceeded its depth limit; integrand is pathological."""


def gaussian_cdf(x):
    """Standard normal cdf.  Scalar in, float out; array in, array out."""
    if np.isscalar(x) or np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / _SQRT2)
    return ndtr(np.asarray(x, dtype=np.float64))


def gaussian_pdf(x):
    """Standard normal density exp(-x^2/2)/sqrt(2*pi)."""
    if np.isscalar(x) or np.ndim(x) == 0:
        return _INV_SQRT_2PI * math.exp(-0.5 * float(x) * float(x))
    x = np.asarray(x, dtype=np.float64)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature selector: Gauss-Hermite node count or Simpson tolerance."""

    kind: str = "gauss_hermite"  # gauss_hermite | adaptive_simpson
    node_count: int = 200
    tolerance: float = 1e-10
    max_depth: int = 50

    def __post_init__(self):
        if self.kind not in ("gauss_hermite", "adaptive_simpson"):
            raise ValueError(f"unknown quadrature kind: {self.kind!r}")
        if self.kind == "gauss_hermite" and self.node_count < 1:
            raise ValueError("node_count must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@lru_cache(maxsize=8)
def hermgauss_cached(node_count: int):
    """Gauss-Hermite nodes/weights; cached, callers must not mutate them."""
    return hermgauss(node_count)


def gauss_hermite_expectation(f, node_count: int = 200) -> float:
    """E[f(Z)] for Z ~ N(0,1) by Gauss-Hermite; exact for polynomials of
    degree <= 2*node_count - 1."""
    x, w = hermgauss_cached(node_count)
    s = _SQRT2 * x
    vals = np.array([f(si) for si in s], dtype=np.float64)
    return float(np.sum(w * vals)) / math.sqrt(math.pi)


def _simpson(fa, fm, fb, h6):
    return h6 * (fa + 4.0 * fm + fb)


def adaptive_simpson(f, a: float, b: float, tolerance: float = 1e-10,
                     max_depth: int = 50) -> float:
    """Adaptive Simpson on [a, b]; raises NonConvergence past max_depth."""
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = _simpson(fa, fm, fb, (b - a) / 6.0)

    def recurse(a, fa, b, fb, m, fm, whole, tol, depth):
        if depth > max_depth:
            raise NonConvergence(
                f"adaptive Simpson exceeded depth {max_depth} on [{a}, {b}]")
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = _simpson(fa, flm, fm, (m - a) / 6.0)
        right = _simpson(fm, frm, fb, (b - m) / 6.0)
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (recurse(a, fa, m, fm, lm, flm, left, 0.5 * tol, depth + 1)
                + recurse(m, fm, b, fb, rm, frm, right, 0.5 * tol, depth + 1))

    return recurse(a, fa, b, fb, m, fm, whole, tolerance, 0)


def integrate(f, rule: QuadratureRule = QuadratureRule(), weight: str = "gaussian",
              bounds=None) -> float:
    """Integrate ``f``: against the N(0,1) weight when weight='gaussian',
    or plainly over ``bounds`` when weight='none'.

    Gauss-Hermite ignores ``bounds``; adaptive Simpson with a gaussian weight
    folds the density in and integrates over [-12, 12] (mass beyond is < 2e-32).
    """
    if weight not in ("gaussian", "none"):
        raise ValueError(f"unknown weight: {weight!r}")
    if weight == "none" and bounds is None:
        raise ValueError("bounds are required when weight='none'")

    if rule.kind == "gauss_hermite":
        if weight == "none":
            raise ValueError("gauss_hermite supports only the gaussian weight")
        return gauss_hermite_expectation(f, rule.node_count)

    if weight == "gaussian":
        a, b = (-12.0, 12.0) if bounds is None else bounds
        g = lambda s: f(s) * gaussian_pdf(s)
    else:
        a, b = bounds
        g = f
    return adaptive_simpson(g, float(a), float(b), rule.tolerance, rule.max_depth)
