"""Worst-case data augmentation (MaxUp) training and verification toolkit.

The package trains small differentiable models under four regimes (plain
ERM, average augmentation, MaxUp, online hard-example mining) and checks
the analytic claims made about those regimes -- the gradient-norm
regularization induced by the worst augmented copy, the Hessian-trace
effect of average augmentation, the adversarial dual-norm expansion, the
max-of-Gaussians constants, and the Rademacher-complexity bound for
augmented linear classifiers -- against independent Monte-Carlo and
finite-difference oracles.
"""

__version__ = "0.1.0"

from .rng import RngStream, sample_standard_normal
from .special import gaussian_cdf, gaussian_pdf, QuadratureRule, integrate

__all__ = [
    "RngStream",
    "sample_standard_normal",
    "gaussian_cdf",
    "gaussian_pdf",
    "QuadratureRule",
    "integrate",
]
