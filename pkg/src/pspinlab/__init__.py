"""Landscape statistics for the spherical pure p-spin model.

Complexity thresholds, two-point covariance structure, random-matrix
estimators, Kac-Rice moments and exact critical-point censuses at small N.
"""

__version__ = "0.1.0"

from .scalar_theory import ModelParams  # noqa: E402,F401
