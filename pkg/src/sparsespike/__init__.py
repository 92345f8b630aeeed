"""Numerical laboratory for rank-one signal recovery under sparse noise.

Simulates spiked sparse random matrices, solves the recovery fixed-point
equations by population dynamics, evaluates closed-form thresholds, and
cross-validates theory against direct diagonalization.
"""

from . import analytic, cli, ensembles, errors, graphgen, observables, popdyn, spectral

__all__ = [
    "analytic",
    "cli",
    "ensembles",
    "errors",
    "graphgen",
    "observables",
    "popdyn",
    "spectral",
]

__version__ = "0.1.0"
