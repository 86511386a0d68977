"""Voter model with a slow membrane: simulation, duality and continuum references.

Submodules
----------
lattice
    Rates, box geometry, initial profiles and the event-driven voter simulator.
walks
    Dual slow-bond walks, coalescing pairs and return probabilities.
brownian
    Brownian motion with local time, snapping-out and product processes.
pde
    Interface heat equation solver, weak residuals and Feynman-Kac estimates.
testfunctions
    Piecewise smooth test functions with exact one-sided derivatives.
fluctuation
    Fluctuation field, Dynkin terms, quadratic variation and limit references.
master
    Exact forward equations on tiny boxes.
harness, cli
    Experiment presets, persistence and the command line.
"""
from .errors import ConfigurationError, DomainError
from .lattice import BoxGeometry, InitialProfile, LatticeConfig, MembraneRates

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "DomainError", "BoxGeometry", "InitialProfile", "LatticeConfig",
           "MembraneRates", "__version__"]
