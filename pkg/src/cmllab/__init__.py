"""Coupled-map-lattice laboratory.

A ring of chaotic interval maps with a one-sided nearest-neighbour coupling
whose sign dynamics emulates Stavskaya's probabilistic cellular automaton.
The package bundles:

* the local map family and its structural constants (``local_map``),
* the lattice dynamics and sign-field recording (``lattice``),
* an exact single-site transfer operator on piecewise-linear densities
  (``transfer``),
* variation functionals for translation-invariant product measures
  (``measures``),
* space-time cluster construction, boundary tracing and enumeration
  (``clusters``),
* the derived-constants ledger and contour series bounds (``constants``),
* ensemble Monte Carlo, correlation estimators and the reference cellular
  automaton (``montecarlo``),
* a reproducible command-line front end (``cli``).
"""

__version__ = "0.1.0"

from . import clusters, constants, lattice, local_map, measures, montecarlo, transfer

__all__ = [
    "__version__",
    "clusters",
    "constants",
    "lattice",
    "local_map",
    "measures",
    "montecarlo",
    "transfer",
]
