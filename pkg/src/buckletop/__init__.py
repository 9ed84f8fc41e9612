"""Topology optimization of 2D continua with a lower bound on the
linearized fundamental buckling load factor.

Compliance is minimized over a regular quadrilateral grid subject to a
volume constraint and per-eigenvalue (or aggregated) buckling constraints.
The package also ships the analysis-accuracy and sensitivity-consistency
studies used to validate the engine (see the ``buckletop`` CLI).
"""

__version__ = "0.1.0"
