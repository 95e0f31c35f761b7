"""Lattice fields, exact diagram sums, path simulation and variational bounds for a
renormalized cubic Gibbs measure on the three-torus with a Wick-ordered L^2 cutoff."""

__version__ = "0.1.0"

from . import diagram_engine, lattice_field, stochastic_lab, variational_engine  # noqa: E402,F401
from .lattice_field import FieldPair, GridSpec, LatticeField  # noqa: E402,F401
