"""Linking forms: exterior-calculus kernels, linking numbers and heat asymptotics near curves."""

from .curves import Knot
from .knots_linking import crossing_linking, gauss_linking, torus_linking

__all__ = ["Knot", "gauss_linking", "crossing_linking", "torus_linking"]
