"""Bowen-Series boundary dynamics and Ruelle transfer operators.

A numerical laboratory for co-compact Fuchsian groups: it builds the
boundary expanding maps of a fundamental polygon, discretizes the
complex Ruelle transfer operator on the critical line, locates
parameters where 1 is an eigenvalue, and verifies that the Gromov
involution kernel carries the dual eigenvectors (Helgason boundary
distributions) back to eigenfunctions of the operator.
"""

__version__ = "0.1.0"
