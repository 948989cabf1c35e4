"""Toolkit for the wave-and-shear perturbed two-vortex flow.

Library layout:

- ``systems``: the vector field, its reversing symmetries, planar-map oracles
- ``flow``: adaptive integration with dense output and section events
- ``poincare``: the section return map, inverse, Jacobian, induced involution
- ``orbits``: Newton solving, continuation in the wave amplitude, cascades
- ``manifolds``: invariant-manifold growth, intersections, crisis bisection
- ``chaos``: attractor/repeller sampling, occupancy grids, overlap verdicts
- ``cli``: the ``revmix`` command-line front end
"""

__version__ = "0.1.0"
