"""Numerical experiments on wave and heat dynamics of perturbed metrics on
noncompact ends.

Everything runs on one-dimensional mode reductions of warped-product ends
(hyperbolic cusps and cylinders) glued to an interval core.
"""

__version__ = "0.1.0"
