"""Numerics for the fractional Lane-Emden type problem with a Dirac exterior datum on a ball.

Modules: constants (normalisation and symbol constants), geometry (balls,
graded meshes), kernels (Green, Poisson and source kernels), fracop
(pointwise fractional Laplacian), greenop (dense Green matrix and cache),
solver (semilinear solves and diagnostics), experiments and cli.
"""

__version__ = "0.1.0"
