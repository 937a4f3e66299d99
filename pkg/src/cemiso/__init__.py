"""Per-antenna constant-envelope precoding for the single-user MISO channel.

Submodules
----------
fading       seeded channel draws
doughnut     geometry of the achievable received-signal annulus
precoder     phase solvers that hit a target symbol exactly
capacity     rate expressions, bounds and power-gap formulas
alphabets    ring alphabets and mutual-information estimates
experiments  Monte-Carlo reproductions written as CSV tables
cli          command-line entry point
"""

__version__ = "0.1.0"
