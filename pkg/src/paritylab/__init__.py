"""Tools for studying how weight initialization affects learning of high-degree parities.

Subpackages:

* ``exactcomb``  -- exact signed binomial sums and the delta coupling family
* ``gaussiankit`` -- scalar Gaussian kernels (bivariate CDF, ReLU cross-moments)
* ``alignment``  -- exact and Monte-Carlo gradient-alignment evaluators
* ``nets``       -- networks, initializations, losses and training loops
* ``labcli``     -- experiment recipes, CSV emission and the command line
"""

__version__ = "0.1.0"
