"""Matrix martingale concentration toolkit.

Variance proxies and Freedman-type tail bounds for tensor-driven stochastic
integrals against matrix counting processes and Brownian matrices, plus
seeded Monte Carlo checks of those bounds.
"""

__version__ = "0.1.0"
