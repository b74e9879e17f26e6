"""
tapermle is a Python library and CLI for exact and covariance-tapered maximum
likelihood estimation of one-dimensional stationary Gaussian processes. It
covers exponential and Matérn covariances, Wendland tapers, banded sparse
likelihoods, an Ornstein-Uhlenbeck fast path and a Monte Carlo harness for
fixed-domain asymptotics.
"""

__version__ = "0.3.0"
