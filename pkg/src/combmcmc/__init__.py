"""Local-search MCMC layers over combinatorial solution sets."""

__version__ = "0.1.0"
