"""Probabilistic frequency-hazard engine.

Annual exceedance rates of under-frequency deviation thresholds, computed as a
hazard integral over a loss-source catalogue, an empirical system-state
distribution and two nadir prediction models, under a weighted logic tree.
"""

__version__ = "0.1.0"
