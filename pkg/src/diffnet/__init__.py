"""Distributed adaptive clustering and learning over multi-task networks.

Simulation of coupled adapt-then-combine recursions with an online
clustering test, plus the closed-form steady-state and error-probability
analysis toolbox.
"""

from . import analysis, combination, diffusion, errors, models, network

__version__ = "0.1.0"

__all__ = ["analysis", "combination", "diffusion", "errors", "models", "network", "__version__"]
