"""Maximal causal curves and Filippov geodesics for Lipschitz Lorentzian metrics."""

__version__ = "0.1.0"
