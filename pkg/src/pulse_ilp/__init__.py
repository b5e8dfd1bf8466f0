"""Continuous-time gradient flow with impulse escapes for 0-1 ILP feasibility."""
__version__ = "0.1.0"
