"""Numerical laboratory for vertical-plane rectifiability in parabolic space and the Heisenberg group."""
__version__ = "0.1.0"
