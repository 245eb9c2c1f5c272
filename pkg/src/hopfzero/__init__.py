"""Hopf-zero averaging and torus toolkit for the FitzHugh-Nagumo system."""
__version__ = "0.1.0"
