"""Nonintersecting Brownian bridges, their mid-time Coulomb gas and its Tracy-Widom/sine limits."""

__version__ = "0.1.0"
