"""Finite-rank self-adjoint perturbations studied through matrix spectral measures."""

__version__ = "0.1.0"
