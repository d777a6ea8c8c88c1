"""Two-level P1/P0 finite elements for constrained Stokes Dirichlet
boundary control."""

__version__ = "0.1.0"
