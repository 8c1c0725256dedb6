"""PINN surrogate engine for BCC-lattice yield stress with a linear-transport
residual constraint, plus the activation sweep and data-synthesis harness."""

__version__ = "0.1.0"
