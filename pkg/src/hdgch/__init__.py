"""Mixed-order HDG discretization of the Cahn-Hilliard equation."""

__version__ = "0.1.0"
