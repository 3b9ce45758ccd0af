"""enzspec: spectral toolkit for epsilon-near-zero core-shell resonators."""

__version__ = "0.1.0"
