"""Sequential discrete-choice modelling of building occupants."""

__version__ = "0.1.0"
