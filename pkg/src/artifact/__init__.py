"""Ising perceptron capacity: replica fixed point, second-moment exponents,
grid verification of the exponent condition and finite-N simulations."""

__version__ = "0.1.0"
