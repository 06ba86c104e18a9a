"""Spectral solvers and checks for the mean-field limit of weakly interacting bosons."""

__version__ = "0.1.0"
