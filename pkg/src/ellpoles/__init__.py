"""Pole dynamics of elliptic solutions to KP, BKP, Novikov-Veselov and 2D Toda."""
__version__ = "0.1.0"
