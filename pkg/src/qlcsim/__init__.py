"""Finite-element simulator for Q-tensor liquid-crystal dynamics in an electric field."""

__version__ = "0.1.0"
