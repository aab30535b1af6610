"""Modelling toolkit for a triply resonant dielectric electro-optic transducer."""

__version__ = "0.1.0"
