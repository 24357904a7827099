"""Periodic-box solvers for dispersive fluid models with deformation
transport and verification of generalized helicity conservation."""

__version__ = "0.1.0"
