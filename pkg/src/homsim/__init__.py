"""Simulation and analysis of two-photon interference between a laser and a
single-photon stream."""

from homsim.model import CqedParams, ModelParams

__version__ = "0.1.0"

__all__ = ["CqedParams", "ModelParams", "__version__"]
