"""nfdmsim: a desk-scale numerical laboratory for NFDM optical transmission."""

from .signals import NonlinearSpectrum, ScatteringCoefficients, TimeSignal

__all__ = ["TimeSignal", "NonlinearSpectrum", "ScatteringCoefficients"]
__version__ = "0.1.0"
