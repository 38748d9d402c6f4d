"""Second-order correlation analysis of time-tagged fringe events under phase perturbations."""
from .errors import FitError, FringecorrError, InvalidInputError, NoSolutionError, NumericalError
from .model import (AmplitudeSpectrum, CorrelationGrid, EventSet, FringeModel, Multiplet,
                    PerturbationSpec, ToneComponent, evaluate_perturbation)

__version__ = "0.1.0"

__all__ = [
    "AmplitudeSpectrum", "CorrelationGrid", "EventSet", "FitError", "FringeModel",
    "FringecorrError", "InvalidInputError", "Multiplet", "NoSolutionError", "NumericalError",
    "PerturbationSpec", "ToneComponent", "evaluate_perturbation",
]
