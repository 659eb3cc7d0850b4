"""Monte Carlo transport toolkit for spatially correlated participating media."""

from corrtrans.models import (
    DirectionalVariance,
    ExponentialModel,
    ExtinctionCurve,
    GammaConcentrationModel,
    GammaPathLengthModel,
    LinearNegativeModel,
    MixtureComponent,
    MixtureModel,
    concentration_model,
    model_from_spec,
)

__version__ = "0.1.0"

__all__ = [
    "DirectionalVariance",
    "ExponentialModel",
    "ExtinctionCurve",
    "GammaConcentrationModel",
    "GammaPathLengthModel",
    "LinearNegativeModel",
    "MixtureComponent",
    "MixtureModel",
    "concentration_model",
    "model_from_spec",
    "__version__",
]
