"""Top-level imports for the dspike package."""

__version__ = "0.1.0"

from .core import (
    DoubleSpikePrior,
    DspikeError,
    EnsembleData,
    HyperGridSpec,
    InclusionVector,
    WeightVector,
    sample_double_spike_prior,
)
from .sampler import BalanceMode, FixedSigma, InitMode, SamplerConfig, Trace, UnknownSigma, run_chain
from .summaries import summarize_posterior
from . import helpers

__all__ = [
    "__version__", "DoubleSpikePrior", "DspikeError", "EnsembleData", "HyperGridSpec",
    "InclusionVector", "WeightVector", "sample_double_spike_prior", "BalanceMode",
    "FixedSigma", "InitMode", "SamplerConfig", "Trace", "UnknownSigma", "run_chain",
    "summarize_posterior", "helpers",
]
