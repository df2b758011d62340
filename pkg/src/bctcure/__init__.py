"""Box-Cox transformation cure rate model fitted by a gradient-free
Sequential Quadratic Hamiltonian (SQH) maximizer."""

from .lifetime import WeibullParams, weibull_cdf, weibull_moment_match, weibull_pdf, weibull_quantile
from .model import (
    Dataset,
    Observation,
    ParameterVector,
    box_cox,
    covariate_link,
    cure_rate,
    log_likelihood,
    population_density,
    population_survival,
)
from .sqh import AdmissibleBox, InnerSearchConfig, SqhConfig, SqhResult, sqh_maximize

__version__ = "0.1.0"
