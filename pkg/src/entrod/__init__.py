"""Universal densities and entropy-rate estimators.

PPM mixtures over Markov orders for finite alphabets, NPD mixtures over
quantization levels for general finite reference measures, and the
Cesaro-mean conditional estimator with its induced 0-1 loss predictor.
"""

from entrod.core import LogDensity, Sequence, log_sum_exp, tail_weight, weight
from entrod.ppm import (
    PpmParams,
    ppm_conditional_log,
    ppm_oracle_log_density,
    ppm_order_log_density,
    ppm_total_log_density,
    repetition_length,
)

__version__ = "0.1.0"

__all__ = [
    "LogDensity",
    "PpmParams",
    "Sequence",
    "log_sum_exp",
    "ppm_conditional_log",
    "ppm_oracle_log_density",
    "ppm_order_log_density",
    "ppm_total_log_density",
    "repetition_length",
    "tail_weight",
    "weight",
]
