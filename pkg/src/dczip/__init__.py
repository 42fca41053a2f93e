"""Community detection in sparse count-weighted directed networks with a
degree-corrected zero-inflated Poisson block model."""
from dczip.errors import DataError, NumericalError
from dczip.model import (
    LOG_ZERO,
    BlockParams,
    Partition,
    WeightedDigraph,
    complete_log_likelihood,
    expected_strengths,
    sample_network,
    zip_log_pmf,
)

__version__ = "0.1.0"
