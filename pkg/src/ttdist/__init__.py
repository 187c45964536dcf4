"""Exact arithmetic on discretized random variables with sparse tensor trains."""

from .arith import (
    add,
    hadamard_power,
    linear_combination,
    multiply,
    scale,
    set_entry_cap,
    shift,
    subtract,
    tt_prod,
    tt_sum,
)
from .core import (
    OpHistory,
    Registry,
    SparseCore,
    TTVariable,
    align,
    enumerate_tt,
    iid,
    leaf,
    memory_doubles,
    stats_report,
)
from .errors import MemoryGuardError, PowerOverflowError, ResourceGuardError, SizeLimitError
from .mixture import (
    DiracMixture,
    dice,
    from_discrete,
    from_gaussian,
    from_samples,
    from_uniform,
    mixture_moment,
    rademacher,
)
from .stats import NegativeVarianceWarning, covariance, mean, moment, variance

__version__ = "0.1.0"
