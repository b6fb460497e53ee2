"""Posted-price mechanisms for goods with externalities."""

from .distributions import ComplementPower, PiecewiseLinear, ShiftedPower, Uniform
from .errors import (
    ConsistencyError,
    DomainError,
    NonConvergenceError,
    ScenarioError,
    SocialGoodsError,
    UnsupportedError,
)
from .scenario import (
    Adaptive,
    Anonymous,
    AvailabilityBased,
    CountIndexed,
    Full,
    NetworkBased,
    Scenario,
    Sequential,
    Simple,
    Simultaneous,
    StatusBased,
    TwoTier,
    load_scenario,
    save_scenario,
)

__version__ = "0.1.0"
