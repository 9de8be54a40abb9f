"""Outage, throughput and rate selection for HARQ-aided terahertz links."""

__version__ = "0.1.0"

from .channel import (  # noqa: E402
    ChannelParams,
    LinkParams,
    PointingDerived,
    composite_cdf,
    composite_pdf,
    path_gain,
    pointing_derived,
    sample_composite,
)
from .errors import (  # noqa: E402
    ConfigError,
    ContourPlacementError,
    ConvergenceError,
    InfeasibleError,
    PoleError,
    ThzHarqError,
)
from .outage import (  # noqa: E402
    AsymptoticBreakdown,
    HarqConfig,
    Scheme,
    diversity_order,
    outage_asymptotic,
    outage_exact_ir,
)
from .specfun import AbateWhittConfig, ContourConfig  # noqa: E402
